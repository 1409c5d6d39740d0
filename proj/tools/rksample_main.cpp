// rksample: sampling recovery in reproducing kernel Hilbert spaces.
// Subcommands wire the library modules to files and seeds; every successful
// run writes a manifest that is itself a valid --config file, so runs are
// reproducible bit for bit.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or invalid model,
// 3 rank or certification failure, 4 truncation failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "rksample/concentration.hpp"
#include "rksample/density.hpp"
#include "rksample/errors.hpp"
#include "rksample/io.hpp"
#include "rksample/leastsq.hpp"
#include "rksample/pipeline.hpp"
#include "rksample/rng.hpp"
#include "rksample/spectrum.hpp"
#include "rksample/version.hpp"
#include "rksample/weaver.hpp"

namespace {

using namespace rksample;

struct ModelFlags {
    std::string model = "torus";
    int d = 1;
    double s = 1.0;
    std::vector<double> sigma;
    std::string sigma_file;
    double geometric = 0.0;
    std::size_t geometric_count = 64;
};

void add_model_flags(CLI::App* cmd, ModelFlags& mf) {
    cmd->add_option("--model", mf.model, "kernel model: torus | legendre")
        ->check(CLI::IsMember({"torus", "legendre"}))
        ->capture_default_str();
    cmd->add_option("--d", mf.d, "torus dimension")->capture_default_str();
    cmd->add_option("--s", mf.s, "torus smoothness (s > 1/2)")->capture_default_str();
    cmd->add_option("--sigma", mf.sigma, "legendre singular numbers, comma separated")
        ->delimiter(',');
    cmd->add_option("--sigma-file", mf.sigma_file, "legendre singular numbers, one per line");
    cmd->add_option("--geometric", mf.geometric, "legendre geometric spectrum ratio in (0,1)");
    cmd->add_option("--geometric-count", mf.geometric_count, "length of the geometric spectrum")
        ->capture_default_str();
}

KernelModel resolve_model(const ModelFlags& mf) {
    if (mf.model == "torus") {
        TorusMixedSobolev t;
        t.dimension = mf.d;
        t.smoothness = mf.s;
        return t;
    }
    LegendreSpectrum spec;
    if (!mf.sigma.empty()) {
        spec.sigma = mf.sigma;
    } else if (!mf.sigma_file.empty()) {
        std::ifstream in(mf.sigma_file);
        if (!in) throw invalid_model_error("cannot open sigma file: " + mf.sigma_file);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            spec.sigma.push_back(parse_double(line));
        }
    } else if (mf.geometric > 0.0) {
        spec.sigma = LegendreSpectrum::geometric(mf.geometric,
                                                 static_cast<int>(mf.geometric_count)).sigma;
    } else {
        throw invalid_model_error("legendre model needs --sigma, --sigma-file, or --geometric");
    }
    return spec;
}

/// Retained spectrum length for a subcommand that works at order m.
std::size_t basis_count_for(const KernelModel& model, std::size_t need) {
    if (std::holds_alternative<TorusMixedSobolev>(model)) return need;
    return std::get<LegendreSpectrum>(model).sigma.size();
}

std::ostream& resolve_out(const std::string& path, std::ofstream& file) {
    if (path.empty()) return std::cout;
    file.open(path);
    if (!file) throw range_error("cannot write file: " + path);
    return file;
}

/// f = sum c_k e_k given as "k:re[:im],k:re[:im],..." with 1-based k.
std::vector<std::pair<std::size_t, Complex>> parse_function_spec(const std::string& spec) {
    std::vector<std::pair<std::size_t, Complex>> terms;
    for (const std::string& entry : split(spec, ',')) {
        if (entry.empty()) continue;
        const auto fields = split(entry, ':');
        if (fields.size() < 2 || fields.size() > 3)
            throw range_error("--function entries are k:re or k:re:im, got '" + entry + "'");
        const long long k = parse_int(fields[0]);
        if (k < 1) throw range_error("--function basis index must be >= 1");
        const double re = parse_double(fields[1]);
        const double im = fields.size() == 3 ? parse_double(fields[2]) : 0.0;
        terms.emplace_back(static_cast<std::size_t>(k), Complex(re, im));
    }
    if (terms.empty()) throw range_error("--function spec is empty");
    return terms;
}

bool needs_quoting(const std::string& v) {
    if (v.empty()) return true;
    return v.find_first_of(" \t,;:#[]\"") != std::string::npos;
}

/// Manifest: resolved values of the used subcommand as an INI section the
/// top-level --config understands, plus the artifact version.
void write_manifest(const CLI::App& app, const CLI::App* sub, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw range_error("cannot write manifest: " + path);
    const auto emit = [&](const CLI::Option* opt) {
        if (!opt->get_configurable()) return;
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "config" || name == "help" || name == "version") return;
        std::vector<std::string> values = opt->results();
        if (values.empty()) {
            if (opt->get_expected_min() == 0) { // flag
                out << name << " = false\n";
                return;
            }
            const std::string d = opt->get_default_str();
            if (d.empty()) return; // unset optional: resolved value is the empty default
            values.push_back(d);
        } else if (opt->get_expected_min() == 0) {
            out << name << " = true\n";
            return;
        }
        out << name << " =";
        for (const std::string& v : values) {
            out << ' ';
            if (needs_quoting(v))
                out << '"' << v << '"';
            else
                out << v;
        }
        out << '\n';
    };
    for (const CLI::Option* opt : app.get_options()) emit(opt);
    out << '[' << sub->get_name() << "]\n";
    for (const CLI::Option* opt : sub->get_options()) emit(opt);
}

struct CommonOut {
    std::string out;
};

int run_spectrum(const ModelFlags& mf, std::size_t count, const CommonOut& co) {
    const KernelModel model = resolve_model(mf);
    const SpectralBasis basis = enumerate_spectrum(model, count);
    std::ofstream file;
    write_spectrum_csv(basis, resolve_out(co.out, file));
    return 0;
}

int run_sample(const ModelFlags& mf, std::size_t m, std::size_t n, uint64_t seed,
               const CommonOut& co, const std::string& frame_out) {
    const KernelModel model = resolve_model(mf);
    const SpectralBasis basis = enumerate_spectrum(model, basis_count_for(model, m + 1));
    const SamplingDensity density = make_density(basis, m);
    const NodeSet nodes = draw_nodes(density, n, seed);
    std::ofstream file;
    write_nodes_csv(nodes, resolve_out(co.out, file));
    if (!frame_out.empty()) {
        const FrameMatrix L = build_matrix(basis, nodes, m, /*weighted=*/true);
        FiniteFrame f;
        f.vectors = L.entries;
        std::ofstream ff(frame_out);
        if (!ff) throw range_error("cannot write file: " + frame_out);
        write_frame_csv(f, ff);
    }
    return 0;
}

int run_certify(const ModelFlags& mf, std::size_t m, std::size_t n, double r,
                std::size_t trials, uint64_t seed, int jobs, const CommonOut& co,
                const std::string& trials_csv) {
    const KernelModel model = resolve_model(mf);
    const SpectralBasis basis = enumerate_spectrum(model, basis_count_for(model, m + 1));
    const FrameTrialSummary summary = run_frame_trials(basis, m, n, r, trials, seed, jobs);

    double worst_min = std::numeric_limits<double>::infinity();
    double worst_max = 0.0;
    for (const auto& [lo, hi] : summary.extremal) {
        worst_min = std::min(worst_min, lo);
        worst_max = std::max(worst_max, hi);
    }
    nlohmann::json j;
    j["m"] = m;
    j["n"] = n;
    j["r"] = r;
    j["trials"] = summary.trials;
    j["failures"] = summary.failures;
    j["failure_fraction"] =
        static_cast<double>(summary.failures) / static_cast<double>(summary.trials);
    j["failure_bound"] = r / static_cast<double>(n); ///< r/n from the concentration statement
    j["eigen_min_worst"] = worst_min;
    j["eigen_max_worst"] = worst_max;
    j["condition_ok"] = check_condition(m, n, r, spectral_function_N(basis, m));
    j["seed"] = seed;
    std::ofstream file;
    resolve_out(co.out, file) << j.dump(2) << '\n';
    if (!trials_csv.empty()) {
        std::ofstream tc(trials_csv);
        if (!tc) throw range_error("cannot write file: " + trials_csv);
        tc << "trial,eigen_min,eigen_max,passed\n";
        for (std::size_t t = 0; t < summary.extremal.size(); ++t) {
            const auto& [lo, hi] = summary.extremal[t];
            tc << t << ',' << format_double(lo) << ',' << format_double(hi) << ','
               << (lo > 0.5 && hi < 1.5 ? 1 : 0) << '\n';
        }
    }
    if (summary.failures == summary.trials)
        throw rank_error("every trial failed frame certification");
    return 0;
}

int run_subsample(const std::string& input, const std::string& method, double k1, double k2,
                  double k3, std::size_t target, uint64_t seed, int jobs,
                  std::size_t brute_limit, const CommonOut& co) {
    std::ifstream in(input);
    if (!in) throw range_error("cannot open frame file: " + input);
    const FiniteFrame frame = read_frame_csv(in);
    const std::size_t m = frame.dim();

    SubsampleResult res;
    if (method == "brute") {
        const PartitionResult part = brute_force_partition(frame, jobs);
        res.method = SubsampleMethod::BruteForcePartition;
        res.J = part.bounds1.second <= part.bounds2.second ? part.S1 : part.S2;
        res.budget = constant_budget(
            k1, k2, k3, static_cast<double>(frame.size()) / static_cast<double>(m));
        certify_subsample(res, frame, m);
        std::cout << "feasible = " << (part.feasible ? "true" : "false") << '\n';
        std::cout << "lower_bound = " << format_double(part.lower_bound) << '\n';
        std::cout << "upper_bound = " << format_double(part.upper_bound) << '\n';
        std::cout << "class1_bounds = " << format_double(part.bounds1.first) << ' '
                  << format_double(part.bounds1.second) << '\n';
        std::cout << "class2_bounds = " << format_double(part.bounds2.first) << ' '
                  << format_double(part.bounds2.second) << '\n';
    } else if (method == "halving") {
        HalvingOptions opts;
        opts.seed = seed;
        opts.jobs = jobs;
        opts.brute_force_limit = brute_limit;
        res = recursive_halving(frame, k1, k2, k3, m, opts);
    } else {
        res = barrier_greedy_subsample(frame, target ? target : 4 * m);
    }

    std::cout << "method = " << to_string(res.method) << '\n';
    std::cout << "n = " << frame.size() << '\n';
    std::cout << "m = " << m << '\n';
    std::cout << "J_size = " << res.J.size() << '\n';
    std::cout << "lambda_min = " << format_double(res.achieved_bounds.first) << '\n';
    std::cout << "lambda_max = " << format_double(res.achieved_bounds.second) << '\n';
    std::cout << "budget_c1 = " << format_double(res.budget.c1) << '\n';
    std::cout << "budget_c2 = " << format_double(res.budget.c2) << '\n';
    std::cout << "budget_c3 = " << format_double(res.budget.c3) << '\n';
    std::cout << "regime = " << to_string(res.budget.regime) << '\n';
    std::cout << "certified = " << (res.certified ? "true" : "false") << '\n';
    if (res.search_failure) std::cout << "search_failure = true\n";
    if (!res.note.empty()) std::cout << "note = " << res.note << '\n';
    std::cout << "J =";
    for (std::size_t i : res.J) std::cout << ' ' << i;
    std::cout << '\n';
    if (!co.out.empty()) {
        std::ofstream file(co.out);
        if (!file) throw range_error("cannot write file: " + co.out);
        for (std::size_t i : res.J) file << i << '\n';
    }
    return 0;
}

int run_recover(const ModelFlags& mf, std::size_t m, std::size_t n, uint64_t seed,
                const std::string& function, const CommonOut& co) {
    const KernelModel model = resolve_model(mf);
    const auto terms = parse_function_spec(function);
    std::size_t need = m + 1;
    for (const auto& [k, c] : terms) need = std::max(need, k);
    const SpectralBasis basis = enumerate_spectrum(model, basis_count_for(model, need));
    for (const auto& [k, c] : terms)
        if (k > basis.count()) throw range_error("--function index beyond retained spectrum");

    const SamplingDensity density = make_density(basis, m);
    const NodeSet nodes = draw_nodes(density, n, seed);
    const RecoveryOperator op(basis, nodes, m);
    CVec samples = CVec::Zero(n);
    for (std::size_t j = 0; j < n; ++j)
        for (const auto& [k, c] : terms) samples(j) += c * basis.eval(k, nodes.node(j));
    const CVec coef = op.apply(samples);

    const FrameMatrix L = build_matrix(basis, op.nodes(), m, /*weighted=*/true);
    const double residual = (L.entries * coef - op.weight_samples(samples)).norm();

    std::ofstream file;
    std::ostream& out = resolve_out(co.out, file);
    out << "k,re,im\n";
    for (std::size_t k = 0; k + 1 < m; ++k)
        out << (k + 1) << ',' << format_double(coef(k).real()) << ','
            << format_double(coef(k).imag()) << '\n';
    out << "residual," << format_double(residual) << ",0\n";
    return 0;
}

int run_rate(const ModelFlags& mf, const std::vector<std::size_t>& m_grid,
             const std::string& method, std::size_t trials, double r, uint64_t seed, int jobs,
             std::size_t m_trunc, const CommonOut& co, const std::string& svg) {
    const KernelModel model = resolve_model(mf);
    ExperimentOptions opts;
    opts.r = r;
    opts.M_trunc = m_trunc;
    std::vector<ErrorReport> reports =
        run_rate_grid(model, m_grid, recovery_method_from_string(method), r, trials, seed, opts,
                      jobs);
    std::sort(reports.begin(), reports.end(), [](const ErrorReport& a, const ErrorReport& b) {
        return std::tie(a.m, a.n_used, a.seed) < std::tie(b.m, b.n_used, b.seed);
    });
    std::ofstream file;
    write_results_csv(reports, resolve_out(co.out, file));
    if (!svg.empty()) {
        std::ofstream sf(svg);
        if (!sf) throw range_error("cannot write file: " + svg);
        write_rate_svg(reports, sf);
    }
    try {
        const RateFit fit = fit_rate(reports, mf.s, mf.d);
        std::cerr << "slope = " << format_double(fit.slope) << '\n';
        std::cerr << "rms_residual = " << format_double(fit.rms_residual) << '\n';
    } catch (const experiment_error& e) {
        std::cerr << "fit skipped: " << e.what() << '\n';
    }
    return 0;
}

int run_constants(double tolerance, const CommonOut& co) {
    const RemarkConstantChain chain = remark_constant_chain();
    const GammaProduct gamma = gamma_product(tolerance);
    std::ofstream file;
    std::ostream& out = resolve_out(co.out, file);
    out << "n_of_2 = " << chain.n_of_2 << '\n';
    out << "kappa = " << format_double(chain.kappa) << '\n';
    out << "prob_sum = " << format_double(chain.prob_sum) << '\n';
    out << "c1 = " << format_double(chain.c1) << '\n';
    out << "c2 = " << format_double(chain.c2) << '\n';
    out << "C2 = " << format_double(chain.C2) << '\n';
    out << "c3 = " << format_double(chain.c3) << '\n';
    out << "c4 = " << format_double(chain.c4) << '\n';
    out << "theta = " << format_double(chain.theta) << '\n';
    out << "c5 = " << format_double(chain.c5) << '\n';
    out << "c1_tilde = " << format_double(chain.c1_tilde) << '\n';
    out << "c3_tilde = " << format_double(chain.c3_tilde) << '\n';
    out << "two_c1_tilde = " << format_double(chain.two_c1_tilde) << '\n';
    out << "big_C = " << format_double(chain.big_C) << '\n';
    out << "small_c = " << format_double(chain.small_c) << '\n';
    out << "all_brackets_hold = " << (chain.all_brackets_hold ? "true" : "false") << '\n';
    out << "gamma_value = " << format_double(gamma.value) << '\n';
    out << "gamma_remainder = " << format_double(gamma.remainder) << '\n';
    out << "gamma_upper = " << format_double(gamma.value + gamma.remainder) << '\n';
    const ConstantBudget large = constant_budget(2.0, 0.5, 1.5, 188.0);
    out << "large_c1 = " << format_double(large.c1) << '\n';
    out << "large_c2 = " << format_double(large.c2) << '\n';
    out << "large_c3 = " << format_double(large.c3) << '\n';
    const ConstantBudget small = constant_budget(2.0, 0.5, 1.5, 8.0);
    out << "small_c1 = " << format_double(small.c1) << '\n';
    out << "small_c2 = " << format_double(small.c2) << '\n';
    out << "small_c3 = " << format_double(small.c3) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sampling recovery in reproducing kernel Hilbert spaces"};
    app.set_version_flag("--version", std::string(rksample::version_string));
    app.set_config("--config", "", "key-value config file; flags override");
    app.require_subcommand(1);
    std::string manifest;
    app.add_option("--manifest", manifest, "manifest path (default: derived from --out)");
    std::string artifact_version{rksample::version_string};
    app.add_option("--artifact-version", artifact_version)->group("");

    ModelFlags mf;
    CommonOut co;
    std::size_t m = 2, n = 4, count = 8, trials = 1, target = 0, brute_limit = 14, m_trunc = 0;
    uint64_t seed = 0;
    double r = 2.0, k1 = 2.0, k2 = 0.5, k3 = 1.5, tolerance = 1e-10;
    int jobs = 1;
    std::string frame_out, trials_csv, input, method, function, svg;
    std::string rate_out = "results.csv"; // rate alone defaults to a file, not stdout
    std::vector<std::size_t> m_grid;

    const auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "RNG seed (env RKSAMPLE_SEED)")
            ->envname("RKSAMPLE_SEED")
            ->capture_default_str();
    };
    const auto add_out = [&](CLI::App* cmd, const char* what) {
        cmd->add_option("--out", co.out, what)->capture_default_str();
    };

    CLI::App* sp = app.add_subcommand("spectrum", "export the retained spectrum as CSV");
    sp->configurable();
    add_model_flags(sp, mf);
    sp->add_option("--count", count, "number of retained eigenvalues")->required();
    add_out(sp, "CSV path (default stdout)");

    CLI::App* sa = app.add_subcommand("sample", "draw nodes from the sampling density");
    sa->configurable();
    add_model_flags(sa, mf);
    sa->add_option("--m", m, "recovery order")->required();
    sa->add_option("--n", n, "number of nodes")->required();
    add_seed(sa);
    add_out(sa, "nodes CSV path (default stdout)");
    sa->add_option("--frame-out", frame_out, "also export the weighted matrix as frame CSV");

    CLI::App* ce = app.add_subcommand("certify", "Monte Carlo frame certification trials");
    ce->configurable();
    add_model_flags(ce, mf);
    ce->add_option("--m", m, "recovery order")->required();
    ce->add_option("--n", n, "nodes per trial")->required();
    ce->add_option("--r", r, "confidence exponent (r > 1)")->capture_default_str();
    ce->add_option("--trials", trials, "number of independent trials")->capture_default_str();
    add_seed(ce);
    ce->add_option("--jobs", jobs, "worker threads")->capture_default_str();
    add_out(ce, "report path (default stdout)");
    ce->add_option("--trials-csv", trials_csv, "per-trial extremal eigenvalue CSV");

    CLI::App* su = app.add_subcommand("subsample", "subsample a finite frame");
    su->configurable();
    su->add_option("--input", input, "frame CSV, one row per vector, re,im pairs")->required();
    su->add_option("--method", method, "brute | halving | greedy")
        ->check(CLI::IsMember({"brute", "halving", "greedy"}))
        ->required();
    su->add_option("--k1", k1, "norm budget k1")->capture_default_str();
    su->add_option("--k2", k2, "lower frame budget k2")->capture_default_str();
    su->add_option("--k3", k3, "upper frame budget k3")->capture_default_str();
    su->add_option("--target", target, "greedy target size (0 = 4m)")->capture_default_str();
    add_seed(su);
    su->add_option("--jobs", jobs, "worker threads")->capture_default_str();
    su->add_option("--brute-limit", brute_limit, "exact partition size limit")
        ->capture_default_str();
    add_out(su, "write kept indices, one per line");

    CLI::App* re = app.add_subcommand("recover", "least-squares recovery of a test function");
    re->configurable();
    add_model_flags(re, mf);
    re->add_option("--m", m, "recovery order")->required();
    re->add_option("--n", n, "number of nodes")->required();
    add_seed(re);
    re->add_option("--function", function, "f = sum c_k e_k as k:re[:im],k:re[:im],...")
        ->required();
    add_out(re, "coefficient CSV path (default stdout)");

    CLI::App* ra = app.add_subcommand("rate", "error-rate experiment over an m grid");
    ra->configurable();
    add_model_flags(ra, mf);
    ra->add_option("--m-grid", m_grid, "recovery orders, comma separated")
        ->delimiter(',')
        ->required();
    ra->add_option("--method", method, "RandomOnly | RandomThenSubsample")
        ->check(CLI::IsMember({"RandomOnly", "RandomThenSubsample"}))
        ->required();
    ra->add_option("--trials", trials, "seeds per order")->default_val(std::size_t{3});
    ra->add_option("--r", r, "confidence exponent")->capture_default_str();
    add_seed(ra);
    ra->add_option("--jobs", jobs, "worker threads")->capture_default_str();
    ra->add_option("--m-trunc", m_trunc, "truncation order override (0 = auto)")
        ->capture_default_str();
    ra->add_option("--out", rate_out, "results CSV path")->capture_default_str();
    ra->add_option("--svg", svg, "log-log plot SVG path");

    CLI::App* cn = app.add_subcommand("constants", "print the full constant ledger");
    cn->configurable();
    cn->add_option("--tolerance", tolerance, "gamma product remainder tolerance")
        ->capture_default_str();
    add_out(cn, "ledger path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        int status = 0;
        if (sub == sp) status = run_spectrum(mf, count, co);
        else if (sub == sa) status = run_sample(mf, m, n, seed, co, frame_out);
        else if (sub == ce) status = run_certify(mf, m, n, r, trials, seed, jobs, co, trials_csv);
        else if (sub == su)
            status = run_subsample(input, method, k1, k2, k3, target, seed, jobs, brute_limit, co);
        else if (sub == re) status = run_recover(mf, m, n, seed, function, co);
        else if (sub == ra)
            status = run_rate(mf, m_grid, method, trials, r, seed, jobs, m_trunc,
                              CommonOut{rate_out}, svg);
        else status = run_constants(tolerance, co);

        const std::string& eff_out = sub == ra ? rate_out : co.out;
        std::string mpath = manifest;
        if (mpath.empty()) mpath = eff_out.empty() ? sub->get_name() + ".manifest" : eff_out + ".manifest";
        write_manifest(app, sub, mpath);
        return status;
    } catch (const invalid_model_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const range_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const rank_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const precondition_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const budget_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const truncation_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
