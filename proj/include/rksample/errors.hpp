#pragma once

#include <stdexcept>
#include <string>

namespace rksample {

/// Invalid model parameters (e.g. torus smoothness <= 1/2, non-monotone sigma).
class invalid_model_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Argument outside the documented range of an operation.
class range_error : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Least-squares matrix numerically rank deficient; the frame event failed.
class rank_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A tail truncation could not be certified within tolerance.
class truncation_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Exhaustive search requested beyond its budget (brute-force partition).
class budget_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A proof-branch precondition does not hold (e.g. delta >= (2zeta)^-2 k2).
class precondition_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Internal consistency violated (e.g. rejection envelope exceeded).
class internal_error : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Experiment-level failure (e.g. too many certification retries).
class experiment_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace rksample
