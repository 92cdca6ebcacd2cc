#pragma once

#include <stdexcept>
#include <string>

namespace mismatch_lasso {

// Invalid scalar parameter (non-positive scale, empty sample, bad count).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Shapes of matrices/vectors do not agree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Requested (distribution, model) or (set, operation) combination has no
// implementation. Raised instead of silently falling back to Monte Carlo.
class UnsupportedError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// The constraint fiber of a target construction is empty (up to tolerance).
class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(const std::string& what, double residual)
        : std::runtime_error(what + " (best residual " + std::to_string(residual) + ")"),
          residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

// Malformed experiment configuration; `field` names the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const char* msg) {
    if (!cond) throw ParameterError(msg);
}

inline void require_dims(bool cond, const std::string& msg) {
    if (!cond) throw DimensionError(msg);
}

}  // namespace detail

}  // namespace mismatch_lasso
