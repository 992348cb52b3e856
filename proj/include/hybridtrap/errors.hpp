#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace hybridtrap {

/// Configuration or argument rejected before any simulation work starts.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<std::string> problems);
    explicit ValidationError(const std::string& problem) : ValidationError(std::vector<std::string>{problem}) {}

    [[nodiscard]] const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

/// Numerical failure during time stepping (non-finite state, unstable parameters).
class IntegrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Fit, calibration, or search procedure that did not converge or lacks signal.
class AnalysisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hybridtrap
