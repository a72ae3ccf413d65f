#pragma once

// Exception hierarchy shared by every module. Callers that need to map
// failures onto exit codes or HTTP statuses switch on `kind()`.

#include <stdexcept>
#include <string>

namespace lap {

enum class ErrorKind {
    domain,          // argument outside the mathematical domain
    infeasible,      // elicited answers admit no solution
    config,          // malformed model / belief / session input
    ingestion,       // malformed data file
    not_found,
    not_positive_definite,
    initialization,
    adaptation,
    numerical,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

    /// True for faults in what the caller supplied (bad flags, bad files,
    /// inconsistent answers) as opposed to failures of the numerics.
    bool is_input_error() const noexcept {
        switch (kind_) {
        case ErrorKind::domain:
        case ErrorKind::infeasible:
        case ErrorKind::config:
        case ErrorKind::ingestion:
        case ErrorKind::not_found:
            return true;
        default:
            return false;
        }
    }

private:
    ErrorKind kind_;
};

inline Error domain_error(const std::string& what) { return {ErrorKind::domain, what}; }
inline Error config_error(const std::string& what) { return {ErrorKind::config, what}; }
inline Error numerical_error(const std::string& what) { return {ErrorKind::numerical, what}; }

}  // namespace lap
