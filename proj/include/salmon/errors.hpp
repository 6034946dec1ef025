#pragma once

#include <stdexcept>
#include <string>

namespace salmon {

/// Base class for every error raised by the library. `code()` is a stable,
/// machine-parsable identifier used by the CLI and the HTTP service.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
            : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

/// Argument outside the mathematical domain of a kernel.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error("E_DOMAIN", what) {}
};

/// Malformed or inconsistent user input (data files, configs, policies).
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error("E_VALIDATION", what) {}
};

/// MCMC failed a convergence gate.
class ConvergenceError : public Error {
public:
    explicit ConvergenceError(const std::string& what) : Error("E_CONVERGENCE", what) {}
};

/// Chain could not start because the initial point has zero posterior density.
class InitializationError : public Error {
public:
    explicit InitializationError(const std::string& what) : Error("E_INIT", what) {}
};

/// Request for a stock, policy or parameter that does not exist.
class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& what) : Error("E_NOT_FOUND", what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("E_IO", what) {}
};

/// Broken internal invariant; indicates a bug rather than bad input.
class InternalError : public Error {
public:
    explicit InternalError(const std::string& what) : Error("E_INTERNAL", what) {}
};

}  // namespace salmon
