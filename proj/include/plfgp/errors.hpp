#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace plfgp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed case or config text. `line` is 1-based, 0 when unknown.
class SyntaxError : public Error {
public:
    SyntaxError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class SemanticError : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class UnknownBus : public Error {
public:
    explicit UnknownBus(int bus) : Error("unknown bus id " + std::to_string(bus)), bus_(bus) {}
    int bus() const noexcept { return bus_; }

private:
    int bus_;
};

/// Newton-Raphson hit its iteration cap. Carries the smallest mismatch seen.
class NonConvergence : public Error {
public:
    NonConvergence(int iterations, double best_mismatch)
        : Error("power flow did not converge in " + std::to_string(iterations) +
                " iterations (best mismatch " + std::to_string(best_mismatch) + " pu)"),
          iterations_(iterations),
          best_mismatch_(best_mismatch) {}
    int iterations() const noexcept { return iterations_; }
    double best_mismatch() const noexcept { return best_mismatch_; }

private:
    int iterations_;
    double best_mismatch_;
};

class SingularJacobian : public Error {
public:
    using Error::Error;
};

class FactorizationFailure : public Error {
public:
    using Error::Error;
};

class EmptyCandidateSet : public Error {
public:
    EmptyCandidateSet() : Error("candidate set is empty") {}
};

class RejectionStall : public Error {
public:
    using Error::Error;
};

class ExcessiveFailures : public Error {
public:
    ExcessiveFailures(std::size_t failures, std::size_t total)
        : Error(std::to_string(failures) + " of " + std::to_string(total) +
                " power flow samples failed to converge"),
          failures_(failures),
          total_(total) {}
    std::size_t failures() const noexcept { return failures_; }
    std::size_t total() const noexcept { return total_; }

private:
    std::size_t failures_;
    std::size_t total_;
};

/// Invalid study configuration; message carries the field and source line.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace plfgp
