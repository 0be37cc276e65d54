#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mml {

// Base of every error raised by the library. Each failure mode named by the
// public API has its own subclass so callers can catch precisely.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NonPositiveEntry : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class NonSquare : public Error {
public:
    using Error::Error;
};

class NoConvergence : public Error {
public:
    NoConvergence(std::size_t iters, double residual)
        : Error("sinkhorn did not converge after " + std::to_string(iters) +
                " iterations (residual " + std::to_string(residual) + ")"),
          iters_(iters), residual_(residual) {}

    std::size_t iterations() const noexcept { return iters_; }
    double last_residual() const noexcept { return residual_; }

private:
    std::size_t iters_;
    double residual_;
};

// Raised on an exact tie between latent values. Ties have probability zero
// under the model; the caller should draw a fresh seed.
class DuplicateValue : public Error {
public:
    using Error::Error;
};

class TooLarge : public Error {
public:
    TooLarge(const std::string& what, std::size_t n, std::size_t limit)
        : Error(what + ": n = " + std::to_string(n) + " exceeds limit " +
                std::to_string(limit)) {}
};

class DeltaOutOfRange : public Error {
public:
    using Error::Error;
};

class EmptySample : public Error {
public:
    using Error::Error;
};

class NonPositiveRate : public Error {
public:
    using Error::Error;
};

class DegenerateSample : public Error {
public:
    using Error::Error;
};

class NotNormalized : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    ConfigError(const std::string& field, const std::string& message)
        : Error("config field '" + field + "': " + message), field_(field) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace mml
