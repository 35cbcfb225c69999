#pragma once

#include <stdexcept>
#include <string>

namespace pbn {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller broke a documented precondition (shape mismatch, bad index).
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of the operation.
class DomainError : public Error {
public:
    using Error::Error;
};

namespace detail {
inline std::string with_layer(const std::string& what, int layer) {
    return layer >= 0 ? what + " (layer " + std::to_string(layer + 1) + ")" : what;
}
}  // namespace detail

/// Weighted Gram matrix is numerically singular. `layer` is zero-based, -1 if unknown.
class SingularityError : public Error {
public:
    explicit SingularityError(std::string reason, int layer = -1)
        : Error(detail::with_layer(reason, layer)), reason_(std::move(reason)), layer_(layer) {}
    int layer() const noexcept { return layer_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::string reason_;
    int layer_;
};

/// The saddle-point equation could not be solved. This is the empirical face
/// of a sampling efficiency below one.
class ReconstructionFailure : public Error {
public:
    explicit ReconstructionFailure(std::string reason, int layer = -1)
        : Error(detail::with_layer(reason, layer)), reason_(std::move(reason)), layer_(layer) {}
    int layer() const noexcept { return layer_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::string reason_;
    int layer_;
};

/// The projected likelihood is undefined for a sample at some layer.
class LikelihoodUndefined : public Error {
public:
    LikelihoodUndefined(const std::string& reason, int layer)
        : Error(detail::with_layer("likelihood undefined: " + reason, layer)), layer_(layer) {}
    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

/// No label hypothesis yields a defined likelihood.
class Unclassifiable : public Error {
public:
    using Error::Error;
};

/// Bad input data: unreadable audio, wrong sample rate, short class counts.
class IngestionError : public Error {
public:
    using Error::Error;
};

/// Malformed files: model documents, archives, score tables, configs.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace pbn
