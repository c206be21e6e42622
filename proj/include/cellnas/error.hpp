#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cellnas {

enum class ErrorKind {
    // genotype / search-space validation
    InvalidArity,
    ForwardReference,
    EmptyConcat,
    UnknownOperationKind,
    InvalidSearchSpace,
    UnsupportedInputCount,
    TooLarge,
    // numerics
    DimensionMismatch,
    ShapeMismatch,
    NoConvergence,
    DegeneratePair,
    InsufficientSamples,
    NoTape,
    NonFiniteLoss,
    // io / configuration
    ParseError,
    InvalidSpec,
    IoFailure,
    MissingManifest,
    ZeroBlock,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a machine-readable kind so the
/// CLI can map it to an exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace cellnas
