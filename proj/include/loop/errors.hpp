#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace loop {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input failed validation (bad model, bad config, bad file). The CLI maps
/// these to exit code 1; everything else is a runtime failure (exit code 2).
class ValidationError : public Error {
public:
    using Error::Error;
};

class InvalidModel : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class IndexOutOfRange : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class EmptyVector : public ValidationError {
public:
    EmptyVector() : ValidationError("span of an empty vector") {}
};

class FeatureDimensionMismatch : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class NonConvergent : public Error {
public:
    using Error::Error;
};

class DivisionByZeroSupport : public Error {
public:
    using Error::Error;
};

class ZeroLikelihood : public Error {
public:
    using Error::Error;
};

class LatticeTooLarge : public Error {
public:
    using Error::Error;
};

class RealizabilityViolated : public Error {
public:
    using Error::Error;
};

class EmptyConfidenceSet : public Error {
public:
    using Error::Error;
};

class EmptyCandidates : public Error {
public:
    using Error::Error;
    EmptyCandidates() : Error("optimistic selection over an empty candidate list") {}
};

class SearchBudgetExceeded : public Error {
public:
    SearchBudgetExceeded(const std::string& what, std::size_t best) : Error(what), lower_bound(best) {}
    /// longest sequence found before the budget ran out
    std::size_t lower_bound;
};

class GenerationFailed : public Error {
public:
    using Error::Error;
};

class InsufficientPoints : public Error {
public:
    using Error::Error;
};

class MissingSummaries : public Error {
public:
    using Error::Error;
};

} // namespace loop
