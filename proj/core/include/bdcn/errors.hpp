#pragma once

#include <stdexcept>
#include <string>

namespace bdcn {

// Error taxonomy shared by every module. All derive from std::runtime_error so
// callers that only care about "something failed" can catch that.

/// Invalid architecture, shape, or hyperparameter combination.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An API was called in a way its contract forbids (e.g. backward on a non-scalar).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Corrupt or mismatched container (bad magic, truncated record, unknown version).
class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Image/annotation pair that cannot form a valid sample.
class IngestionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient encountered during optimization.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace bdcn
