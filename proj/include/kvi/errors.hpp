#pragma once

#include <stdexcept>
#include <string>

namespace kvi {

/// Base class for every error raised by the pipeline.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration (rulesets, model dimensions, layer masks, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A referenced item (capsule, sentence, node, bank entry) does not exist.
class LookupError : public Error {
public:
    using Error::Error;
};

/// A file violates its on-disk schema. `where` is a JSON pointer or byte offset.
class FormatError : public Error {
public:
    FormatError(std::string where, const std::string& what)
        : Error(where.empty() ? what : where + ": " + what), where_(std::move(where)) {}

    const std::string& where() const noexcept { return where_; }

private:
    std::string where_;
};

/// Tensor shapes disagree with the model.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A sequence would exceed the model's position budget.
class OverflowError : public Error {
public:
    using Error::Error;
};

/// Bad command-line or API usage (unknown condition, ...).
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace kvi
