#pragma once

#include <stdexcept>
#include <string>

namespace forge {

/// Broad failure categories. The CLI maps each one to its own exit code.
enum class ErrorCategory { Config, Io, Provider, Validation, Parse, Precondition };

const char* to_string(ErrorCategory category);

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error(ErrorCategory::Config, message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error(ErrorCategory::Io, message) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& message) : Error(ErrorCategory::Validation, message) {}
};

/// The model's reply did not follow the response format the prompt asked for.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& message) : Error(ErrorCategory::Parse, message) {}
};

class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& message)
        : Error(ErrorCategory::Precondition, message) {}
};

}  // namespace forge
