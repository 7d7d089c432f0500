#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lgda {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user configuration: bad flags, malformed config files, inconsistent options.
/// The CLI maps this family to exit code 1; everything else is a runtime error (exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what)
        : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class UnknownFormatError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class EmptyCorpusError : public Error {
public:
    using Error::Error;
};

class InsufficientExamplesError : public Error {
public:
    using Error::Error;
};

class MaskPositionError : public Error {
public:
    using Error::Error;
};

class LengthError : public Error {
public:
    using Error::Error;
};

class ShapeMismatchError : public Error {
public:
    using Error::Error;
};

class CheckpointVersionError : public Error {
public:
    using Error::Error;
};

class CorruptCheckpointError : public Error {
public:
    using Error::Error;
};

class BudgetError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class UnknownWordError : public Error {
public:
    explicit UnknownWordError(const std::string& word)
        : Error("word not in vocabulary: '" + word + "'"), word_(word) {}

    const std::string& word() const noexcept { return word_; }

private:
    std::string word_;
};

class EmptyInputError : public Error {
public:
    using Error::Error;
};

/// Wraps a failure inside one experiment stage ("sample", "search", "tune", ...).
class StageError : public Error {
public:
    StageError(const std::string& stage, const std::string& what)
        : Error("[" + stage + "] " + what), stage_(stage) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace lgda
