#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmt {

// Base of all library errors. CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Malformed input file; carries the byte offset where parsing failed.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t byte_offset)
        : Error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}
    std::size_t byte_offset() const { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

class EmptyScoreError : public Error {
public:
    explicit EmptyScoreError(const std::string& msg) : Error(msg) {}
};

// Event sequence violates the grammar; names the first offending event.
class GrammarError : public Error {
public:
    GrammarError(const std::string& msg, std::size_t event_index)
        : Error(msg + " (event index " + std::to_string(event_index) + ")"),
          event_index_(event_index) {}
    std::size_t event_index() const { return event_index_; }

private:
    std::size_t event_index_;
};

// All probability mass removed by a decoding constraint.
class ConstraintConflict : public Error {
public:
    explicit ConstraintConflict(const std::string& msg) : Error(msg) {}
};

class UndefinedMetricError : public Error {
public:
    explicit UndefinedMetricError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& msg) : Error(msg) {}
};

}  // namespace mmt
