#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace emma {

// Root of every exception the library throws. `code()` is a short, stable
// machine-readable tag; the service maps it onto error bodies.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& message) : Error("domain_error", message) {}
};

// Invalid record contents. `field_path` names the offending field, e.g. "profile.dass".
class ValidationError : public Error {
public:
    ValidationError(std::string field_path, const std::string& message)
        : Error("validation_error", message), field_path_(std::move(field_path)) {}

    const std::string& field_path() const noexcept { return field_path_; }

private:
    std::string field_path_;
};

// Malformed input text; `line()` is 1-based, 0 when not applicable.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message)
        : Error("parse_error", line == 0 ? message : "line " + std::to_string(line) + ": " + message),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class EstimationError : public Error {
public:
    explicit EstimationError(const std::string& message) : Error("estimation_error", message) {}
};

class EncodingError : public Error {
public:
    explicit EncodingError(const std::string& message) : Error("encoding_error", message) {}
};

class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& message) : Error("training_error", message) {}
};

class EvaluationError : public Error {
public:
    explicit EvaluationError(const std::string& message) : Error("evaluation_error", message) {}
};

class StatsError : public Error {
public:
    explicit StatsError(const std::string& message) : Error("undefined_statistic", message) {}
};

class CatalogError : public Error {
public:
    explicit CatalogError(const std::string& message) : Error("catalog_error", message) {}
};

class TemplateError : public Error {
public:
    explicit TemplateError(const std::string& message) : Error("template_error", message) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config_error", message) {}
};

class MoodSourceError : public Error {
public:
    explicit MoodSourceError(const std::string& message) : Error("mood_source_error", message) {}
};

class SelectionError : public Error {
public:
    explicit SelectionError(const std::string& message) : Error("selection_error", message) {}
};

class RenderError : public Error {
public:
    explicit RenderError(const std::string& message) : Error("render_error", message) {}
};

class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& message) : Error("not_found", message) {}
};

class ConflictError : public Error {
public:
    explicit ConflictError(const std::string& message) : Error("conflict", message) {}
};

// The service was started without something it needs (e.g. no model in the deployed phase).
class MisconfiguredError : public Error {
public:
    explicit MisconfiguredError(const std::string& message) : Error("misconfigured", message) {}
};

} // namespace emma
