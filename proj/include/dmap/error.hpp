#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dmap {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed serialized input. `offset` is the byte offset of the problem,
/// `field` the JSON pointer of the offending field (empty for syntax errors).
class ParseError : public Error {
public:
    ParseError(std::size_t offset, std::string field, const std::string& what)
        : Error("parse error at byte " + std::to_string(offset) +
                (field.empty() ? std::string{} : " (field " + field + ")") + ": " + what),
          offset_(offset), field_(std::move(field)) {}

    std::size_t offset() const noexcept { return offset_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::size_t offset_;
    std::string field_;
};

/// A chat or embedding backend failed. `status` is the HTTP status of the last
/// attempt, 0 for transport failures.
class BackendError : public Error {
public:
    BackendError(int status, bool retryable, const std::string& what)
        : Error(what), status_(status), retryable_(retryable) {}

    int status() const noexcept { return status_; }
    bool retryable() const noexcept { return retryable_; }

private:
    int status_;
    bool retryable_;
};

class RenderError : public Error {
public:
    RenderError(std::string placeholder, const std::string& what)
        : Error(what), placeholder_(std::move(placeholder)) {}

    const std::string& placeholder() const noexcept { return placeholder_; }

private:
    std::string placeholder_;
};

/// Map construction failed on a specific page.
class ConstructionError : public Error {
public:
    ConstructionError(int page, const std::string& what)
        : Error("page " + std::to_string(page) + ": " + what), page_(page) {}

    int page() const noexcept { return page_; }

private:
    int page_;
};

}  // namespace dmap
