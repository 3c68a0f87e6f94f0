#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace corpusforge {

// Every failure raised by the library derives from Error and carries a
// short machine-readable code used by the CLI error line.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define CORPUSFORGE_DEFINE_ERROR(Name)                                       \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& message) : Error(#Name, message) {} \
    }

CORPUSFORGE_DEFINE_ERROR(ParseError);
CORPUSFORGE_DEFINE_ERROR(DuplicateId);
CORPUSFORGE_DEFINE_ERROR(NetworkError);
CORPUSFORGE_DEFINE_ERROR(RateLimited);
CORPUSFORGE_DEFINE_ERROR(ChecksumMismatch);
CORPUSFORGE_DEFINE_ERROR(EmptyDocument);
CORPUSFORGE_DEFINE_ERROR(ContextOverflow);
CORPUSFORGE_DEFINE_ERROR(ConfigError);
CORPUSFORGE_DEFINE_ERROR(IoError);
CORPUSFORGE_DEFINE_ERROR(SchemaError);

#undef CORPUSFORGE_DEFINE_ERROR

class EncodingError : public Error {
public:
    EncodingError(const std::string& message, std::size_t offset)
        : Error("EncodingError", message + " at byte " + std::to_string(offset)),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

// Non-2xx answer from the chat-completion endpoint.
class EndpointError : public Error {
public:
    EndpointError(int status, std::string body)
        : Error("EndpointError", "endpoint returned HTTP " + std::to_string(status)),
          status_(status), body_(std::move(body)) {}

    int status() const noexcept { return status_; }
    const std::string& body() const noexcept { return body_; }

private:
    int status_;
    std::string body_;
};

} // namespace corpusforge
