#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace edittrack {

// Base for every error the library raises. `kind()` is the stable,
// machine-parsable name printed by the CLI.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

    // Throws a copy of the same dynamic type with `prefix` prepended to the
    // message.
    [[noreturn]] virtual void rethrow_with_prefix(const std::string& prefix) const { throw Error(kind_, prefix + what()); }

private:
    std::string kind_;
};

#define EDITTRACK_DEFINE_ERROR(Name)                                   \
    class Name : public Error {                                        \
    public:                                                            \
        explicit Name(const std::string& message) : Error(#Name, message) {} \
        [[noreturn]] void rethrow_with_prefix(const std::string& prefix) const override { \
            throw Name(prefix + what());                               \
        }                                                              \
    };

EDITTRACK_DEFINE_ERROR(IoError)
EDITTRACK_DEFINE_ERROR(DecodeError)
EDITTRACK_DEFINE_ERROR(MissingFileError)
EDITTRACK_DEFINE_ERROR(PreconditionError)
EDITTRACK_DEFINE_ERROR(ExtractorMismatch)
EDITTRACK_DEFINE_ERROR(BackendError)
EDITTRACK_DEFINE_ERROR(PromptError)
EDITTRACK_DEFINE_ERROR(UnsupportedSpace)
EDITTRACK_DEFINE_ERROR(EmptyCaption)
EDITTRACK_DEFINE_ERROR(FingerprintMismatch)
EDITTRACK_DEFINE_ERROR(DegenerateData)
EDITTRACK_DEFINE_ERROR(DimensionMismatch)
EDITTRACK_DEFINE_ERROR(MissingThreshold)
EDITTRACK_DEFINE_ERROR(LengthMismatch)
EDITTRACK_DEFINE_ERROR(ContainsNegatives)
EDITTRACK_DEFINE_ERROR(ConfigError)

#undef EDITTRACK_DEFINE_ERROR

// Parse failures carry the 1-based line number they refer to (0 = whole file).
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message)
        : Error("ParseError", line == 0 ? message : "line " + std::to_string(line) + ": " + message),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

    [[noreturn]] void rethrow_with_prefix(const std::string& prefix) const override {
        ParseError e(0, prefix + what());
        e.line_ = line_;
        throw e;
    }

private:
    std::size_t line_;
};

}  // namespace edittrack
