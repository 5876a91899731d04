#ifndef CONVACT_ERRORS_HPP
#define CONVACT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace convact {

// Base class for all domain errors raised by the toolkit. CLI maps these
// to exit code 1; anything else is a bug.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error(what) {}
};

class EmptyFileError : public FormatError {
public:
    explicit EmptyFileError(const std::string& path)
        : FormatError("empty file: " + path) {}
};

class MissingColumnError : public FormatError {
public:
    explicit MissingColumnError(const std::string& column)
        : FormatError("missing column: " + column) {}
};

class UnknownLabelError : public FormatError {
public:
    explicit UnknownLabelError(const std::string& code)
        : FormatError("unknown label code: " + code) {}
};

class MalformedRowError : public FormatError {
public:
    MalformedRowError(std::size_t line, const std::string& what)
        : FormatError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(what) {}
};

}  // namespace convact

#endif
