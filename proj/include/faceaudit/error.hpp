#pragma once

#include <stdexcept>
#include <string>

namespace faceaudit {

// Error taxonomy shared by the whole toolkit. The CLI maps kinds to exit
// codes (validation=1, data_integrity=2, io=3), so every throw site must
// pick the kind deliberately.
enum class ErrorKind {
    validation,      // bad arguments, violated preconditions
    data_integrity,  // malformed or inconsistent dataset content
    io,              // filesystem failures
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void throw_validation(const std::string& msg) {
    throw Error(ErrorKind::validation, msg);
}
[[noreturn]] inline void throw_data(const std::string& msg) {
    throw Error(ErrorKind::data_integrity, msg);
}
[[noreturn]] inline void throw_io(const std::string& msg) {
    throw Error(ErrorKind::io, msg);
}

}  // namespace faceaudit
