#pragma once

#include <stdexcept>
#include <string>

namespace lsast {

enum class ErrorKind {
    config = 2,
    io = 3,
    divergence = 4,
    corrupt_checkpoint = 5,
    invalid_argument = 6,
    numerical = 7,
};

// Exit code used by the CLI for each kind.
inline int exit_code(ErrorKind kind) { return static_cast<int>(kind); }

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool ok, const std::string& what) {
    if (!ok) {
        throw Error(ErrorKind::invalid_argument, what);
    }
}

}  // namespace lsast
