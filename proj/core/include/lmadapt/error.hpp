#pragma once

#include <stdexcept>
#include <string>

namespace lmadapt {

// Error categories map to CLI exit codes: Config -> 2, Data -> 3, Numeric -> 4.
enum class ErrorKind {
    Config,
    Data,
    Numeric,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void config_error(const std::string& msg) { throw Error(ErrorKind::Config, msg); }
[[noreturn]] inline void data_error(const std::string& msg) { throw Error(ErrorKind::Data, msg); }
[[noreturn]] inline void numeric_error(const std::string& msg) { throw Error(ErrorKind::Numeric, msg); }

}  // namespace lmadapt
