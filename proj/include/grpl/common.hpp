#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace grpl {

using TokenId = int32_t;

// Bad inputs, configs, or file contents. CLI maps this to exit code 1.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failures at run time (numerics, IO mid-run). CLI maps this to exit code 2.
struct RuntimeFailure : std::runtime_error {
    explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace grpl
