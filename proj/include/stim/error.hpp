#pragma once

#include <stdexcept>
#include <string>

namespace stim {

// Runtime failure inside a pipeline stage.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid user-supplied configuration (model dims, schedule, CLI flags).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace stim
