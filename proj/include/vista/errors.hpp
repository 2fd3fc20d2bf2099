#pragma once

#include <stdexcept>
#include <string>

namespace vista {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad or inconsistent configuration (unknown key, invalid value, shape
// constraints violated at setup time).
struct ConfigError : Error {
    using Error::Error;
};

// Precondition violations on operation inputs.
struct InputError : Error {
    using Error::Error;
};

// Non-finite value detected; message names the offending layer/array.
struct NumericError : Error {
    using Error::Error;
};

// Filesystem / serialization failures; message carries the path.
struct IoError : Error {
    using Error::Error;
};

}  // namespace vista
