#pragma once

#include <stdexcept>
#include <string>

namespace drnet {

// Invalid parameters or incompatible shapes supplied by the caller.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed clip container, checkpoint or manifest on disk.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A sampler was asked for a pair that the dataset cannot provide.
class SamplingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Optimization diverged or otherwise could not continue.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace drnet
