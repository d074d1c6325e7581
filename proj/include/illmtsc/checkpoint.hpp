#pragma once

#include <stdexcept>
#include <string>

#include "illmtsc/ppo.hpp"

namespace illmtsc {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CheckpointVersionError : CheckpointError {
    using CheckpointError::CheckpointError;
};

struct CheckpointFormatError : CheckpointError {
    using CheckpointError::CheckpointError;
};

struct CheckpointShapeError : CheckpointError {
    using CheckpointError::CheckpointError;
};

// Versioned JSON document; every double is stored as a 17-significant-digit
// decimal string, so save followed by load reproduces the weights bit for
// bit on any platform.
void save_checkpoint(const NetworkWeights& weights, const std::string& path);
NetworkWeights load_checkpoint(const std::string& path);

}  // namespace illmtsc
