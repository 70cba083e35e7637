#pragma once

#include <string>

#include "mfvpinn/network.hpp"

namespace mfvpinn {

/// Binary parameter checkpoint: a short header with the layer dimensions
/// and seed followed by the flat 64-bit parameter array in layer-major
/// order.
void save_checkpoint(const std::string& path, const NetworkParams& params);
NetworkParams load_checkpoint(const std::string& path);

/// Shortest round-trippable decimal representation (17 significant digits).
std::string format_double(double v);

}  // namespace mfvpinn
