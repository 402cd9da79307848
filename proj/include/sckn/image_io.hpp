#pragma once

#include <string>

#include "sckn/core_maps.hpp"

namespace sckn {

// PNG (8-bit gray/RGB) and binary PGM/PPM. Values come back as floats in
// [0, 255]; write_image rounds and clamps to 8 bits.
SpatialMap read_image(const std::string& path);
void write_image(const std::string& path, const SpatialMap& image);

}  // namespace sckn
