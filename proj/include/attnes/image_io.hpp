#pragma once

#include <string>

#include "attnes/core.hpp"

namespace attnes {

/// Binary PPM (P6, maxval 255).
void write_ppm(const std::string& path, const Image& image);
Image read_ppm(const std::string& path);

}  // namespace attnes
