#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace hdan {

// Fixed blue-to-red map used for attention overlays: blue, cyan, green,
// yellow, red with linear interpolation between stops. t is clamped to [0,1].
std::array<uint8_t, 3> colormap_blue_red(double t);

// Writes an 8-bit RGB PNG of row-major values (length width*height). Values
// are scaled so lo maps to blue and hi to red; a degenerate range renders
// solid blue.
void write_colormap_png(const std::string& path,
                        const std::vector<double>& values, int64_t width,
                        int64_t height, double lo, double hi);

}  // namespace hdan
