#include "hdan/image_export.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "hdan/errors.hpp"

namespace hdan {

namespace {

constexpr std::array<std::array<uint8_t, 3>, 5> kStops{{
    {0, 0, 255},
    {0, 255, 255},
    {0, 255, 0},
    {255, 255, 0},
    {255, 0, 0},
}};

void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& data) {
    put_u32_be(out, static_cast<uint32_t>(data.size()));
    size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = static_cast<uint32_t>(
        crc32(0, out.data() + type_at, static_cast<uInt>(4 + data.size())));
    put_u32_be(out, crc);
}

}  // namespace

std::array<uint8_t, 3> colormap_blue_red(double t) {
    t = std::clamp(t, 0.0, 1.0);
    double pos = t * (kStops.size() - 1);
    size_t lo = std::min(static_cast<size_t>(pos), kStops.size() - 2);
    double f = pos - static_cast<double>(lo);
    std::array<uint8_t, 3> rgb{};
    for (int c = 0; c < 3; ++c) {
        double v = (1.0 - f) * kStops[lo][c] + f * kStops[lo + 1][c];
        rgb[c] = static_cast<uint8_t>(std::lround(v));
    }
    return rgb;
}

void write_colormap_png(const std::string& path,
                        const std::vector<double>& values, int64_t width,
                        int64_t height, double lo, double hi) {
    if (width <= 0 || height <= 0 ||
        values.size() != static_cast<size_t>(width) * static_cast<size_t>(height))
        throw BadInputShape("png dimensions do not match the value count");

    double span = hi - lo;
    std::vector<uint8_t> raster;
    raster.reserve(static_cast<size_t>(height) * (1 + 3 * static_cast<size_t>(width)));
    for (int64_t y = 0; y < height; ++y) {
        raster.push_back(0);  // per-scanline filter: none
        for (int64_t x = 0; x < width; ++x) {
            double v = values[static_cast<size_t>(y * width + x)];
            double t = span > 0 ? (v - lo) / span : 0.0;
            auto rgb = colormap_blue_red(t);
            raster.insert(raster.end(), rgb.begin(), rgb.end());
        }
    }

    uLongf packed_size = compressBound(static_cast<uLong>(raster.size()));
    std::vector<uint8_t> packed(packed_size);
    if (compress2(packed.data(), &packed_size, raster.data(),
                  static_cast<uLong>(raster.size()), Z_BEST_COMPRESSION) != Z_OK)
        throw RuntimeError("png compression failed");
    packed.resize(packed_size);

    std::vector<uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<uint32_t>(width));
    put_u32_be(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // rgb
    ihdr.push_back(0);   // deflate
    ihdr.push_back(0);   // adaptive filtering
    ihdr.push_back(0);   // no interlace

    std::vector<uint8_t> png{137, 80, 78, 71, 13, 10, 26, 10};
    put_chunk(png, "IHDR", ihdr);
    put_chunk(png, "IDAT", packed);
    put_chunk(png, "IEND", {});

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IOFailure("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(png.data()),
              static_cast<std::streamsize>(png.size()));
    if (!out) throw IOFailure("short write: " + path);
}

}  // namespace hdan
