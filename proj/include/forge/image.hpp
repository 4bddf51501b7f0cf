#pragma once

#include "forge/bytes.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>

namespace forge::image {

enum class Format { Png, Jpeg };

struct Info {
    Format format;
    int width = 0;
    int height = 0;
};

const char* media_type(Format format);

/// Sniffs the signature only. Returns nullopt for anything other than PNG/JPEG.
std::optional<Format> sniff(std::span<const std::uint8_t> data);

/// Fully decodes the raster to prove it is well-formed. Throws ValidationError.
Info decode_info(std::span<const std::uint8_t> data);

/// Returns PNG bytes: PNG input is validated and passed through, JPEG is
/// decoded and re-encoded.
Bytes to_png(std::span<const std::uint8_t> data);

/// Encodes 8-bit RGB pixels (row-major, 3 bytes per pixel) as PNG.
Bytes encode_png_rgb(std::span<const std::uint8_t> rgb, int width, int height);

}  // namespace forge::image
