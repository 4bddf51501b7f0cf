#include "forge/image.hpp"

#include "forge/error.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <vector>

#include <jpeglib.h>

namespace forge::image {

const char* media_type(Format format) {
    return format == Format::Png ? "image/png" : "image/jpeg";
}

std::optional<Format> sniff(std::span<const std::uint8_t> data) {
    static constexpr std::uint8_t kPng[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    if (data.size() >= sizeof kPng && std::memcmp(data.data(), kPng, sizeof kPng) == 0) return Format::Png;
    if (data.size() >= 3 && data[0] == 0xFF && data[1] == 0xD8 && data[2] == 0xFF) return Format::Jpeg;
    return std::nullopt;
}

namespace {

Info decode_png(std::span<const std::uint8_t> data) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, data.data(), data.size())) {
        std::string msg = img.message;
        png_image_free(&img);
        throw ValidationError("PNG header rejected: " + msg);
    }
    img.format = PNG_FORMAT_RGBA;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw ValidationError("PNG decode failed: " + msg);
    }
    return Info{Format::Png, static_cast<int>(img.width), static_cast<int>(img.height)};
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Corrupt-data warnings (truncation, bad markers) fail the decode.
void jpeg_emit_message(j_common_ptr cinfo, int level) {
    if (level < 0) jpeg_error_exit(cinfo);
}

Info decode_jpeg(std::span<const std::uint8_t> data, std::vector<std::uint8_t>* rgb = nullptr) {
    jpeg_decompress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    err.base.emit_message = jpeg_emit_message;
    // Only trivially destructible locals may live between setjmp and the longjmp.
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw ValidationError(std::string("JPEG decode failed: ") + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, data.data(), static_cast<unsigned long>(data.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    const auto stride = static_cast<std::size_t>(cinfo.output_width) * cinfo.output_components;
    JSAMPARRAY rows = (*cinfo.mem->alloc_sarray)(reinterpret_cast<j_common_ptr>(&cinfo), JPOOL_IMAGE,
                                                 static_cast<JDIMENSION>(stride), 1);
    if (rgb) rgb->clear();
    while (cinfo.output_scanline < cinfo.output_height) {
        jpeg_read_scanlines(&cinfo, rows, 1);
        if (rgb) rgb->insert(rgb->end(), rows[0], rows[0] + stride);
    }
    Info info{Format::Jpeg, static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height)};
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return info;
}

}  // namespace

Info decode_info(std::span<const std::uint8_t> data) {
    auto format = sniff(data);
    if (!format) throw ValidationError("image is neither PNG nor JPEG");
    return *format == Format::Png ? decode_png(data) : decode_jpeg(data);
}

Bytes to_png(std::span<const std::uint8_t> data) {
    const auto format = sniff(data);
    if (format == Format::Png) {
        decode_png(data);
        return Bytes(data.begin(), data.end());
    }
    if (format != Format::Jpeg) throw ValidationError("image is neither PNG nor JPEG");
    std::vector<std::uint8_t> rgb;
    const auto info = decode_jpeg(data, &rgb);
    return encode_png_rgb(rgb, info.width, info.height);
}

Bytes encode_png_rgb(std::span<const std::uint8_t> rgb, int width, int height) {
    if (width <= 0 || height <= 0) throw PreconditionError("PNG dimensions must be positive");
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
        throw PreconditionError("pixel buffer does not match PNG dimensions");
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(width);
    img.height = static_cast<png_uint_32>(height);
    img.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, rgb.data(), 0, nullptr))
        throw ValidationError(std::string("PNG encode failed: ") + img.message);
    Bytes out(size);
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, rgb.data(), 0, nullptr))
        throw ValidationError(std::string("PNG encode failed: ") + img.message);
    out.resize(size);
    return out;
}

}  // namespace forge::image
