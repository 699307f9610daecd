#include "lsast/image_io.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>

#include <jpeglib.h>
#include <png.h>

#include "lsast/error.hpp"

namespace lsast {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
    return f;
}

std::uint8_t to_byte(double unit) {
    const double v = std::nearbyint(std::clamp(unit, 0.0, 1.0) * 255.0);
    return static_cast<std::uint8_t>(v);
}

Tensor from_interleaved(const std::vector<std::uint8_t>& px, std::size_t h, std::size_t w, std::size_t channels) {
    Tensor out({3, h, w});
    const std::size_t plane = h * w;
    for (std::size_t i = 0; i < plane; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
            const std::size_t src = channels >= 3 ? c : 0;
            out[c * plane + i] = px[i * channels + src] / 255.0;
        }
    return out;
}

Tensor read_png(const fs::path& path) {
    FilePtr f = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) fail(ErrorKind::io, "libpng initialisation failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::io, "cannot decode PNG '" + path.string() + "'");
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const std::size_t w = png_get_image_width(png, info), h = png_get_image_height(png, info);
    const std::size_t channels = png_get_channels(png, info);
    std::vector<std::uint8_t> px(h * w * channels);
    std::vector<png_bytep> rows(h);
    for (std::size_t y = 0; y < h; ++y) rows[y] = px.data() + y * w * channels;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return from_interleaved(px, h, w, channels);
}

struct JpegError {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
};

void jpeg_bail(j_common_ptr cinfo) { std::longjmp(reinterpret_cast<JpegError*>(cinfo->err)->jump, 1); }

Tensor read_jpeg(const fs::path& path) {
    FilePtr f = open_file(path, "rb");
    jpeg_decompress_struct cinfo;
    JpegError err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_bail;
    std::vector<std::uint8_t> px;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        fail(ErrorKind::io, "cannot decode JPEG '" + path.string() + "'");
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    const std::size_t w = cinfo.output_width, h = cinfo.output_height, channels = cinfo.output_components;
    px.resize(h * w * channels);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = px.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * channels;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return from_interleaved(px, h, w, channels);
}

}  // namespace

Tensor read_image(const fs::path& path) {
    unsigned char magic[8] = {};
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
        in.read(reinterpret_cast<char*>(magic), sizeof magic);
        if (in.gcount() < 3) fail(ErrorKind::io, "'" + path.string() + "' is too short to be an image");
    }
    if (png_sig_cmp(magic, 0, 8) == 0) return read_png(path);
    if (magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF) return read_jpeg(path);
    fail(ErrorKind::io, "'" + path.string() + "' is neither PNG nor JPEG");
}

void write_png(const fs::path& path, const Tensor& image) {
    const bool gray = image.rank() == 2;
    require(gray || (image.rank() == 3 && image.dim(0) == 3), "write_png expects (3, H, W) or (H, W), got " + shape_str(image.shape()));
    const std::size_t h = gray ? image.dim(0) : image.dim(1), w = gray ? image.dim(1) : image.dim(2);
    const std::size_t channels = gray ? 1 : 3, plane = h * w;
    std::vector<std::uint8_t> px(plane * channels);
    for (std::size_t i = 0; i < plane; ++i)
        for (std::size_t c = 0; c < channels; ++c) px[i * channels + c] = to_byte(image[c * plane + i]);

    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) fail(ErrorKind::io, "libpng initialisation failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::io, "cannot write PNG '" + path.string() + "'");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 gray ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < h; ++y) png_write_row(png, px.data() + y * w * channels);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fflush(f.get()) != 0) fail(ErrorKind::io, "cannot write PNG '" + path.string() + "'");
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
    require(image.rank() == 3, "resize_bilinear expects (C, H, W)");
    require(height > 0 && width > 0, "resize_bilinear: empty target size");
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (h == height && w == width) return image;
    Tensor out({c, height, width});
    auto source = [](std::size_t i, std::size_t in, std::size_t outn, std::size_t& lo, std::size_t& hi, double& frac) {
        const double s = std::clamp((i + 0.5) * static_cast<double>(in) / static_cast<double>(outn) - 0.5, 0.0,
                                    static_cast<double>(in - 1));
        lo = static_cast<std::size_t>(std::floor(s));
        hi = std::min(lo + 1, in - 1);
        frac = s - static_cast<double>(lo);
    };
    for (std::size_t y = 0; y < height; ++y) {
        std::size_t y0, y1;
        double fy;
        source(y, h, height, y0, y1, fy);
        for (std::size_t x = 0; x < width; ++x) {
            std::size_t x0, x1;
            double fx;
            source(x, w, width, x0, x1, fx);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double* p = image.ptr() + ch * h * w;
                const double top = p[y0 * w + x0] * (1 - fx) + p[y0 * w + x1] * fx;
                const double bottom = p[y1 * w + x0] * (1 - fx) + p[y1 * w + x1] * fx;
                out[(ch * height + y) * width + x] = top * (1 - fy) + bottom * fy;
            }
        }
    }
    return out;
}

Tensor to_signed(const Tensor& unit) {
    Tensor out = unit;
    for (double& v : out.data()) v = 2.0 * v - 1.0;
    return out;
}

Tensor to_unit(const Tensor& signed_image) {
    Tensor out = signed_image;
    for (double& v : out.data()) v = (v + 1.0) / 2.0;
    return out;
}

std::uint8_t quantize_signed(double x) { return to_byte((x + 1.0) / 2.0); }

std::vector<fs::path> list_images(const fs::path& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) fail(ErrorKind::io, "'" + dir.string() + "' is not a directory");
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace lsast
