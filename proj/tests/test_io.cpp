#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <jpeglib.h>

#include "lsast/checkpoint.hpp"
#include "lsast/error.hpp"
#include "lsast/image_io.hpp"
#include "lsast/rng.hpp"

using namespace lsast;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "lsast_test_io";
    fs::create_directories(dir);
    return dir / name;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::numerical;
}

void write_gray_jpeg(const fs::path& path, int w, int h, unsigned char value) {
    jpeg_compress_struct cinfo;
    jpeg_error_mgr jerr;
    cinfo.err = jpeg_std_error(&jerr);
    jpeg_create_compress(&cinfo);
    FILE* f = std::fopen(path.c_str(), "wb");
    jpeg_stdio_dest(&cinfo, f);
    cinfo.image_width = w;
    cinfo.image_height = h;
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, 100, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    std::vector<unsigned char> row(w * 3, value);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW r = row.data();
        jpeg_write_scanlines(&cinfo, &r, 1);
    }
    jpeg_finish_compress(&cinfo);
    std::fclose(f);
    jpeg_destroy_compress(&cinfo);
}

}  // namespace

TEST(ImageIo, PngRoundTripIsExactOnLevels) {
    Tensor img({3, 5, 7});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>((i * 37) % 256) / 255.0;
    const fs::path p = scratch("round.png");
    write_png(p, img);
    const Tensor back = read_image(p);
    ASSERT_EQ(back.shape(), img.shape());
    EXPECT_LT(max_abs_diff(back, img), 1e-12);
}

TEST(ImageIo, GrayscalePngExpandsToRgb) {
    Tensor img({4, 4}, 0.5);
    const fs::path p = scratch("gray.png");
    write_png(p, img);
    const Tensor back = read_image(p);
    EXPECT_EQ(back.shape(), (Shape{3, 4, 4}));
    for (double v : back.data()) EXPECT_EQ(v, 128.0 / 255.0);  // 127.5 rounds half to even
}

TEST(ImageIo, JpegRead) {
    const fs::path p = scratch("flat.jpg");
    write_gray_jpeg(p, 16, 8, 200);
    const Tensor img = read_image(p);
    EXPECT_EQ(img.shape(), (Shape{3, 8, 16}));
    for (double v : img.data()) EXPECT_NEAR(v, 200.0 / 255.0, 2.0 / 255.0);
}

TEST(ImageIo, ErrorsNameThePath) {
    const fs::path missing = scratch("nope.png");
    fs::remove(missing);
    try {
        read_image(missing);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::io);
        EXPECT_NE(std::string(e.what()).find("nope.png"), std::string::npos);
    }
    const fs::path junk = scratch("junk.png");
    std::ofstream(junk) << "not an image";
    EXPECT_EQ(kind_of([&] { read_image(junk); }), ErrorKind::io);
    EXPECT_EQ(kind_of([&] { list_images(scratch("missing_dir")); }), ErrorKind::io);
}

TEST(ImageIo, QuantizeRoundsHalfToEven) {
    EXPECT_EQ(quantize_signed(-1.0), 0);
    EXPECT_EQ(quantize_signed(1.0), 255);
    EXPECT_EQ(quantize_signed(5.0), 255);
    EXPECT_EQ(quantize_signed(-3.0), 0);
    EXPECT_EQ(quantize_signed(0.0), 128);  // 127.5 -> 128
    EXPECT_EQ(quantize_signed(2.0 * 37.4 / 255.0 - 1.0), 37);
    EXPECT_EQ(quantize_signed(2.0 * 37.6 / 255.0 - 1.0), 38);
}

TEST(ImageIo, ResizeBilinear) {
    Tensor img({3, 2, 2}, std::vector<double>{0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1});
    EXPECT_TRUE(resize_bilinear(img, 2, 2).bitwise_equal(img));
    const Tensor up = resize_bilinear(img, 2, 4);
    // Half-pixel centres: columns at 0, 0.25, 0.75, 1.
    const double expect[4] = {0.0, 0.25, 0.75, 1.0};
    for (std::size_t x = 0; x < 4; ++x) EXPECT_NEAR(up[x], expect[x], 1e-12);
    const Tensor flat = resize_bilinear(Tensor({3, 5, 5}, 0.3), 3, 9);
    for (double v : flat.data()) EXPECT_NEAR(v, 0.3, 1e-15);
}

TEST(ImageIo, ListImagesSorted) {
    const fs::path dir = scratch("listing");
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const char* n : {"b.png", "a.jpg", "c.txt", "d.jpeg"}) std::ofstream(dir / n) << "x";
    const auto files = list_images(dir);
    ASSERT_EQ(files.size(), 3u);
    EXPECT_EQ(files[0].filename(), "a.jpg");
    EXPECT_EQ(files[1].filename(), "b.png");
    EXPECT_EQ(files[2].filename(), "d.jpeg");
}

TEST(Checkpoint, BitwiseRoundTrip) {
    Checkpoint c;
    c.metadata["kind"] = "test";
    c.metadata["S"] = 10;
    Engine rng(1);
    c.put("a", randn({3, 4}, rng));
    c.put("b", Tensor({2}, std::vector<double>{-0.0, 1e-300}));
    const fs::path p = scratch("ok.ckpt");
    save_checkpoint(p, c);
    const Checkpoint back = load_checkpoint(p);
    EXPECT_EQ(back.metadata, c.metadata);
    ASSERT_EQ(back.tensors.size(), 2u);
    EXPECT_TRUE(back.tensor("a").bitwise_equal(c.tensor("a")));
    EXPECT_TRUE(back.tensor("b").bitwise_equal(c.tensor("b")));
}

TEST(Checkpoint, StoreAndRestoreParameters) {
    Engine rng(2);
    Var w = Var::parameter(randn({2, 2}, rng));
    Checkpoint c;
    c.store({{"w", w}});
    Var target = Var::parameter(Tensor({2, 2}));
    c.restore({{"w", target}});
    EXPECT_TRUE(target.value().bitwise_equal(w.value()));
    Var wrong = Var::parameter(Tensor({3}));
    EXPECT_EQ(kind_of([&] { c.restore({{"w", wrong}}); }), ErrorKind::corrupt_checkpoint);
    EXPECT_EQ(kind_of([&] { c.restore({{"missing", wrong}}); }), ErrorKind::corrupt_checkpoint);
}

TEST(Checkpoint, CorruptionDetected) {
    Checkpoint c;
    c.put("a", Tensor({4}, 1.0));
    const fs::path good = scratch("good.ckpt");
    save_checkpoint(good, c);
    std::string bytes;
    {
        std::ifstream in(good, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto write = [&](const std::string& name, const std::string& data) {
        const fs::path p = scratch(name);
        std::ofstream(p, std::ios::binary) << data;
        return p;
    };
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_EQ(kind_of([&] { load_checkpoint(write("magic.ckpt", bad_magic)); }), ErrorKind::corrupt_checkpoint);
    EXPECT_EQ(kind_of([&] { load_checkpoint(write("trunc.ckpt", bytes.substr(0, bytes.size() - 3))); }),
              ErrorKind::corrupt_checkpoint);
    EXPECT_EQ(kind_of([&] { load_checkpoint(write("short.ckpt", bytes.substr(0, 10))); }),
              ErrorKind::corrupt_checkpoint);
    std::string bad_header = bytes;
    bad_header[17] = '#';
    EXPECT_EQ(kind_of([&] { load_checkpoint(write("header.ckpt", bad_header)); }), ErrorKind::corrupt_checkpoint);
    EXPECT_EQ(kind_of([&] { load_checkpoint(scratch("absent.ckpt")); }), ErrorKind::io);
}
