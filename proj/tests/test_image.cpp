#include "doctest.h"

#include <cmath>
#include <fstream>

#include "radiart/error.hpp"
#include "radiart/image.hpp"
#include "test_util.hpp"

using namespace radiart;

namespace {

Image gradient_image(std::size_t w, std::size_t h) {
    Image img(w, h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            img.at(x, y, 0) = static_cast<double>(x) / static_cast<double>(w);
            img.at(x, y, 1) = static_cast<double>(y) / static_cast<double>(h);
            img.at(x, y, 2) = 0.25 + 1e-7 * static_cast<double>(x * y);
        }
    return img;
}

}  // namespace

TEST_CASE("PNG keeps 8-bit values") {
    testing::TempDir dir("png");
    Image img(3, 2);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>(i * 13 % 256) / 255.0;
    img.pixels[0] = -0.5;  // clamped
    img.pixels[1] = 2.0;
    write_png(img, dir / "a.png");
    const Image back = read_png(dir / "a.png");
    REQUIRE(back.width == 3);
    REQUIRE(back.height == 2);
    CHECK(back.pixels[0] == 0.0);
    CHECK(back.pixels[1] == 1.0);
    for (std::size_t i = 2; i < img.pixels.size(); ++i) CHECK(back.pixels[i] == doctest::Approx(img.pixels[i]));
}

TEST_CASE("PFM round-trips at float precision, top row first in memory") {
    testing::TempDir dir("pfm");
    const Image img = gradient_image(5, 4);
    write_pfm(img, dir / "a.pfm");
    const Image back = read_pfm(dir / "a.pfm");
    REQUIRE(back.width == 5);
    REQUIRE(back.height == 4);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        CHECK(back.pixels[i] == static_cast<double>(static_cast<float>(img.pixels[i])));
    // header then the bottom image row
    std::ifstream is(dir / "a.pfm", std::ios::binary);
    std::string magic, dims, scale;
    std::getline(is, magic);
    std::getline(is, dims);
    std::getline(is, scale);
    CHECK(magic == "PF");
    CHECK(dims == "5 4");
    CHECK(std::stod(scale) < 0.0);
    float first[3];
    is.read(reinterpret_cast<char*>(first), sizeof(first));
    CHECK(first[1] == static_cast<float>(img.at(0, 3, 1)));
}

TEST_CASE("unreadable files") {
    testing::TempDir dir("bad");
    CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
    CHECK_THROWS_AS(read_pfm(dir / "missing.pfm"), IoError);
    std::ofstream(dir / "junk.png") << "not an image";
    CHECK_THROWS_AS(read_png(dir / "junk.png"), IoError);
    std::ofstream(dir / "junk.pfm") << "P6\n1 1\n";
    CHECK_THROWS_AS(read_pfm(dir / "junk.pfm"), IoError);
}

TEST_CASE("psnr of a uniform error") {
    Image a(4, 4, 0.5), b(4, 4, 0.6);
    CHECK(mse(a, b) == doctest::Approx(0.01));
    CHECK(psnr(a, b) == doctest::Approx(20.0));
    CHECK(std::isinf(psnr(a, a)));
    CHECK_THROWS_AS(mse(a, Image(3, 4)), UsageError);
}

TEST_CASE("crop") {
    const Image img = gradient_image(6, 5);
    const Image c = img.crop(2, 1, 3, 2);
    CHECK(c.width == 3);
    CHECK(c.at(0, 0, 0) == img.at(2, 1, 0));
    CHECK(c.at(2, 1, 1) == img.at(4, 2, 1));
    CHECK_THROWS(img.crop(4, 0, 3, 1));
}
