#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "edittrack/image_io.hpp"
#include "edittrack/manifest.hpp"
#include "helpers.hpp"

using namespace edittrack;
using namespace edittrack::testing;

TEST(LoadImage, WhitePixel) {
    const auto img = load_image(fixture("white_1x1"));
    ASSERT_EQ(img.width(), 1);
    ASSERT_EQ(img.height(), 1);
    EXPECT_EQ(img.at(0, 0, 0), 255);
    EXPECT_EQ(img.at(0, 0, 1), 255);
    EXPECT_EQ(img.at(0, 0, 2), 255);
}

TEST(LoadImage, AlphaDropped) {
    const auto img = load_image(fixture("red_rgba_2x2"));
    ASSERT_EQ(img.width(), 2);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            EXPECT_EQ(img.at(x, y, 0), 255);
            EXPECT_EQ(img.at(x, y, 1), 0);
            EXPECT_EQ(img.at(x, y, 2), 0);
        }
}

TEST(LoadImage, GrayscaleExpanded) {
    const auto img = load_image(fixture("gray_3x2"));
    ASSERT_EQ(img.width(), 3);
    ASSERT_EQ(img.height(), 2);
    for (auto v : img.data()) EXPECT_EQ(v, 77);
}

TEST(LoadImage, Jpeg) {
    const auto jpg = load_image(data_dir() / "fixtures" / "scene.jpg");
    const auto png = load_image(fixture("scene"));
    ASSERT_EQ(jpg.width(), png.width());
    double err = 0;
    for (std::size_t i = 0; i < jpg.data().size(); ++i) err += std::abs(int(jpg.data()[i]) - int(png.data()[i]));
    EXPECT_LT(err / jpg.data().size(), 6.0);
}

TEST(LoadImage, TruncatedIsDecodeError) {
    TempDir dir;
    auto bytes = read_file_bytes(fixture("scene"));
    bytes.resize(bytes.size() / 2);
    write_file_bytes(dir.path / "cut.png", bytes);
    EXPECT_THROW(load_image(dir.path / "cut.png"), DecodeError);
}

TEST(LoadImage, MissingIsIoError) { EXPECT_THROW(load_image("/nonexistent/x.png"), IoError); }

TEST(LoadImage, PngRoundTrip) {
    std::mt19937_64 rng(3);
    const auto img = random_image(rng, 13, 7);
    EXPECT_EQ(decode_png(encode_png(img)), img);
}

TEST(Resize, UniformGrayStaysUniform) {
    const ImageBuffer g(37, 19, 131);
    const auto r = resize_canonical(g, 256);
    ASSERT_EQ(r.width(), 256);
    for (auto v : r.data()) EXPECT_EQ(v, 131);
}

TEST(Resize, SameSizeIsIdentity) {
    std::mt19937_64 rng(4);
    const auto img = random_image(rng, 256, 256);
    EXPECT_EQ(resize_canonical(img, 256), img);
}

TEST(Resize, CheckerboardToOnePixel) {
    // Centre of the 2x2 source falls halfway between all four samples:
    // 127.5, rounded half up.
    ImageBuffer c(2, 2);
    c.set(0, 0, 0, 0, 0);
    c.set(1, 0, 255, 255, 255);
    c.set(0, 1, 255, 255, 255);
    c.set(1, 1, 0, 0, 0);
    const auto r = resize_bilinear(c, 1, 1);
    EXPECT_EQ(r.at(0, 0, 0), 128);
}

TEST(Resize, SideBelowEightRejected) { EXPECT_THROW(resize_canonical(ImageBuffer(4, 4), 7), PreconditionError); }

TEST(Resize, IdempotentAtTarget) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 10; ++i) {
        const auto img = random_image(rng, 5 + int(rng() % 60), 5 + int(rng() % 60));
        const int side = 8 + int(rng() % 40);
        const auto once = resize_canonical(img, side);
        EXPECT_EQ(resize_canonical(once, side), once);
    }
}

TEST(Resize, Deterministic) {
    std::mt19937_64 rng(6);
    const auto img = random_image(rng, 41, 29);
    EXPECT_EQ(resize_canonical(img, 64), resize_canonical(img, 64));
}

TEST(ImageBuffer, BadDimensions) {
    EXPECT_THROW(ImageBuffer(0, 3), PreconditionError);
    EXPECT_THROW(ImageBuffer(2, 2, std::vector<std::uint8_t>(5)), PreconditionError);
}

namespace {

Manifest parse(const std::string& text, ManifestOptions opt = {}) {
    std::istringstream in(text);
    return parse_manifest(in, opt);
}

Manifest random_manifest(std::mt19937_64& rng) {
    Manifest m;
    m.registry_fingerprint = "fp" + std::to_string(rng() % 1000);
    const int n = 1 + int(rng() % 20);
    if (rng() % 2) m.comments.emplace_back(0, "# head");
    for (int i = 0; i < n; ++i) {
        const int l = int(rng() % 7) - 1;
        m.records.push_back({"p" + std::to_string(i), "b/" + std::to_string(rng() % 99) + ".png", "s" + std::to_string(i) + ".jpg",
                             l, (rng() % 3) ? "tag" + std::to_string(rng() % 4) : ""});
        if (rng() % 5 == 0) m.comments.emplace_back(static_cast<std::size_t>(i + 1) < static_cast<std::size_t>(n) ? i + 1 : n, "# c" + std::to_string(i));
    }
    return m;
}

}  // namespace

TEST(Manifest, EmptyFile) {
    try {
        parse("");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("empty manifest"), std::string::npos);
    }
}

TEST(Manifest, OneLine) {
    const auto m = parse("!registry=abc\np1\tb.png\ts.png\t2\tphoto\n", {.max_label = 5, .check_files = false});
    ASSERT_EQ(m.records.size(), 1u);
    EXPECT_EQ(m.registry_fingerprint, "abc");
    EXPECT_EQ(m.records[0].label, 2);
    EXPECT_EQ(m.records[0].source_tag, "photo");
}

TEST(Manifest, LabelAboveRegistrySize) {
    try {
        parse("!registry=abc\np1\tb.png\ts.png\t1\tx\np2\tb.png\ts.png\t7\tx\n", {.max_label = 5, .check_files = false});
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(Manifest, Malformed) {
    EXPECT_THROW(parse("p1\tb\ts\t1\tx\n"), ParseError);
    EXPECT_THROW(parse("!registry=a\np1\tb\ts\t1\n"), ParseError);
    EXPECT_THROW(parse("!registry=a\np1\tb\ts\tx\tt\n"), ParseError);
    EXPECT_THROW(parse("!registry=a\np1\tb\ts\t1\tt\np1\tb\ts\t1\tt\n"), ParseError);
    EXPECT_THROW(parse("!registry=a\np1\tb\ts\tunseen\tt\n", {.allow_unseen = false}), ParseError);
}

TEST(Manifest, MissingFilesListed) {
    TempDir dir;
    {
        std::ofstream out(dir.path / "m.tsv");
        out << "!registry=a\np1\tnone_b.png\tnone_s.png\t0\tx\n";
    }
    try {
        load_manifest(dir.path / "m.tsv");
        FAIL();
    } catch (const MissingFileError& e) {
        EXPECT_NE(std::string(e.what()).find("none_b.png"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("none_s.png"), std::string::npos);
    }
}

TEST(Manifest, RoundTripProperty) {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 100; ++t) {
        const auto m = random_manifest(rng);
        std::ostringstream a;
        write_manifest(a, m);
        const auto back = parse(a.str(), {.check_files = false});
        EXPECT_EQ(back, m);
        std::ostringstream b;
        write_manifest(b, back);
        EXPECT_EQ(a.str(), b.str());
    }
}

TEST(Manifest, LabelsWithinRange) {
    const auto m = parse("!registry=a\np1\tb\ts\t0\tx\np2\tb\ts\t3\tx\n", {.max_label = 3, .check_files = false});
    for (const auto& r : m.records) {
        EXPECT_GE(r.label, 0);
        EXPECT_LE(r.label, 3);
    }
}
