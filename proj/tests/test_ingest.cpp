#include <gtest/gtest.h>

#include "cablewatch/ingest.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cablewatch;
using testutil::TempDir;

namespace {

void write_raw(const fs::path& raw, std::size_t bytes, int w, int h, double fps) {
    std::vector<std::uint8_t> data(bytes);
    for (std::size_t i = 0; i < bytes; ++i) data[i] = static_cast<std::uint8_t>(i * 7);
    write_file_bytes(raw, data);
    testutil::write_text(y8_sidecar_path(raw),
                         R"({"width":)" + std::to_string(w) + R"(,"height":)" + std::to_string(h) +
                             R"(,"fps":)" + std::to_string(fps) + "}");
}

}  // namespace

TEST(Ingest, DirectoryOfPgmsYieldsIndexedFrames) {
    TempDir dir;
    std::mt19937_64 rng(1);
    std::vector<GrayImage> imgs;
    for (int i = 0; i < 3; ++i) {
        imgs.push_back(oracle::random_image(64, 48, rng));
        write_pgm(dir / ("f" + std::to_string(i) + ".pgm"), imgs.back());
    }
    auto seq = open_sequence(dir.path());
    EXPECT_EQ(seq.meta().frame_count, 3);
    EXPECT_EQ(seq.meta().width, 64);
    EXPECT_EQ(seq.meta().height, 48);
    for (int i = 0; i < 3; ++i) {
        auto f = seq.next();
        ASSERT_TRUE(f);
        EXPECT_EQ(f->index(), i);
        EXPECT_EQ(f->image(), imgs[i]);
    }
    EXPECT_FALSE(seq.next());
}

TEST(Ingest, DirectoryOrderIsLexicographic) {
    TempDir dir;
    write_pgm(dir / "b.pgm", GrayImage(8, 8, 2));
    write_pgm(dir / "a.pgm", GrayImage(8, 8, 1));
    write_pgm(dir / "c.pgm", GrayImage(8, 8, 3));
    DirectorySource src(dir.path());
    for (int i = 0; i < 3; ++i) EXPECT_EQ(src.frame_at(i).image().pixels[0], i + 1);
}

TEST(Ingest, DirectoryMixedDimensionsIsAnError) {
    TempDir dir;
    write_pgm(dir / "a.pgm", GrayImage(16, 16));
    write_pgm(dir / "b.pgm", GrayImage(16, 12));
    EXPECT_THROW(DirectorySource{dir.path()}, DataError);
}

TEST(Ingest, DirectoryAcceptsPngAndReadsSequenceJson) {
    TempDir dir;
    RgbImage rgb(10, 9);
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 10; ++x) rgb.set(x, y, 255, 0, 0);
    write_png(dir / "0.png", rgb);
    write_png(dir / "1.png", GrayImage(10, 9, 7));
    testutil::write_text(dir / "sequence.json", R"({"fps": 10, "source_id": "cam3"})");
    DirectorySource src(dir.path());
    EXPECT_EQ(src.meta().source_id, "cam3");
    EXPECT_EQ(src.frame_at(0).image().pixels[0], 76);
    EXPECT_EQ(src.frame_at(1).timestamp_ms(), 100);
}

TEST(Ingest, Y8TimestampsFromFps) {
    TempDir dir;
    const auto raw = dir / "clip.y8";
    write_raw(raw, 2 * 64 * 48, 64, 48, 30.0);
    auto seq = open_sequence(raw);
    ASSERT_EQ(seq.meta().frame_count, 2);
    EXPECT_EQ(seq.next()->timestamp_ms(), 0);
    EXPECT_EQ(seq.next()->timestamp_ms(), 33);
}

TEST(Ingest, Y8PartialTrailingFrameIsAnError) {
    TempDir dir;
    const auto raw = dir / "clip.y8";
    write_raw(raw, 2 * 64 * 48 + 10, 64, 48, 30.0);
    try {
        RawY8Source src(raw);
        FAIL() << "expected truncation error";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
    }
}

TEST(Ingest, MissingPathIsAnIoError) {
    TempDir dir;
    EXPECT_THROW(open_sequence(dir / "nope.y8"), IoError);
    write_file_bytes(dir / "orphan.y8", std::vector<std::uint8_t>(64, 0));
    EXPECT_THROW(open_sequence(dir / "orphan.y8"), IoError);
}

TEST(Ingest, FrameInvariants) {
    EXPECT_THROW(Frame(0, 0, GrayImage(7, 8)), DataError);
    EXPECT_THROW(Frame(-1, 0, GrayImage(8, 8)), DataError);
    EXPECT_THROW(GrayImage(8, 8, std::vector<std::uint8_t>(63)), DataError);
    EXPECT_NO_THROW(Frame(0, 0, GrayImage(8, 8)));
}

TEST(Ingest, PgmRoundTripIsBitExact) {
    std::mt19937_64 rng(2);
    TempDir dir;
    for (int t = 0; t < 20; ++t) {
        auto img = oracle::random_image(8 + t * 3, 8 + t, rng);
        write_pgm(dir / "x.pgm", img);
        EXPECT_EQ(read_pgm(dir / "x.pgm"), img);
    }
}

TEST(Ingest, PgmHeaderWithCommentsParses) {
    std::string text = "P5\n# made by hand\n3 2\n255\n";
    text += std::string("\x01\x02\x03\x04\x05\x06", 6);
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    auto img = decode_pgm(bytes);
    EXPECT_EQ(img.width, 3);
    EXPECT_EQ(img.height, 2);
    EXPECT_EQ(img.at(2, 1), 6);
}

TEST(Ingest, PngRoundTrip) {
    std::mt19937_64 rng(3);
    auto img = oracle::random_image(33, 17, rng);
    auto dec = decode_png(encode_png(img));
    EXPECT_EQ(dec.channels, 1);
    EXPECT_EQ(dec.pixels, img.pixels);
}

TEST(Ingest, GrayscaleExamples) {
    EXPECT_EQ(luma(255, 255, 255), 255);
    EXPECT_EQ(luma(255, 0, 0), 76);
    EXPECT_EQ(luma(0, 0, 0), 0);
}

TEST(Ingest, GrayscaleMatchesHighPrecisionLuma) {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> d(0, 255);
    RgbImage rgb(64, 64);
    for (auto& p : rgb.pixels) p = static_cast<std::uint8_t>(d(rng));
    const auto gray = to_grayscale(rgb);
    using oracle::BigFloat;
    for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
        const BigFloat y = BigFloat("0.299") * rgb.pixels[3 * i] + BigFloat("0.587") * rgb.pixels[3 * i + 1] +
                           BigFloat("0.114") * rgb.pixels[3 * i + 2];
        const double exact = static_cast<double>(y);
        EXPECT_LE(std::abs(gray.pixels[i] - exact), 0.5 + 1e-12) << i;
    }
}

TEST(Ingest, IterationIsDeterministic) {
    TempDir dir;
    const auto raw = dir / "clip.y8";
    write_raw(raw, 5 * 16 * 16, 16, 16, 25.0);
    auto seq = open_sequence(raw);
    std::vector<Frame> first;
    while (auto f = seq.next()) first.push_back(*f);
    seq.rewind();
    for (const auto& f : first) EXPECT_EQ(*seq.next(), f);
}

TEST(Ingest, Y8WriterRoundTrip) {
    TempDir dir;
    std::mt19937_64 rng(5);
    std::vector<GrayImage> imgs;
    {
        Y8Writer w(dir / "w.y8", 20, 10, 12.5, "unit");
        for (int i = 0; i < 4; ++i) {
            imgs.push_back(oracle::random_image(20, 10, rng));
            w.write(imgs.back());
        }
        w.finish();
    }
    RawY8Source src(dir / "w.y8");
    EXPECT_EQ(src.meta().source_id, "unit");
    EXPECT_DOUBLE_EQ(src.meta().fps, 12.5);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(src.frame_at(i).image(), imgs[i]);
    EXPECT_THROW(src.frame_at(4), DataError);
}
