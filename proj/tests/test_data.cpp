#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hydra/hydra.hpp"

using namespace hydra;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() / ("hydra_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& b) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

std::vector<unsigned char> images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                                  std::uint32_t magic = 0x803) {
    std::vector<unsigned char> b;
    put_be32(b, magic);
    put_be32(b, count);
    put_be32(b, rows);
    put_be32(b, cols);
    for (std::uint32_t k = 0; k < count * rows * cols; ++k) b.push_back(static_cast<unsigned char>((k * 37) % 256));
    return b;
}

std::vector<unsigned char> labels(std::uint32_t count) {
    std::vector<unsigned char> b;
    put_be32(b, 0x801);
    put_be32(b, count);
    for (std::uint32_t k = 0; k < count; ++k) b.push_back(static_cast<unsigned char>(k % 10));
    return b;
}

} // namespace

TEST(Data, IdxRoundTrip) {
    TempDir t;
    auto img = images(3, 2, 2);
    img[16] = 255;
    img[17] = 0;
    write_bytes(t.file("img"), img);
    write_bytes(t.file("lab"), labels(3));
    const auto d = load_idx(t.file("img"), t.file("lab"));
    ASSERT_EQ(d.size(), 3u);
    EXPECT_EQ(d.inputs[0].shape, (std::vector<std::size_t>{2, 2}));
    EXPECT_EQ(d.inputs[0].data[0], 1.0);
    EXPECT_EQ(d.inputs[0].data[1], 0.0);
    EXPECT_DOUBLE_EQ(d.inputs[2].data[3], static_cast<double>((11 * 37) % 256) / 255.0);
    EXPECT_EQ(d.labels, (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_EQ(d.class_count, 10u);
}

TEST(Data, IdxBadMagic) {
    TempDir t;
    write_bytes(t.file("img"), images(2, 2, 2, 0x802));
    write_bytes(t.file("lab"), labels(2));
    EXPECT_THROW(load_idx(t.file("img"), t.file("lab")), BadMagicError);
}

TEST(Data, IdxTruncated) {
    TempDir t;
    auto img = images(2, 2, 2);
    img.pop_back();
    write_bytes(t.file("img"), img);
    write_bytes(t.file("lab"), labels(2));
    EXPECT_THROW(load_idx(t.file("img"), t.file("lab")), TruncatedFileError);
    write_bytes(t.file("short"), {0, 0, 8});
    EXPECT_THROW(load_idx(t.file("short"), t.file("lab")), TruncatedFileError);
}

TEST(Data, IdxCountMismatch) {
    TempDir t;
    write_bytes(t.file("img"), images(3, 2, 2));
    write_bytes(t.file("lab"), labels(2));
    EXPECT_THROW(load_idx(t.file("img"), t.file("lab")), CountMismatchError);
}

TEST(Data, IdxErrorsShareBase) {
    TempDir t;
    write_bytes(t.file("img"), images(2, 2, 2, 0x999));
    write_bytes(t.file("lab"), labels(2));
    EXPECT_THROW(load_idx(t.file("img"), t.file("lab")), FormatError);
    EXPECT_THROW(load_idx(t.file("missing"), t.file("lab")), FormatError);
}

TEST(Data, CsvWithHeader) {
    TempDir t;
    write_text(t.file("d.csv"), "label,a,b\n1,0.5,2\n0,-1,3e-1\r\n\n2,4,5\n");
    const auto d = load_csv(t.file("d.csv"));
    ASSERT_EQ(d.size(), 3u);
    EXPECT_EQ(d.class_count, 3u);
    EXPECT_EQ(d.labels, (std::vector<std::size_t>{1, 0, 2}));
    EXPECT_DOUBLE_EQ(d.inputs[1].data[1], 0.3);
}

TEST(Data, CsvErrors) {
    TempDir t;
    write_text(t.file("ragged.csv"), "0,1,2\n1,3\n");
    EXPECT_THROW(load_csv(t.file("ragged.csv")), FormatError);
    write_text(t.file("label.csv"), "0,1\nx,2\n");
    EXPECT_THROW(load_csv(t.file("label.csv")), FormatError);
    write_text(t.file("empty.csv"), "label,x\n");
    EXPECT_THROW(load_csv(t.file("empty.csv")), FormatError);
}

TEST(Data, SimplexMeansAreEquidistant) {
    const auto means = simplex_means(4, 5, 3.0);
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = a + 1; b < 4; ++b) EXPECT_NEAR(norm2(difference(means[a], means[b])), 3.0, 1e-12);
    Vec centroid(5, 0.0);
    for (const auto& m : means) axpy(0.25, m, centroid);
    EXPECT_NEAR(norm2(centroid), 0.0, 1e-12);
    EXPECT_THROW(simplex_means(4, 2, 1.0), ConfigError);
}

TEST(Data, SynthGaussianLayout) {
    const auto d = synth_gaussian(3, 4, 2, 1.0, 5);
    ASSERT_EQ(d.size(), 12u);
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d.labels[i], i % 3);
    const auto again = synth_gaussian(3, 4, 2, 1.0, 5);
    EXPECT_EQ(d.inputs[7].data, again.inputs[7].data);
    EXPECT_NE(d.inputs[7].data, synth_gaussian(3, 4, 2, 1.0, 6).inputs[7].data);
}

TEST(Data, StandardizerZeroMeanUnitVariance) {
    auto d = synth_gaussian(2, 50, 3, 4.0, 2);
    scale_features(d, 7.0);
    fit_standardizer(d).apply(d);
    const auto s = fit_standardizer(d);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_NEAR(s.mean[k], 0.0, 1e-12);
        EXPECT_NEAR(s.std[k], 1.0, 1e-12);
    }
}

TEST(Data, InjectNoiseFlipsExactCount) {
    const auto d = synth_gaussian(3, 20, 2, 1.0, 1);
    const auto [noisy, rec] = inject_noise(d, 0.25, 9);
    EXPECT_EQ(rec.flipped.size(), 15u);
    EXPECT_TRUE(std::is_sorted(rec.flipped.begin(), rec.flipped.end()));
    std::size_t changed = 0;
    for (std::size_t i = 0; i < d.size(); ++i) changed += noisy.labels[i] != d.labels[i];
    EXPECT_EQ(changed, 15u);
    for (std::size_t k = 0; k < rec.flipped.size(); ++k) {
        EXPECT_EQ(rec.original_labels[k], d.labels[rec.flipped[k]]);
        EXPECT_EQ(rec.new_labels[k], noisy.labels[rec.flipped[k]]);
    }
    const auto mask = rec.mask(d.size());
    EXPECT_EQ(static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)), 15u);
    EXPECT_EQ(inject_noise(d, 0.25, 9).second.flipped, rec.flipped);
    EXPECT_THROW(inject_noise(d, 1.5, 9), ConfigError);
}
