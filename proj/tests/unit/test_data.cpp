#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "bdcn/data.hpp"
#include "bdcn/errors.hpp"
#include "bdcn/eval.hpp"

using namespace bdcn;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = fs::temp_directory_path() / (std::string("bdcn_") + info->test_suite_name() + "_" + info->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    [[nodiscard]] const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

Image8 gray(std::int64_t h, std::int64_t w, std::vector<std::uint8_t> px) { return Image8{h, w, 1, std::move(px)}; }

Sample small_sample() {
    // 3x4, distinct values everywhere so permutations are visible.
    std::vector<float> img(3 * 12);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(i) / 36.0f;
    Map2D gt(3, 4);
    for (std::size_t i = 0; i < 12; ++i) gt.values[i] = static_cast<float>(i % 3) / 2.0f;
    return Sample{Tensor::from_data(Shape{1, 3, 3, 4}, std::move(img)), ConsensusGT{gt, 0.3}, "s"};
}

bool same(const Sample& a, const Sample& b) {
    return a.gt.values == b.gt.values && a.image.shape() == b.image.shape() &&
           std::equal(a.image.data().begin(), a.image.data().end(), b.image.data().begin());
}

} // namespace

TEST(Consensus, MeanOfAnnotators) {
    Map2D a(1, 3), b(1, 3), c(1, 3);
    a.values = {1, 0, 1};
    b.values = {1, 1, 0};
    const std::vector<Map2D> three{a, b, c};
    const Map2D m = consensus(three);
    EXPECT_FLOAT_EQ(m.values[0], 2.0f / 3.0f);
    EXPECT_FLOAT_EQ(m.values[1], 1.0f / 3.0f);
    EXPECT_FLOAT_EQ(m.values[2], 1.0f / 3.0f);
    EXPECT_THROW((void)consensus(std::vector<Map2D>{}), IngestionError);
    EXPECT_THROW((void)consensus(std::vector<Map2D>{a, Map2D(3, 1)}), IngestionError);
}

TEST(ImageIo, RoundTripsPngAndPnm) {
    TempDir dir;
    const Image8 g = gray(2, 3, {0, 1, 2, 128, 254, 255});
    Image8 rgb{2, 2, 3, {}};
    for (int i = 0; i < 12; ++i) rgb.pixels.push_back(static_cast<std::uint8_t>(i * 20));
    for (const char* ext : {".png", ".pgm"}) {
        write_image(dir.path() / (std::string("g") + ext), g);
        const Image8 back = read_image(dir.path() / (std::string("g") + ext));
        EXPECT_EQ(back.pixels, g.pixels) << ext;
        EXPECT_EQ(back.channels, 1);
    }
    for (const char* ext : {".png", ".ppm"}) {
        write_image(dir.path() / (std::string("c") + ext), rgb);
        const Image8 back = read_image(dir.path() / (std::string("c") + ext));
        EXPECT_EQ(back.pixels, rgb.pixels) << ext;
        EXPECT_EQ(back.channels, 3);
    }
    EXPECT_THROW((void)read_image(dir.path() / "missing.png"), IoError);
    std::ofstream(dir.path() / "junk.png") << "not a png";
    EXPECT_THROW((void)read_image(dir.path() / "junk.png"), IoError);
}

TEST(ImageIo, ProbabilityQuantization) {
    Map2D m(1, 5);
    m.values = {-1.0f, 0.0f, 0.5f, 0.999f, 2.0f};
    EXPECT_EQ(to_image8(m).pixels, (std::vector<std::uint8_t>{0, 0, 128, 255, 255}));
    const Tensor t = image_to_tensor(gray(1, 2, {0, 255}));
    EXPECT_EQ(t.shape(), (Shape{1, 3, 1, 2}));
    for (std::int64_t c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(t.at(0, c, 0, 1), 1.0f);
}

TEST(LoadSample, SingleAndMultipleAnnotators) {
    TempDir dir;
    Image8 rgb{2, 2, 3, {255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30}};
    write_image(dir.path() / "img.png", rgb);
    write_image(dir.path() / "soft.png", gray(2, 2, {0, 51, 255, 102}));
    write_image(dir.path() / "a1.png", gray(2, 2, {0, 200, 255, 0}));
    write_image(dir.path() / "a2.png", gray(2, 2, {0, 1, 0, 0}));

    const fs::path soft[] = {dir.path() / "soft.png"};
    const Sample s = load_sample(dir.path() / "img.png", soft, 0.4);
    EXPECT_EQ(s.id, "img");
    EXPECT_DOUBLE_EQ(s.gt.gamma, 0.4);
    EXPECT_FLOAT_EQ(s.gt.values.values[1], 0.2f);
    EXPECT_FLOAT_EQ(s.gt.values.values[2], 1.0f);
    EXPECT_FLOAT_EQ(s.image.at(0, 0, 0, 0), 1.0f);
    EXPECT_FLOAT_EQ(s.image.at(0, 1, 0, 1), 1.0f);
    EXPECT_FLOAT_EQ(s.image.at(0, 2, 1, 0), 1.0f);
    EXPECT_FLOAT_EQ(s.image.at(0, 2, 1, 1), 30.0f / 255.0f);

    // Several annotators: binarized (any nonzero) then averaged.
    const fs::path two[] = {dir.path() / "a1.png", dir.path() / "a2.png"};
    const Sample m = load_sample(dir.path() / "img.png", two);
    EXPECT_EQ(m.gt.values.values, (std::vector<float>{0.0f, 1.0f, 0.5f, 0.0f}));
    EXPECT_EQ(load_consensus(two), m.gt.values);
}

TEST(LoadSample, Errors) {
    TempDir dir;
    write_image(dir.path() / "img.png", gray(2, 2, {0, 0, 0, 0}));
    write_image(dir.path() / "big.png", gray(3, 2, {0, 0, 0, 0, 0, 0}));
    const fs::path big[] = {dir.path() / "big.png"};
    EXPECT_THROW((void)load_sample(dir.path() / "img.png", big), IngestionError);
    EXPECT_THROW((void)load_sample(dir.path() / "img.png", std::span<const fs::path>{}), IngestionError);
    const fs::path missing[] = {dir.path() / "nope.png"};
    EXPECT_THROW((void)load_sample(dir.path() / "img.png", missing), IoError);
    const fs::path mixed[] = {dir.path() / "img.png", dir.path() / "big.png"};
    EXPECT_THROW((void)load_consensus(mixed), IngestionError);
}

TEST(Manifest, RoundTripAndResolution) {
    TempDir dir;
    fs::create_directories(dir.path() / "sub");
    {
        std::ofstream out(dir.path() / "sub" / "m.tsv");
        out << "# comment\n\nimages/a.png\tgt/a.png\n/abs/b.jpg\tgt/b1.png,gt/b2.png\r\n";
    }
    const auto e = read_manifest(dir.path() / "sub" / "m.tsv");
    ASSERT_EQ(e.size(), 2u);
    EXPECT_EQ(e[0].id, "a");
    EXPECT_EQ(e[0].image, dir.path() / "sub" / "images" / "a.png");
    EXPECT_EQ(e[1].image, fs::path("/abs/b.jpg"));
    ASSERT_EQ(e[1].gts.size(), 2u);
    EXPECT_EQ(e[1].gts[1], dir.path() / "sub" / "gt" / "b2.png");

    write_manifest(dir.path() / "sub" / "copy.tsv", e);
    const auto back = read_manifest(dir.path() / "sub" / "copy.tsv");
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back[i].image.lexically_normal(), e[i].image.lexically_normal());
        EXPECT_EQ(back[i].gts.size(), e[i].gts.size());
    }

    std::ofstream(dir.path() / "bad.tsv") << "only_one_field\n";
    EXPECT_THROW((void)read_manifest(dir.path() / "bad.tsv"), IoError);
    EXPECT_THROW((void)read_manifest(dir.path() / "absent.tsv"), IoError);
}

TEST(Augment, ExactPermutations) {
    const Sample s = small_sample();
    EXPECT_TRUE(same(flip_horizontal(flip_horizontal(s)), s));
    const Sample r90 = rotate(s, 90);
    EXPECT_EQ(r90.gt.values.height, 4);
    EXPECT_EQ(r90.gt.values.width, 3);
    EXPECT_EQ(r90.image.shape(), (Shape{1, 3, 4, 3}));
    // Counter-clockwise: the top-right pixel moves to the top-left.
    EXPECT_EQ(r90.gt.values(0, 0), s.gt.values(0, 3));
    EXPECT_EQ(r90.image.at(0, 1, 0, 0), s.image.at(0, 1, 0, 3));
    EXPECT_TRUE(same(rotate(r90, 270), s));
    EXPECT_TRUE(same(rotate(rotate(s, 180), 180), s));
    EXPECT_TRUE(same(rotate(rotate(rotate(r90, 90), 90), 90), s));
    EXPECT_TRUE(same(rotate(s, -90), rotate(s, 270)));
    EXPECT_TRUE(same(rotate(s, 360), s));
}

TEST(Augment, IdentitySpecLeavesSampleUnchanged) {
    const Sample s = small_sample();
    AugmentSpec none;
    none.seed = 42;
    EXPECT_TRUE(same(augment(s, none), s));
}

TEST(Augment, RescaleAndCrop) {
    const auto synth = synth_shapes(1, 1, 40);
    const Sample& s = synth[0].sample;
    const Sample half = rescale(s, 0.75);
    EXPECT_EQ(half.gt.values.height, 30);
    EXPECT_EQ(half.image.shape(), (Shape{1, 3, 30, 30}));
    for (float v : half.gt.values.values) EXPECT_TRUE(v == 0.0f || v == 1.0f);
    const Sample c = crop(s, 5, 7, 10, 12);
    EXPECT_EQ(c.gt.values(0, 0), s.gt.values(5, 7));
    EXPECT_EQ(c.image.at(0, 2, 9, 11), s.image.at(0, 2, 14, 18));
    EXPECT_THROW((void)crop(s, 35, 0, 10, 10), ConfigError);
    EXPECT_THROW((void)rescale(s, 0.0), ConfigError);
    AugmentSpec spec;
    spec.crop = std::pair<std::int64_t, std::int64_t>{41, 10};
    EXPECT_THROW((void)augment(s, spec), ConfigError);
}

TEST(Augment, TrainingDefaultIsDeterministicAndConsistent) {
    const auto synth = synth_shapes(2, 1, 36);
    const Sample& s = synth[0].sample;
    int changed = 0;
    for (std::uint64_t seed = 0; seed < 24; ++seed) {
        const AugmentSpec spec = AugmentSpec::training_default(seed);
        const Sample a = augment(s, spec);
        EXPECT_TRUE(same(a, augment(s, spec)));
        EXPECT_EQ(a.image.shape().h, a.gt.values.height);
        EXPECT_EQ(a.image.shape().w, a.gt.values.width);
        const std::int64_t side = a.gt.values.height;
        EXPECT_TRUE(side == 27 || side == 36 || side == 45) << side;
        changed += !same(a, s);
    }
    EXPECT_GT(changed, 12);
    const AugmentSpec d = AugmentSpec::training_default(0);
    EXPECT_TRUE(d.flip);
    EXPECT_EQ(d.rotations, (std::vector<int>{0, 90, 180, 270}));
    EXPECT_EQ(d.scales, (std::vector<double>{0.75, 1.0, 1.25}));
}

TEST(Synth, DeterministicAndValidated) {
    EXPECT_TRUE(synth_shapes(1, 0, 64).empty());
    EXPECT_THROW((void)synth_shapes(1, 1, 31), ConfigError);
    EXPECT_THROW((void)synth_shapes(1, -1, 64), ConfigError);
    const auto a = synth_shapes(5, 3, 48);
    const auto b = synth_shapes(5, 3, 48);
    const auto c = synth_shapes(6, 3, 48);
    ASSERT_EQ(a.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_TRUE(same(a[i].sample, b[i].sample));
        EXPECT_EQ(a[i].sample.id, "synth_" + std::to_string(i));
    }
    EXPECT_FALSE(same(a[0].sample, c[0].sample));
}

TEST(Synth, GroundTruthTracesShapeBoundaries) {
    for (const auto& ss : synth_shapes(9, 5, 64)) {
        const Map2D& gt = ss.sample.gt.values;
        bool any_small = false, any_large = false;
        for (const auto& shape : ss.shapes) (shape.large ? any_large : any_small) = true;
        EXPECT_TRUE(any_small && any_large);
        for (std::int64_t y = 0; y < gt.height; ++y)
            for (std::int64_t x = 0; x < gt.width; ++x) {
                const float g = gt(y, x);
                EXPECT_EQ(g, std::max(ss.gt_small(y, x), ss.gt_large(y, x)));
                if (g == 0.0f) continue;
                // Inside exactly one shape, with a 4-neighbour outside it.
                int owners = 0;
                bool on_boundary = false;
                for (const auto& shape : ss.shapes) {
                    if (!shape.contains(static_cast<double>(y), static_cast<double>(x))) continue;
                    ++owners;
                    const int d[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
                    for (const auto& o : d) {
                        on_boundary |= !shape.contains(static_cast<double>(y + o[0]), static_cast<double>(x + o[1]));
                    }
                }
                EXPECT_EQ(owners, 1) << y << "," << x;
                EXPECT_TRUE(on_boundary) << y << "," << x;
            }
        EXPECT_EQ(eval::nms_thin(gt), gt);
    }
}

TEST(Synth, WrittenDatasetLoadsBack) {
    TempDir dir;
    const auto ds = synth_shapes(4, 2, 32);
    write_dataset(dir.path(), ds);
    const auto entries = read_manifest(dir.path() / "manifest.tsv");
    ASSERT_EQ(entries.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        const Sample s = load_sample(entries[i].image, entries[i].gts);
        EXPECT_EQ(s.id, ds[i].sample.id);
        EXPECT_EQ(s.gt.values, ds[i].sample.gt.values);
        // 8-bit storage of the image: within half a quantization step.
        auto a = s.image.data();
        auto b = ds[i].sample.image.data();
        for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 0.5 / 255.0 + 1e-6);
    }
}
