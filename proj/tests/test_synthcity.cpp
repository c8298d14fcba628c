#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "gridpv/dataset.hpp"
#include "gridpv/synthcity.hpp"
#include "oracles.hpp"

using namespace gridpv;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("gridpv_synth_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

CitySpec small_spec(const std::string& name, int with_pv, int no_pv, std::uint64_t seed) {
    CitySpec spec;
    spec.name = name;
    spec.n_with_pv = with_pv;
    spec.n_no_pv = no_pv;
    spec.size_min = 48;
    spec.size_max = 64;
    spec.seed = seed;
    return spec;
}

// deterministic asymmetric patch for the augmentation tests
MaskedImage checker_patch(int w, int h) {
    MaskedImage m;
    m.image = ImageU8(w, h, 3);
    m.mask.assign(std::size_t(w) * std::size_t(h), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c)
                m.image.at(x, y, c) = std::uint8_t((x * 7 + y * 13 + c * 31 + x * y) % 256);
            m.mask[std::size_t(y) * std::size_t(w) + std::size_t(x)] =
                ((x + 2 * y) % 5 != 0) ? 255 : 0;
        }
    return m;
}

bool inside_any_rect(int x, int y, const std::vector<std::array<int, 4>>& rects) {
    for (const auto& r : rects)
        if (x >= r[0] && x < r[0] + r[2] && y >= r[1] && y < r[1] + r[3]) return true;
    return false;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(bool(in));
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("city spec validation rejects bad ranges") {
    CitySpec spec = small_spec("a", 2, 2, 1);
    spec.validate();

    CitySpec bad = spec;
    bad.name = "";
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = spec;
    bad.n_no_pv = -1;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = spec;
    bad.hue_min = 50;
    bad.hue_max = 40;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = spec;
    bad.panel_cell = 1;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = spec;
    bad.size_min = 16;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = spec;
    bad.train_fraction = 1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("rendering is a pure function of spec and index") {
    CitySpec spec = small_spec("det", 1, 1, 99);
    RenderedRooftop a = render_rooftop(spec, 4, true);
    RenderedRooftop b = render_rooftop(spec, 4, true);
    CHECK(a.image == b.image);
    CHECK(a.mask == b.mask);
    CHECK(a.panel_rects == b.panel_rects);

    // a different index gives a different roof
    RenderedRooftop c = render_rooftop(spec, 5, true);
    CHECK_FALSE(a.image == c.image);
}

TEST_CASE("the two labels differ only inside the panel rectangles") {
    CitySpec spec = small_spec("pv", 1, 1, 7);
    for (std::size_t index : {0u, 1u, 2u, 3u, 4u, 5u}) {
        RenderedRooftop with = render_rooftop(spec, index, true);
        RenderedRooftop without = render_rooftop(spec, index, false);

        REQUIRE(with.image.same_shape(without.image));
        CHECK(with.mask == without.mask);
        CHECK_FALSE(with.panel_rects.empty());
        CHECK(without.panel_rects.empty());

        bool any_diff = false;
        for (int y = 0; y < with.image.height; ++y)
            for (int x = 0; x < with.image.width; ++x) {
                bool differs = false;
                for (int c = 0; c < 3; ++c)
                    differs |= with.image.at(x, y, c) != without.image.at(x, y, c);
                if (!differs) continue;
                any_diff = true;
                CHECK(inside_any_rect(x, y, with.panel_rects));
            }
        CHECK(any_diff);

        // panels never leak outside the image
        for (const auto& r : with.panel_rects) {
            CHECK(r[0] >= 0);
            CHECK(r[1] >= 0);
            CHECK(r[0] + r[2] <= with.image.width);
            CHECK(r[1] + r[3] <= with.image.height);
        }
    }
}

TEST_CASE("generated cities have the requested counts and a stratified split") {
    TempDir dir;
    CitySpec spec = small_spec("alpha", 4, 6, 11);
    CityDataset city = generate_city(spec, dir.str());

    CHECK(city.city_id == "alpha");
    CHECK(city.train.size() + city.test.size() == 10);

    // round(0.7 * 4) = 3 and round(0.7 * 6) = 4 rooftops go to train per class
    int train_pv = 0, train_no = 0, test_pv = 0, test_no = 0;
    for (const RooftopImage& r : city.train)
        (r.label == Label::WithPV ? train_pv : train_no) += 1;
    for (const RooftopImage& r : city.test)
        (r.label == Label::WithPV ? test_pv : test_no) += 1;
    CHECK(train_pv == 3);
    CHECK(train_no == 4);
    CHECK(test_pv == 1);
    CHECK(test_no == 2);

    for (const RooftopImage& r : city.train) {
        CHECK(r.city_id == "alpha");
        CHECK(r.pixels.channels == 3);
        CHECK(mask_count(r.valid_mask) > 0);
    }

    // on-disk layout
    fs::path root = dir.path / "alpha";
    CHECK(fs::exists(root / "labels.csv"));
    CHECK(fs::exists(root / "splits.csv"));
    CHECK(fs::exists(root / "images" / "alpha_r000.png"));
    CHECK(fs::exists(root / "masks" / "alpha_r009.png"));

    // reload and get the same rooftops back
    CityDataset loaded = load_city(dir.str(), "alpha");
    REQUIRE(loaded.train.size() == city.train.size());
    REQUIRE(loaded.test.size() == city.test.size());
    for (std::size_t i = 0; i < city.train.size(); ++i) {
        CHECK(loaded.train[i].rooftop_id == city.train[i].rooftop_id);
        CHECK(loaded.train[i].pixels == city.train[i].pixels);
        CHECK(loaded.train[i].valid_mask == city.train[i].valid_mask);
        CHECK(loaded.train[i].label == city.train[i].label);
    }
}

TEST_CASE("regeneration reproduces the city byte for byte") {
    TempDir dir;
    CitySpec spec = small_spec("beta", 3, 3, 21);
    generate_city(spec, (dir.path / "one").string());
    generate_city(spec, (dir.path / "two").string());

    for (const char* rel : {"beta/labels.csv", "beta/splits.csv", "beta/images/beta_r000.png",
                            "beta/images/beta_r005.png", "beta/masks/beta_r002.png"}) {
        CHECK(file_bytes(dir.path / "one" / rel) == file_bytes(dir.path / "two" / rel));
    }
}

TEST_CASE("flips are involutions and actually move pixels") {
    MaskedImage base = checker_patch(21, 14);
    for (auto kind : {AugmentationOp::Kind::HFlip, AugmentationOp::Kind::VFlip}) {
        AugmentationOp op{kind, 0, 0};
        MaskedImage once = augment(base, op);
        CHECK_FALSE(once.image == base.image);
        MaskedImage twice = augment(once, op);
        CHECK(twice.image == base.image);
        CHECK(twice.mask == base.mask);
    }

    // hflip moves the left column to the right edge
    MaskedImage flipped = augment(base, {AugmentationOp::Kind::HFlip, 0, 0});
    for (int c = 0; c < 3; ++c) CHECK(flipped.image.at(20, 3, c) == base.image.at(0, 3, c));
}

TEST_CASE("neutral parameters leave the input untouched") {
    MaskedImage base = checker_patch(17, 17);
    const AugmentationOp neutral[] = {
        {AugmentationOp::Kind::GammaContrast, 1.0, 0},
        {AugmentationOp::Kind::Brightness, 0.0, 0},
        {AugmentationOp::Kind::GaussianBlur, 0.0, 0},
        {AugmentationOp::Kind::Rotate, 0.0, 0},
        {AugmentationOp::Kind::Shear, 0.0, 0},
        {AugmentationOp::Kind::RandomCrop, 1.0, 3},
    };
    for (const AugmentationOp& op : neutral) {
        MaskedImage out = augment(base, op);
        CHECK(out.image == base.image);
        CHECK(out.mask == base.mask);
    }
    CHECK(augment_chain(base, {}).image == base.image);
}

TEST_CASE("photometric ops transform pixels pointwise and keep the mask") {
    MaskedImage base = checker_patch(9, 9);

    MaskedImage bright = augment(base, {AugmentationOp::Kind::Brightness, 10.0, 0});
    CHECK(bright.mask == base.mask);
    for (std::size_t i = 0; i < base.image.pixels.size(); ++i) {
        int want = std::min(255, int(base.image.pixels[i]) + 10);
        CHECK(int(bright.image.pixels[i]) == want);
    }

    MaskedImage gamma = augment(base, {AugmentationOp::Kind::GammaContrast, 0.5, 0});
    CHECK(gamma.mask == base.mask);
    for (std::size_t i = 0; i < base.image.pixels.size(); ++i) {
        long want = std::lround(255.0 * std::pow(base.image.pixels[i] / 255.0, 0.5));
        CHECK(long(gamma.image.pixels[i]) == want);
    }
}

TEST_CASE("gaussian blur matches a direct truncated-kernel evaluation") {
    const int w = 15, h = 13;
    const double sigma = 1.2;

    // impulse in the middle plus a second one near the border to exercise
    // the clamped edge handling
    std::vector<double> plane(std::size_t(w) * std::size_t(h), 0.0);
    plane[std::size_t(6) * w + 7] = 255.0;
    plane[std::size_t(1) * w + 1] = 128.0;

    std::vector<double> fast = blur_plane(plane, w, h, sigma);
    std::vector<double> slow = oracles::gaussian_blur(plane, w, h, sigma);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t i = 0; i < fast.size(); ++i) CHECK(std::abs(fast[i] - slow[i]) <= 1e-6);

    // an impulse farther than the kernel radius from every border keeps its
    // mass; the normalized kernel just spreads it
    std::vector<double> interior(std::size_t(w) * std::size_t(h), 0.0);
    interior[std::size_t(6) * w + 7] = 255.0;
    std::vector<double> spread = blur_plane(interior, w, h, sigma);
    double total = 0;
    for (double v : spread) total += v;
    CHECK(total == doctest::Approx(255.0).epsilon(1e-9));

    // the image op is the quantized version of the same planes
    MaskedImage base = checker_patch(w, h);
    MaskedImage blurred = augment(base, {AugmentationOp::Kind::GaussianBlur, sigma, 0});
    CHECK(blurred.mask == base.mask);
    for (int c = 0; c < 3; ++c) {
        std::vector<double> chan(std::size_t(w) * std::size_t(h));
        for (std::size_t i = 0; i < chan.size(); ++i)
            chan[i] = base.image.pixels[i * 3 + std::size_t(c)];
        std::vector<double> want = oracles::gaussian_blur(chan, w, h, sigma);
        for (std::size_t i = 0; i < chan.size(); ++i) {
            long q = std::lround(want[i]);
            CHECK(long(blurred.image.pixels[i * 3 + std::size_t(c)]) == q);
        }
    }
}

TEST_CASE("geometric ops preserve shape and keep a usable mask") {
    CitySpec spec = small_spec("geo", 1, 0, 13);
    RenderedRooftop roof = render_rooftop(spec, 0, true);
    MaskedImage base{roof.image, roof.mask};

    const AugmentationOp ops[] = {
        {AugmentationOp::Kind::Rotate, 20.0, 0},
        {AugmentationOp::Kind::Shear, 12.0, 0},
        {AugmentationOp::Kind::RandomCrop, 0.8, 77},
    };
    for (const AugmentationOp& op : ops) {
        MaskedImage out = augment(base, op);
        CHECK(out.image.width == base.image.width);
        CHECK(out.image.height == base.image.height);
        CHECK(mask_count(out.mask) > 0);
        for (std::uint8_t m : out.mask) CHECK((m == 0 || m == 255));
        CHECK_FALSE(out.image == base.image);
    }
}

TEST_CASE("augmentation parameters are validated") {
    MaskedImage base = checker_patch(8, 8);
    CHECK_THROWS_AS(augment(base, {AugmentationOp::Kind::GammaContrast, 0.0, 0}), Error);
    CHECK_THROWS_AS(augment(base, {AugmentationOp::Kind::Rotate, 60.0, 0}), Error);
    CHECK_THROWS_AS(augment(base, {AugmentationOp::Kind::Shear, -30.0, 0}), Error);
    CHECK_THROWS_AS(augment(base, {AugmentationOp::Kind::RandomCrop, 0.5, 0}), Error);
    CHECK_THROWS_AS(augment(base, {AugmentationOp::Kind::GaussianBlur, -1.0, 0}), Error);

    MaskedImage broken = base;
    broken.mask.pop_back();
    CHECK_THROWS_AS(augment(broken, {AugmentationOp::Kind::HFlip, 0, 0}), Error);
}

TEST_CASE("random chains stay within the documented parameter ranges") {
    Rng rng(2024);
    for (int i = 0; i < 200; ++i) {
        std::vector<AugmentationOp> chain = random_augmentation_chain(rng);
        CHECK(chain.size() >= 1);
        CHECK(chain.size() <= 3);
        for (const AugmentationOp& op : chain) {
            op.validate();
            using Kind = AugmentationOp::Kind;
            switch (op.kind) {
                case Kind::GammaContrast:
                    CHECK(op.amount >= 0.7);
                    CHECK(op.amount <= 1.4);
                    break;
                case Kind::GaussianBlur:
                    CHECK(op.amount >= 0.3);
                    CHECK(op.amount <= 1.5);
                    break;
                case Kind::Brightness:
                    CHECK(std::abs(op.amount) <= 30.0);
                    break;
                case Kind::RandomCrop:
                    CHECK(op.amount >= 0.7);
                    CHECK(op.amount <= 1.0);
                    break;
                default:
                    break;
            }
        }
    }
}

TEST_CASE("minority balancing tops up the training split only") {
    TempDir dir;
    CitySpec spec = small_spec("bal", 4, 12, 31);
    spec.train_fraction = 0.75;  // round(3) with_pv + round(9) no_pv in train
    CityDataset city = generate_city(spec, dir.str());

    int train_pv = 0, train_no = 0;
    for (const RooftopImage& r : city.train)
        (r.label == Label::WithPV ? train_pv : train_no) += 1;
    REQUIRE(train_pv == 3);
    REQUIRE(train_no == 9);

    std::vector<std::string> test_ids_before;
    for (const RooftopImage& r : city.test) test_ids_before.push_back(r.rooftop_id);
    std::size_t train_before = city.train.size();

    balance_minority(city, 5);

    int after_pv = 0, after_no = 0;
    std::set<std::string> aug_ids;
    for (const RooftopImage& r : city.train) {
        (r.label == Label::WithPV ? after_pv : after_no) += 1;
        if (r.rooftop_id.find("_aug") != std::string::npos) {
            aug_ids.insert(r.rooftop_id);
            CHECK(r.label == Label::WithPV);
            CHECK(mask_count(r.valid_mask) > 0);
        }
    }
    CHECK(after_pv == 9);
    CHECK(after_no == 9);
    CHECK(city.train.size() == train_before + 6);
    CHECK(aug_ids.size() == 6);

    // three minority sources, six copies: each source used exactly twice
    std::set<std::string> want;
    for (const RooftopImage& r : city.train)
        if (r.label == Label::WithPV && r.rooftop_id.find("_aug") == std::string::npos) {
            want.insert(r.rooftop_id + "_aug1");
            want.insert(r.rooftop_id + "_aug2");
        }
    CHECK(aug_ids == want);

    std::vector<std::string> test_ids_after;
    for (const RooftopImage& r : city.test) test_ids_after.push_back(r.rooftop_id);
    CHECK(test_ids_after == test_ids_before);
}

TEST_CASE("balancing is deterministic and a no-op on balanced data") {
    TempDir dir;
    CitySpec spec = small_spec("rep", 3, 9, 47);
    CityDataset a = generate_city(spec, (dir.path / "one").string());
    CityDataset b = generate_city(spec, (dir.path / "two").string());

    balance_minority(a, 9);
    balance_minority(b, 9);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].rooftop_id == b.train[i].rooftop_id);
        CHECK(a.train[i].pixels == b.train[i].pixels);
        CHECK(a.train[i].valid_mask == b.train[i].valid_mask);
    }

    std::size_t balanced_size = a.train.size();
    balance_minority(a, 1234);  // already balanced: nothing to do
    CHECK(a.train.size() == balanced_size);
}

TEST_CASE("balancing requires both classes in the training split") {
    TempDir dir;
    CitySpec spec = small_spec("solo", 0, 4, 3);
    CityDataset city = generate_city(spec, dir.str());
    CHECK_THROWS_AS(balance_minority(city, 1), Error);
}

TEST_CASE("stratified splits hit the per-class quota and never starve a side") {
    std::vector<Label> labels;
    for (int i = 0; i < 4; ++i) labels.push_back(Label::WithPV);
    for (int i = 0; i < 6; ++i) labels.push_back(Label::NoPV);

    std::vector<Split> split = stratified_split(labels, 0.7, 3);
    int train_pv = 0, train_no = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (split[i] == Split::Train) (labels[i] == Label::WithPV ? train_pv : train_no) += 1;
    CHECK(train_pv == 3);
    CHECK(train_no == 4);

    CHECK(stratified_split(labels, 0.7, 3) == split);

    // two items of a class always land on both sides, even at extreme fractions
    std::vector<Label> pair{Label::WithPV, Label::WithPV, Label::NoPV, Label::NoPV};
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        std::vector<Split> s = stratified_split(pair, 0.9, seed);
        CHECK(std::count(s.begin(), s.end(), Split::Train) == 2);
        CHECK((s[0] == Split::Train) != (s[1] == Split::Train));
        CHECK((s[2] == Split::Train) != (s[3] == Split::Train));
    }
}
