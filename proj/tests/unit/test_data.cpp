#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "rcl/data.hpp"
#include "rcl/error.hpp"

using namespace rcl;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("rcl_data_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

void be32(std::string& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

// Hand-assembled IDX pair: n images of 28x28 where image k is filled with
// pixel value 60k except pixel 0, which is 255.
void write_idx_fixture(const std::filesystem::path& dir, std::uint32_t n_images, std::uint32_t n_labels) {
    std::string img, lab;
    be32(img, 0x00000803);
    be32(img, n_images);
    be32(img, 28);
    be32(img, 28);
    for (std::uint32_t k = 0; k < n_images; ++k) {
        img.push_back(static_cast<char>(255));
        img.append(28 * 28 - 1, static_cast<char>(60 * k));
    }
    be32(lab, 0x00000801);
    be32(lab, n_labels);
    for (std::uint32_t k = 0; k < n_labels; ++k) lab.push_back(static_cast<char>(k % 10));
    std::ofstream(dir / "img.idx", std::ios::binary) << img;
    std::ofstream(dir / "lab.idx", std::ios::binary) << lab;
}

double mean_col(const Dataset& d, int label, std::size_t col) {
    double s = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d.labels[i] == label) s += d.inputs.at(i, col), ++n;
    return s / static_cast<double>(n);
}

}  // namespace

TEST_CASE("IDX fixture loads with exact scaling") {
    auto dir = temp_dir("idx");
    write_idx_fixture(dir, 4, 4);
    Dataset d = load_idx(dir / "img.idx", dir / "lab.idx");
    CHECK(d.size() == 4);
    CHECK(d.inputs.shape() == Shape{4, 1, 28, 28});
    CHECK(d.inputs[0] == 1.0);
    CHECK(d.inputs[28 * 28 + 1] == 60.0 / 255.0);
    CHECK(d.labels == std::vector<int>{0, 1, 2, 3});
    CHECK(d.image);

    save_idx(d, dir / "img2.idx", dir / "lab2.idx");
    Dataset back = load_idx(dir / "img2.idx", dir / "lab2.idx");
    CHECK(bitwise_equal(back.inputs, d.inputs));
}

TEST_CASE("IDX errors: count mismatch, truncation, bad magic") {
    auto dir = temp_dir("idx_bad");
    write_idx_fixture(dir, 4, 3);
    CHECK_THROWS_WITH_AS(load_idx(dir / "img.idx", dir / "lab.idx"), doctest::Contains("count mismatch"), FormatError);

    write_idx_fixture(dir, 4, 4);
    std::filesystem::resize_file(dir / "img.idx", 16 + 28 * 28 * 4 - 10);
    CHECK_THROWS_AS(load_idx(dir / "img.idx", dir / "lab.idx"), FormatError);

    write_idx_fixture(dir, 4, 4);
    CHECK_THROWS_AS(load_idx(dir / "lab.idx", dir / "img.idx"), FormatError);
    CHECK_THROWS_AS(load_idx(dir / "missing.idx", dir / "lab.idx"), IoError);
}

TEST_CASE("CSV round trip and NaN rejection") {
    auto dir = temp_dir("csv");
    Dataset d = gen_synthetic(SyntheticKind::blobs_k, 30, 3, 3, 4, 2.0);
    save_csv(d, dir / "d.csv");
    Dataset back = load_csv(dir / "d.csv");
    CHECK(back.labels == d.labels);
    CHECK(max_abs_diff(back.inputs, d.inputs) == 0.0);

    std::ofstream(dir / "nan.csv") << "label,f0,f1\n0,1.0,nan\n1,0.5,0.5\n";
    CHECK_THROWS_AS(load_csv(dir / "nan.csv"), NumericError);
    std::ofstream(dir / "ragged.csv") << "label,f0,f1\n0,1.0\n";
    CHECK_THROWS_AS(load_csv(dir / "ragged.csv"), FormatError);
}

TEST_CASE("synthetic generators") {
    Dataset a = gen_synthetic(SyntheticKind::two_gaussians, 4000, 20, 2, 7, 8.0);
    Dataset b = gen_synthetic(SyntheticKind::two_gaussians, 4000, 20, 2, 7, 8.0);
    CHECK(bitwise_equal(a.inputs, b.inputs));
    CHECK(a.labels == b.labels);
    // Sample means sit at -/+4 on e1 and 0 elsewhere (standard error 0.022).
    CHECK(std::abs(mean_col(a, 0, 0) + 4.0) < 0.1);
    CHECK(std::abs(mean_col(a, 1, 0) - 4.0) < 0.1);
    CHECK(std::abs(mean_col(a, 1, 5)) < 0.1);

    Dataset blobs = gen_synthetic(SyntheticKind::blobs_k, 1000, 5, 10, 1, 3.0);
    for (auto c : blobs.class_counts()) CHECK(c == 100);
    Dataset rings = gen_synthetic(SyntheticKind::rings, 90, 3, 3, 1, 2.0);
    CHECK(rings.inputs.shape() == Shape{90, 3});

    CHECK_THROWS_AS(gen_synthetic(SyntheticKind::blobs_k, 5, 2, 10, 0, 1.0), ConfigError);
    CHECK_THROWS_AS(gen_synthetic(SyntheticKind::two_gaussians, 50, 2, 2, 0, 0.0), ConfigError);
}

TEST_CASE("identity augmentation returns x for both views") {
    Dataset d = gen_synthetic(SyntheticKind::two_gaussians, 10, 4, 2, 1, 2.0);
    auto [a, b] = make_views(d.inputs, false, AugmentSpec{}, 3);
    CHECK(bitwise_equal(a, d.inputs));
    CHECK(bitwise_equal(b, d.inputs));
}

TEST_CASE("augmentation is seeded and rejects mismatched options") {
    Tensor x = Tensor::full({8, 1, 8, 8}, 0.5);
    AugmentSpec spec;
    spec.crop_shift_max_pixels = 2;
    spec.horizontal_flip_prob = 0.5;
    spec.erase_patch_prob = 0.5;
    spec.gaussian_noise_sigma = 0.1;
    auto v1 = make_views(x, true, spec, 42);
    auto v2 = make_views(x, true, spec, 42);
    CHECK(bitwise_equal(v1.first, v2.first));
    CHECK(bitwise_equal(v1.second, v2.second));
    CHECK_FALSE(bitwise_equal(v1.first, v1.second));
    for (double v : v1.first.values()) CHECK((v >= 0.0 && v <= 1.0));
    CHECK_THROWS_AS(make_views(Tensor::zeros({2, 4}), false, spec, 1), ConfigError);
    AugmentSpec drop;
    drop.feature_dropout_prob = 0.2;
    CHECK_THROWS_AS(make_views(x, true, drop, 1), ConfigError);
    AugmentSpec bad;
    bad.horizontal_flip_prob = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("pixel noise has the half-normal mean absolute deviation") {
    Tensor x = Tensor::full({1000, 1, 4, 4}, 0.5);
    AugmentSpec spec;
    spec.gaussian_noise_sigma = 0.1;
    auto [a, b] = make_views(x, true, spec, 5);
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - x[i]);
    const double mad = s / static_cast<double>(a.size());
    const double expected = 0.1 * std::sqrt(2.0 / M_PI);
    CHECK(std::abs(mad - expected) < 0.2 * expected);
}

TEST_CASE("stratified split sizes, determinism and coverage") {
    Dataset d = gen_synthetic(SyntheticKind::blobs_k, 1000, 3, 10, 2, 2.0);
    SplitResult s = split(d, {0.8, 0.1, 0.1}, 9);
    CHECK(s.pretrain.size() == 800);
    CHECK(s.finetune.size() == 100);
    CHECK(s.test.size() == 100);
    for (auto c : s.pretrain.class_counts()) CHECK(std::abs(static_cast<int>(c) - 80) <= 1);
    for (auto c : s.test.class_counts()) CHECK(std::abs(static_cast<int>(c) - 10) <= 1);

    SplitResult again = split(d, {0.8, 0.1, 0.1}, 9);
    CHECK(bitwise_equal(again.test.inputs, s.test.inputs));

    std::map<std::pair<int, std::vector<double>>, int> multiset;
    auto add = [&](const Dataset& part, int sign) {
        for (std::size_t i = 0; i < part.size(); ++i) {
            std::vector<double> row(part.inputs.data().begin() + static_cast<long>(i * 3),
                                    part.inputs.data().begin() + static_cast<long>(i * 3 + 3));
            multiset[{part.labels[i], row}] += sign;
        }
    };
    add(d, 1);
    add(s.pretrain, -1);
    add(s.finetune, -1);
    add(s.test, -1);
    CHECK(std::all_of(multiset.begin(), multiset.end(), [](const auto& kv) { return kv.second == 0; }));
}

TEST_CASE("split aliases D_f and rejects tiny classes") {
    Dataset d = gen_synthetic(SyntheticKind::two_gaussians, 100, 3, 2, 2, 2.0);
    SplitResult s = split(d, {0.8, 0.0, 0.2}, 1);
    CHECK(bitwise_equal(s.finetune.inputs, s.pretrain.inputs));
    CHECK(s.pretrain.size() == 80);
    Dataset tiny = gen_synthetic(SyntheticKind::two_gaussians, 4, 3, 2, 2, 2.0);
    CHECK_THROWS_AS(split(tiny, {0.4, 0.3, 0.3}, 1), ConfigError);
    CHECK_THROWS_AS(split(d, {0.5, 0.2, 0.2}, 1), ConfigError);
}

TEST_CASE("view batches must agree on the batch size") {
    ViewBatch b;
    b.x = Tensor::zeros({3, 2});
    b.x_prime = Tensor::zeros({3, 2});
    b.x_double_prime = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(b.validate(), ShapeError);
    b.x_double_prime = Tensor::zeros({3, 2});
    b.y = std::vector<int>{0, 1};
    CHECK_THROWS_AS(b.validate(), ShapeError);
}

TEST_CASE("minibatches cover every index once") {
    auto batches = minibatches(10, 4, 3);
    REQUIRE(batches.size() == 3);
    CHECK(batches.back().size() == 2);
    std::vector<std::size_t> all;
    for (auto& b : batches) all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < 10; ++i) CHECK(all[i] == i);
}
