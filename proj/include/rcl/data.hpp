#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rcl/tensor.hpp"

namespace rcl {

struct Dataset {
    Tensor inputs;  // (n, item_shape...)
    std::vector<int> labels;
    std::string name;
    std::size_t n_classes = 0;
    bool image = false;  // pixel values in [0, 1]

    std::size_t size() const { return labels.size(); }
    Shape item_shape() const { return Shape(inputs.shape().begin() + 1, inputs.shape().end()); }
    // Throws ConfigError on broken invariants (label range, NaN, image range).
    void validate() const;
    Dataset subset(std::span<const std::size_t> index) const;
    std::vector<std::size_t> class_counts() const;
};

// FNV-1a over shape, values and labels.
std::uint64_t fingerprint(const Dataset& data);

/// A minibatch with its two augmented views and optional adversarial copy.
struct ViewBatch {
    Tensor x;
    Tensor x_prime;
    Tensor x_double_prime;
    std::optional<std::vector<int>> y;
    std::optional<Tensor> x_adv;

    std::size_t size() const { return x.rows(); }
    // All present members share the leading dimension.
    void validate() const;
};

// IDX files: magic 0x00000803 (u8 images) / 0x00000801 (u8 labels),
// big-endian u32 dimensions. Pixels are scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t n_classes = 0);
void save_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels);

// CSV vectors: header "label,f0,f1,...", one row per sample.
Dataset load_csv(const std::filesystem::path& path, std::size_t n_classes = 0);
void save_csv(const Dataset& data, const std::filesystem::path& path);

enum class SyntheticKind { two_gaussians, rings, blobs_k };
std::string to_string(SyntheticKind kind);
SyntheticKind parse_synthetic_kind(const std::string& text);

/// Deterministic unit-variance generators. Labels are assigned round-robin.
/// two_gaussians: class means at -/+ (separation / 2) e1 (requires C = 2).
/// rings: class c on a circle of radius (c + 1) * separation in the first two
/// coordinates, unit noise elsewhere.
/// blobs_k: class means drawn on a sphere of radius separation.
Dataset gen_synthetic(SyntheticKind kind, std::size_t n, std::size_t dim, std::size_t n_classes,
                      std::uint64_t seed, double separation);

struct AugmentSpec {
    // vectors and images
    double gaussian_noise_sigma = 0.0;
    // vectors
    double feature_dropout_prob = 0.0;
    // images
    std::size_t crop_shift_max_pixels = 0;
    double horizontal_flip_prob = 0.0;
    double erase_patch_prob = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
    bool identity() const;
};

/// Two independent augmentation draws of x. Images are re-clamped to
/// [0, 1]. Throws ConfigError when image-only options are set for vector
/// data.
std::pair<Tensor, Tensor> make_views(const Tensor& x, bool image, const AugmentSpec& spec, std::uint64_t seed);

struct SplitResult {
    Dataset pretrain;
    Dataset finetune;
    Dataset test;
};

/// Disjoint label-stratified split. Per class the counts follow the
/// largest-remainder rule. A zero finetune fraction aliases D_f to D_p.
SplitResult split(const Dataset& data, std::array<double, 3> fractions, std::uint64_t seed);

// Index batches over a shuffled permutation; the last batch may be short.
std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                  bool shuffle = true);

}  // namespace rcl
