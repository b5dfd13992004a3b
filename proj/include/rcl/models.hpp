#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rcl/tape.hpp"
#include "rcl/tensor.hpp"

namespace rcl {

enum class EncoderKind { dense, conv_small };

std::string to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(const std::string& text);

/// Base encoder layout.
///
/// dense: `widths` are the hidden layer widths; `input_shape` is {d}.
/// conv_small: `widths` = {c1, c2, d}: two conv3x3 + relu + maxpool blocks
/// with c1 and c2 channels, then one dense layer of width d; `input_shape`
/// is {C, H, W} with H and W divisible by 4.
struct EncoderConfig {
    EncoderKind kind = EncoderKind::dense;
    std::vector<std::size_t> widths{64, 64, 32, 32, 16};
    Shape input_shape{20};

    std::size_t output_width() const { return widths.empty() ? 0 : widths.back(); }
    std::size_t layer_count() const { return widths.size(); }
    // Throws ConfigError when the layout is unusable.
    void validate() const;

    bool operator==(const EncoderConfig&) const = default;
};

/// Encoder f(theta_b), projection head g(theta_ph) and linear classifier
/// c(theta_c). Each affine layer is stored as a weight (in, out) followed
/// by a bias (out); conv layers store (out, in, 3, 3) kernels.
struct ModelBundle {
    EncoderConfig config;
    std::size_t n_classes = 2;
    std::size_t head_dim = 16;
    std::vector<Tensor> encoder;
    std::vector<Tensor> head;
    std::vector<Tensor> classifier;
    bool freeze_encoder = false;
    std::uint64_t rng_seed = 0;

    std::size_t encoder_parameter_count() const;
    std::size_t head_parameter_count() const;
    std::size_t classifier_parameter_count() const;
};

bool bitwise_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b);

ModelBundle init_model(const EncoderConfig& config, std::size_t n_classes, std::size_t head_dim,
                       std::uint64_t seed);
// Fresh classifier parameters drawn from `seed`.
void reset_classifier(ModelBundle& model, std::uint64_t seed);

struct LayerId {
    std::size_t ordinal = 0;  // 1-based, in forward order
    std::string label;
};

struct ActivationRecord {
    LayerId layer;
    Tensor matrix;  // n_samples x d_layer
};

struct LayerOutput {
    LayerId layer;
    Var output;
};

struct PartMask {
    bool encoder = false;
    bool head = false;
    bool classifier = false;
};

/// A model whose parameters have been placed on a tape; parameters in
/// `tracked` parts are variables, the rest constants.
class BoundModel {
public:
    BoundModel(const ModelBundle& model, Tape& tape, PartMask tracked);

    // Representation; when `layers` is given, one output per encoder layer.
    Var encode(Var x, std::vector<LayerOutput>* layers = nullptr) const;
    Var project(Var representation) const;
    Var classify(Var representation) const;

    const ModelBundle& model() const { return *model_; }
    Tape& tape() const { return *tape_; }
    const PartMask& tracked() const { return tracked_; }
    const std::vector<Var>& encoder_params() const { return encoder_; }
    const std::vector<Var>& head_params() const { return head_; }
    const std::vector<Var>& classifier_params() const { return classifier_; }
    std::size_t classifier_calls() const { return classifier_calls_; }

private:
    const ModelBundle* model_;
    Tape* tape_;
    PartMask tracked_;
    std::vector<Var> encoder_;
    std::vector<Var> head_;
    std::vector<Var> classifier_;
    mutable std::size_t classifier_calls_ = 0;
};

struct EncodeResult {
    Tensor representation;
    std::vector<ActivationRecord> activations;
};

// Evaluation-only forward pass; activations are flattened to rows.
EncodeResult encode(const ModelBundle& model, const Tensor& x, bool capture);
Tensor project(const ModelBundle& model, const Tensor& representation);
Tensor classify(const ModelBundle& model, const Tensor& representation);
// Argmax class per row of the end-to-end prediction.
std::vector<int> predict(const ModelBundle& model, const Tensor& x);

// Layer identifiers the encoder produces, in forward order.
std::vector<LayerId> layer_ids(const EncoderConfig& config);

// One CSV per layer: header "layer_id,d", then n rows of activations.
std::vector<std::filesystem::path> write_activation_csvs(const std::vector<ActivationRecord>& records,
                                                         const std::filesystem::path& dir);

}  // namespace rcl
