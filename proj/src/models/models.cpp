#include "rcl/models.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "rcl/error.hpp"
#include "rcl/ops.hpp"
#include "rcl/rng.hpp"

namespace rcl {

std::string to_string(EncoderKind kind) { return kind == EncoderKind::dense ? "dense" : "conv_small"; }

EncoderKind parse_encoder_kind(const std::string& text) {
    if (text == "dense") return EncoderKind::dense;
    if (text == "conv_small") return EncoderKind::conv_small;
    throw ConfigError("unknown encoder kind '" + text + "' (expected dense or conv_small)");
}

void EncoderConfig::validate() const {
    if (widths.size() < 2) throw ConfigError("encoder needs at least 2 layers");
    for (auto w : widths)
        if (w == 0) throw ConfigError("encoder widths must be >= 1");
    if (kind == EncoderKind::dense) {
        if (input_shape.empty() || shape_size(input_shape) == 0) throw ConfigError("dense encoder needs an input width");
    } else {
        if (widths.size() != 3) throw ConfigError("conv_small encoder takes widths {c1, c2, dense_width}");
        if (input_shape.size() != 3) throw ConfigError("conv_small encoder needs input shape (C, H, W)");
        if (input_shape[0] == 0 || input_shape[1] == 0 || input_shape[2] == 0 || input_shape[1] % 4 ||
            input_shape[2] % 4) {
            throw ConfigError("conv_small input height and width must be positive multiples of 4, got " +
                              shape_str(input_shape));
        }
    }
}

namespace {

std::size_t count(const std::vector<Tensor>& ts) {
    std::size_t n = 0;
    for (const auto& t : ts) n += t.size();
    return n;
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
}

// He-uniform weights, fan-in-scaled uniform biases.
void push_affine(std::vector<Tensor>& params, std::size_t in, std::size_t out, Rng& rng) {
    const double fan_in = static_cast<double>(in);
    params.push_back(uniform_tensor({in, out}, std::sqrt(6.0 / fan_in), rng));
    params.push_back(uniform_tensor({out}, 1.0 / std::sqrt(fan_in), rng));
}

void push_conv(std::vector<Tensor>& params, std::size_t in, std::size_t out, Rng& rng) {
    const double fan_in = static_cast<double>(in * 9);
    params.push_back(uniform_tensor({out, in, 3, 3}, std::sqrt(6.0 / fan_in), rng));
    params.push_back(uniform_tensor({out}, 1.0 / std::sqrt(fan_in), rng));
}

std::size_t conv_flat_width(const EncoderConfig& c) {
    return c.widths[1] * (c.input_shape[1] / 4) * (c.input_shape[2] / 4);
}

Var affine(Var x, const Var& w, const Var& b) { return ops::add_bias(ops::matmul(x, w), b); }

}  // namespace

std::size_t ModelBundle::encoder_parameter_count() const { return count(encoder); }
std::size_t ModelBundle::head_parameter_count() const { return count(head); }
std::size_t ModelBundle::classifier_parameter_count() const { return count(classifier); }

bool bitwise_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!bitwise_equal(a[i], b[i])) return false;
    return true;
}

ModelBundle init_model(const EncoderConfig& config, std::size_t n_classes, std::size_t head_dim,
                       std::uint64_t seed) {
    config.validate();
    if (n_classes < 2) throw ConfigError("need at least 2 classes");
    if (head_dim == 0) throw ConfigError("projection head dimension must be >= 1");

    ModelBundle m;
    m.config = config;
    m.n_classes = n_classes;
    m.head_dim = head_dim;
    m.rng_seed = seed;

    Rng rng(derive_seed(seed, 1));
    if (config.kind == EncoderKind::dense) {
        std::size_t in = shape_size(config.input_shape);
        for (auto w : config.widths) {
            push_affine(m.encoder, in, w, rng);
            in = w;
        }
    } else {
        push_conv(m.encoder, config.input_shape[0], config.widths[0], rng);
        push_conv(m.encoder, config.widths[0], config.widths[1], rng);
        push_affine(m.encoder, conv_flat_width(config), config.widths[2], rng);
    }

    const std::size_t d = config.output_width();
    Rng head_rng(derive_seed(seed, 2));
    push_affine(m.head, d, d, head_rng);
    push_affine(m.head, d, head_dim, head_rng);

    reset_classifier(m, derive_seed(seed, 3));
    return m;
}

void reset_classifier(ModelBundle& model, std::uint64_t seed) {
    Rng rng(seed);
    model.classifier.clear();
    const std::size_t d = model.config.output_width();
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    model.classifier.push_back(uniform_tensor({d, model.n_classes}, bound, rng));
    model.classifier.push_back(uniform_tensor({model.n_classes}, bound, rng));
}

std::vector<LayerId> layer_ids(const EncoderConfig& config) {
    std::vector<LayerId> ids;
    if (config.kind == EncoderKind::dense) {
        for (std::size_t i = 0; i < config.widths.size(); ++i)
            ids.push_back({i + 1, "dense" + std::to_string(i + 1)});
    } else {
        ids.push_back({1, "conv_block1"});
        ids.push_back({2, "conv_block2"});
        ids.push_back({3, "dense3"});
    }
    return ids;
}

BoundModel::BoundModel(const ModelBundle& model, Tape& tape, PartMask tracked)
    : model_(&model), tape_(&tape), tracked_(tracked) {
    auto bind = [&tape](const std::vector<Tensor>& params, bool track, std::vector<Var>& out) {
        out.reserve(params.size());
        for (const auto& p : params) out.push_back(track ? tape.variable(p) : tape.constant(p));
    };
    bind(model.encoder, tracked.encoder, encoder_);
    bind(model.head, tracked.head, head_);
    bind(model.classifier, tracked.classifier, classifier_);
}

Var BoundModel::encode(Var x, std::vector<LayerOutput>* layers) const {
    const EncoderConfig& c = model_->config;
    const auto ids = layer_ids(c);
    const std::size_t n = x.shape().empty() ? 0 : x.shape()[0];
    Shape expected{n};
    expected.insert(expected.end(), c.input_shape.begin(), c.input_shape.end());
    if (x.value().size() != shape_size(expected) || x.shape().empty()) {
        throw ShapeError("encoder input " + shape_str(x.shape()) + " does not match input shape " +
                         shape_str(c.input_shape));
    }
    auto capture = [&](std::size_t i, Var v) {
        if (layers) layers->push_back({ids[i], v});
    };

    if (c.kind == EncoderKind::dense) {
        Var h = x.shape().size() == 2 ? x : ops::reshape(x, {n, shape_size(c.input_shape)});
        for (std::size_t i = 0; i < c.widths.size(); ++i) {
            h = ops::relu(affine(h, encoder_[2 * i], encoder_[2 * i + 1]));
            capture(i, h);
        }
        return h;
    }

    Var h = x.shape() == expected ? x : ops::reshape(x, expected);
    h = ops::max_pool2x2(ops::relu(ops::conv2d_3x3(h, encoder_[0], encoder_[1])));
    capture(0, h);
    h = ops::max_pool2x2(ops::relu(ops::conv2d_3x3(h, encoder_[2], encoder_[3])));
    capture(1, h);
    h = ops::reshape(h, {n, conv_flat_width(c)});
    h = ops::relu(affine(h, encoder_[4], encoder_[5]));
    capture(2, h);
    return h;
}

Var BoundModel::project(Var representation) const {
    if (representation.shape().size() != 2 || representation.shape()[1] != model_->config.output_width()) {
        throw ShapeError("projection head expects width " + std::to_string(model_->config.output_width()) +
                         ", got " + shape_str(representation.shape()));
    }
    Var h = ops::relu(affine(representation, head_[0], head_[1]));
    return affine(h, head_[2], head_[3]);
}

Var BoundModel::classify(Var representation) const {
    if (representation.shape().size() != 2 || representation.shape()[1] != model_->config.output_width()) {
        throw ShapeError("classifier expects width " + std::to_string(model_->config.output_width()) +
                         ", got " + shape_str(representation.shape()));
    }
    ++classifier_calls_;
    return affine(representation, classifier_[0], classifier_[1]);
}

EncodeResult encode(const ModelBundle& model, const Tensor& x, bool capture) {
    Tape tape;
    BoundModel bound(model, tape, {});
    std::vector<LayerOutput> layers;
    Var rep = bound.encode(tape.constant(x), capture ? &layers : nullptr);
    EncodeResult result;
    result.representation = rep.value();
    for (const auto& l : layers) result.activations.push_back({l.layer, l.output.value().flattened()});
    return result;
}

Tensor project(const ModelBundle& model, const Tensor& representation) {
    Tape tape;
    BoundModel bound(model, tape, {});
    return bound.project(tape.constant(representation)).value();
}

Tensor classify(const ModelBundle& model, const Tensor& representation) {
    Tape tape;
    BoundModel bound(model, tape, {});
    return bound.classify(tape.constant(representation)).value();
}

std::vector<int> predict(const ModelBundle& model, const Tensor& x) {
    Tape tape;
    BoundModel bound(model, tape, {});
    const Tensor logits = bound.classify(bound.encode(tape.constant(x))).value();
    const std::size_t n = logits.rows(), c = logits.cols();
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

std::vector<std::filesystem::path> write_activation_csvs(const std::vector<ActivationRecord>& records,
                                                         const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> paths;
    for (const auto& rec : records) {
        auto path = dir / ("layer_" + std::to_string(rec.layer.ordinal) + "_" + rec.layer.label + ".csv");
        std::ofstream out(path);
        if (!out) throw IoError("cannot write " + path.string());
        const std::size_t n = rec.matrix.rows(), d = rec.matrix.cols();
        out << rec.layer.ordinal << ',' << d << '\n';
        out << std::setprecision(17);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) out << (j ? "," : "") << rec.matrix.at(i, j);
            out << '\n';
        }
        paths.push_back(path);
    }
    return paths;
}

}  // namespace rcl
