#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "rcl/checkpoint.hpp"
#include "rcl/error.hpp"
#include "rcl/models.hpp"
#include "rcl/ops.hpp"
#include "rcl/rng.hpp"

using namespace rcl;

namespace {

EncoderConfig dense(std::vector<std::size_t> widths, std::size_t in) {
    EncoderConfig c;
    c.widths = std::move(widths);
    c.input_shape = {in};
    return c;
}

Tensor random_batch(Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform();
    return t;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("rcl_models_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("init_model is determined by the seed") {
    auto a = init_model(dense({8, 4}, 16), 3, 2, 42);
    auto b = init_model(dense({8, 4}, 16), 3, 2, 42);
    auto c = init_model(dense({8, 4}, 16), 3, 2, 43);
    CHECK(bitwise_equal(a.encoder, b.encoder));
    CHECK(bitwise_equal(a.head, b.head));
    CHECK(bitwise_equal(a.classifier, b.classifier));
    CHECK_FALSE(bitwise_equal(a.encoder, c.encoder));
}

TEST_CASE("parameter counts follow the layer widths") {
    auto m = init_model(dense({8, 4}, 16), 3, 2, 0);
    CHECK(m.encoder_parameter_count() == (16 * 8 + 8) + (8 * 4 + 4));
    REQUIRE(m.head.size() == 4);
    CHECK(m.head[0].shape() == Shape{4, 4});
    CHECK(m.head[2].shape() == Shape{4, 2});
    CHECK(m.head[3].shape() == Shape{2});
    CHECK(m.classifier[0].shape() == Shape{4, 3});
}

TEST_CASE("invalid configurations are rejected") {
    CHECK_THROWS_AS(init_model(dense({8}, 16), 2, 2, 0), ConfigError);
    CHECK_THROWS_AS(init_model(dense({8, 0}, 16), 2, 2, 0), ConfigError);
    EncoderConfig conv;
    conv.kind = EncoderKind::conv_small;
    conv.widths = {4, 4, 8};
    conv.input_shape = {1, 6, 6};
    CHECK_THROWS_AS(init_model(conv, 2, 2, 0), ConfigError);
}

TEST_CASE("encode captures one record per layer") {
    auto m = init_model(dense({6, 5, 3}, 4), 2, 2, 1);
    Tensor x = random_batch({7, 4}, 2);
    CHECK(encode(m, x, false).activations.empty());
    auto r = encode(m, x, true);
    REQUIRE(r.activations.size() == 3);
    CHECK(r.activations[0].matrix.shape() == Shape{7, 6});
    CHECK(r.activations[1].matrix.shape() == Shape{7, 5});
    CHECK(r.activations[2].matrix.shape() == Shape{7, 3});
    CHECK(r.activations[0].layer.ordinal == 1);
    CHECK(bitwise_equal(r.activations.back().matrix, r.representation));
    CHECK(bitwise_equal(encode(m, x, false).representation, r.representation));
    CHECK_THROWS_AS(encode(m, random_batch({7, 5}, 2), false), ShapeError);
}

TEST_CASE("zero-weight encoder outputs the relu of the bias chain") {
    auto m = init_model(dense({3, 2}, 4), 2, 2, 5);
    m.encoder[0] = Tensor::zeros({4, 3});
    m.encoder[1] = Tensor::vector({0.5, -1.0, 2.0});
    m.encoder[2] = Tensor::matrix({{1, 0}, {0, 1}, {1, 1}});
    m.encoder[3] = Tensor::vector({-0.25, 0.0});
    // layer1 = relu(b1) = (0.5, 0, 2); layer2 = relu(layer1 W2 + b2) = (2.25, 2).
    auto r = encode(m, random_batch({2, 4}, 3), false).representation;
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(r.at(i, 0) == 2.25);
        CHECK(r.at(i, 1) == 2.0);
    }
}

TEST_CASE("classifier with zero parameters gives zero logits") {
    auto m = init_model(dense({4, 4}, 3), 5, 2, 0);
    for (auto& t : m.classifier) t = Tensor::zeros(t.shape());
    auto logits = classify(m, encode(m, random_batch({3, 3}, 1), false).representation);
    CHECK(logits.shape() == Shape{3, 5});
    for (double v : logits.values()) CHECK(v == 0.0);
}

TEST_CASE("normalised projections have unit rows") {
    auto m = init_model(dense({4, 4}, 3), 2, 3, 0);
    Tape tape;
    auto z = ops::l2_normalize_rows(tape.constant(project(m, encode(m, random_batch({5, 3}, 9), false).representation)));
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 3; ++c) s += z.value().at(r, c) * z.value().at(r, c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("a frozen encoder exposes only classifier gradients") {
    auto m = init_model(dense({4, 4}, 3), 2, 2, 0);
    Tape tape;
    BoundModel bound(m, tape, PartMask{false, false, true});
    Var logits = bound.classify(bound.encode(tape.constant(random_batch({3, 3}, 1))));
    Gradients g = tape.backward(ops::sum(logits));
    CHECK(g.size() == bound.classifier_params().size());
    for (const auto& v : bound.classifier_params()) CHECK(g.count(v.id()) == 1);
    for (const auto& v : bound.encoder_params()) CHECK(g.count(v.id()) == 0);
    CHECK(bound.classifier_calls() == 1);
}

TEST_CASE("conv_small encoder produces block outputs") {
    EncoderConfig conv;
    conv.kind = EncoderKind::conv_small;
    conv.widths = {3, 4, 6};
    conv.input_shape = {1, 8, 8};
    auto m = init_model(conv, 10, 4, 3);
    auto r = encode(m, random_batch({2, 1, 8, 8}, 4), true);
    REQUIRE(r.activations.size() == 3);
    CHECK(r.activations[0].layer.label == "conv_block1");
    CHECK(r.activations[0].matrix.shape() == Shape{2, 3 * 4 * 4});
    CHECK(r.activations[1].matrix.shape() == Shape{2, 4 * 2 * 2});
    CHECK(r.representation.shape() == Shape{2, 6});
    CHECK(predict(m, random_batch({2, 1, 8, 8}, 4)).size() == 2);
}

TEST_CASE("checkpoint round trip is bitwise exact") {
    auto m = init_model(dense({5, 3}, 4), 3, 2, 17);
    auto dir = temp_dir("roundtrip");
    save_checkpoint(m, dir / "m.rrlb");
    auto back = load_checkpoint(dir / "m.rrlb");
    CHECK(back.config == m.config);
    CHECK(back.n_classes == 3);
    CHECK(back.rng_seed == 17);
    CHECK(bitwise_equal(back.encoder, m.encoder));
    CHECK(bitwise_equal(back.head, m.head));
    CHECK(bitwise_equal(back.classifier, m.classifier));
}

TEST_CASE("checkpoint corruption is detected") {
    auto m = init_model(dense({5, 3}, 4), 3, 2, 17);
    std::string bytes = serialize_checkpoint(m);

    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(bad_magic), doctest::Contains("version mismatch"), FormatError);

    std::string bad_version = bytes;
    bad_version[4] = 9;
    CHECK_THROWS_AS(deserialize_checkpoint(bad_version), FormatError);

    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), FormatError);

    // Second encoder width: magic, version, kind, input rank, one dim, width count, first width.
    auto tampered = bytes;
    const std::size_t second_width = 4 + 4 + 1 + 4 + 4 + 4 + 4;
    REQUIRE(tampered[second_width] == 3);
    tampered[second_width] = 2;
    CHECK_THROWS_AS(deserialize_checkpoint(tampered), FormatError);

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/m.rrlb"), IoError);
}

TEST_CASE("frozen and unfrozen checkpoints differ only in the freeze byte") {
    auto m = init_model(dense({5, 3}, 4), 3, 2, 17);
    std::string a = serialize_checkpoint(m);
    m.freeze_encoder = true;
    std::string b = serialize_checkpoint(m);
    REQUIRE(a.size() == b.size());
    std::size_t diffs = 0;
    for (std::size_t i = 0; i < a.size(); ++i) diffs += a[i] != b[i];
    CHECK(diffs == 1);
}

TEST_CASE("activation CSVs carry a header and one row per sample") {
    auto m = init_model(dense({3, 2}, 4), 2, 2, 1);
    auto r = encode(m, random_batch({5, 4}, 0), true);
    auto dir = temp_dir("acts");
    auto files = write_activation_csvs(r.activations, dir);
    REQUIRE(files.size() == 2);
    std::ifstream in(files[1]);
    std::string line;
    std::getline(in, line);
    CHECK(line == "2,2");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 5);
}
