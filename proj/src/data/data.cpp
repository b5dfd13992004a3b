#include "rcl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "rcl/error.hpp"
#include "rcl/rng.hpp"

namespace rcl {

void Dataset::validate() const {
    if (labels.empty()) throw ConfigError("dataset '" + name + "' is empty");
    if (inputs.rank() < 2 || inputs.rows() != labels.size()) {
        throw ConfigError("dataset '" + name + "' inputs " + shape_str(inputs.shape()) + " do not match " +
                          std::to_string(labels.size()) + " labels");
    }
    if (n_classes < 2) throw ConfigError("dataset '" + name + "' needs at least 2 classes");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
            throw ConfigError("dataset '" + name + "' label " + std::to_string(y) + " outside [0, " +
                              std::to_string(n_classes) + ")");
        }
    if (!inputs.all_finite()) throw NumericError("dataset '" + name + "' contains NaN or Inf");
    if (image)
        for (double v : inputs.data())
            if (v < 0.0 || v > 1.0) throw ConfigError("image dataset '" + name + "' has values outside [0, 1]");
}

Dataset Dataset::subset(std::span<const std::size_t> index) const {
    Dataset d;
    d.inputs = inputs.gather_rows(index);
    d.labels.reserve(index.size());
    for (auto i : index) d.labels.push_back(labels.at(i));
    d.name = name;
    d.n_classes = n_classes;
    d.image = image;
    return d;
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(n_classes, 0);
    for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
    return counts;
}

std::uint64_t fingerprint(const Dataset& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (auto d : data.inputs.shape()) {
        const std::uint64_t v = d;
        feed(&v, sizeof v);
    }
    feed(data.inputs.data().data(), data.inputs.size() * sizeof(double));
    for (int y : data.labels) {
        const std::int32_t v = y;
        feed(&v, sizeof v);
    }
    return h;
}

void ViewBatch::validate() const {
    const std::size_t n = x.rows();
    auto check = [n](const Tensor& t, const char* what) {
        if (t.shape() != Shape{} && t.rows() != n) {
            throw ShapeError(std::string("view batch member ") + what + " has " + std::to_string(t.rows()) +
                             " rows, expected " + std::to_string(n));
        }
    };
    check(x_prime, "x_prime");
    check(x_double_prime, "x_double_prime");
    if (x_adv) {
        check(*x_adv, "x_adv");
        if (x_adv->shape() != x.shape()) throw ShapeError("x_adv shape differs from x");
    }
    if (y && y->size() != n) throw ShapeError("view batch labels do not match batch size");
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const std::filesystem::path& path) {
    if (bytes.size() < offset + 4) throw FormatError(path.string() + ": truncated IDX header");
    const auto* b = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

void write_be32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    out.write(b, 4);
}

std::size_t infer_classes(const std::vector<int>& labels, std::size_t given) {
    if (given) return given;
    int mx = 0;
    for (int y : labels) mx = std::max(mx, y);
    return static_cast<std::size_t>(mx) + 1;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t n_classes) {
    const std::string ib = read_file(images);
    const std::string lb = read_file(labels);
    if (read_be32(ib, 0, images) != 0x00000803) throw FormatError(images.string() + ": bad IDX image magic");
    if (read_be32(lb, 0, labels) != 0x00000801) throw FormatError(labels.string() + ": bad IDX label magic");
    const std::size_t n = read_be32(ib, 4, images);
    const std::size_t rows = read_be32(ib, 8, images);
    const std::size_t cols = read_be32(ib, 12, images);
    const std::size_t nl = read_be32(lb, 4, labels);
    if (n != nl) {
        throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(nl) +
                          " labels");
    }
    if (ib.size() != 16 + n * rows * cols) throw FormatError(images.string() + ": truncated or oversized pixel data");
    if (lb.size() != 8 + n) throw FormatError(labels.string() + ": truncated or oversized label data");

    Dataset d;
    d.name = images.stem().string();
    d.image = true;
    d.inputs = Tensor({n, 1, rows, cols});
    auto px = d.inputs.data();
    for (std::size_t i = 0; i < n * rows * cols; ++i)
        px[i] = static_cast<double>(static_cast<unsigned char>(ib[16 + i])) / 255.0;
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.labels[i] = static_cast<unsigned char>(lb[8 + i]);
    d.n_classes = infer_classes(d.labels, n_classes);
    d.validate();
    return d;
}

void save_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels) {
    const Shape item = data.item_shape();
    std::size_t rows = 0, cols = 0;
    if (item.size() == 3 && item[0] == 1) {
        rows = item[1];
        cols = item[2];
    } else if (item.size() == 2) {
        rows = item[0];
        cols = item[1];
    } else {
        throw ShapeError("save_idx needs single-channel images, got item shape " + shape_str(item));
    }
    std::ofstream im(images, std::ios::binary), lb(labels, std::ios::binary);
    if (!im || !lb) throw IoError("cannot write IDX files " + images.string());
    write_be32(im, 0x00000803);
    write_be32(im, static_cast<std::uint32_t>(data.size()));
    write_be32(im, static_cast<std::uint32_t>(rows));
    write_be32(im, static_cast<std::uint32_t>(cols));
    for (double v : data.inputs.data()) {
        const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
        im.put(static_cast<char>(static_cast<unsigned char>(q)));
    }
    write_be32(lb, 0x00000801);
    write_be32(lb, static_cast<std::uint32_t>(data.size()));
    for (int y : data.labels) lb.put(static_cast<char>(static_cast<unsigned char>(y)));
}

// ---------------------------------------------------------------------------
// CSV

Dataset load_csv(const std::filesystem::path& path, std::size_t n_classes) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("label", 0) != 0) {
        throw FormatError(path.string() + ": missing 'label,f0,...' header");
    }
    const std::size_t dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    if (dim == 0) throw FormatError(path.string() + ": header declares no features");
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t k = 0;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str()) {
                throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
            }
            if (!std::isfinite(v)) throw NumericError(path.string() + ":" + std::to_string(lineno) + ": NaN/Inf value");
            if (k == 0) {
                if (v < 0 || v != std::floor(v)) {
                    throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad label '" + cell + "'");
                }
                labels.push_back(static_cast<int>(v));
            } else {
                values.push_back(v);
            }
            ++k;
        }
        if (k != dim + 1) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim + 1) +
                              " columns, got " + std::to_string(k));
        }
    }
    Dataset d;
    d.name = path.stem().string();
    d.inputs = Tensor({labels.size(), dim}, std::move(values));
    d.labels = std::move(labels);
    d.n_classes = infer_classes(d.labels, n_classes);
    d.validate();
    return d;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    const std::size_t d = data.inputs.cols();
    out << "label";
    for (std::size_t j = 0; j < d; ++j) out << ",f" << j;
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << data.labels[i];
        for (std::size_t j = 0; j < d; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", data.inputs.at(i, j));
            out << ',' << buf;
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Synthetic generators

std::string to_string(SyntheticKind kind) {
    switch (kind) {
        case SyntheticKind::two_gaussians: return "two_gaussians";
        case SyntheticKind::rings: return "rings";
        case SyntheticKind::blobs_k: return "blobs_k";
    }
    return "?";
}

SyntheticKind parse_synthetic_kind(const std::string& text) {
    if (text == "two_gaussians") return SyntheticKind::two_gaussians;
    if (text == "rings") return SyntheticKind::rings;
    if (text == "blobs_k") return SyntheticKind::blobs_k;
    throw ConfigError("unknown synthetic kind '" + text + "' (expected two_gaussians, rings or blobs_k)");
}

Dataset gen_synthetic(SyntheticKind kind, std::size_t n, std::size_t dim, std::size_t n_classes,
                      std::uint64_t seed, double separation) {
    if (n_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
    if (n < n_classes) throw ConfigError("synthetic data needs n >= number of classes");
    if (dim == 0) throw ConfigError("synthetic data needs dim >= 1");
    if (!(separation > 0.0)) throw ConfigError("synthetic separation must be positive");
    if (kind == SyntheticKind::two_gaussians && n_classes != 2) throw ConfigError("two_gaussians has exactly 2 classes");
    if (kind == SyntheticKind::rings && dim < 2) throw ConfigError("rings needs dim >= 2");

    Rng rng(seed);
    std::vector<std::vector<double>> means(n_classes, std::vector<double>(dim, 0.0));
    if (kind == SyntheticKind::two_gaussians) {
        means[0][0] = -separation / 2.0;
        means[1][0] = separation / 2.0;
    } else if (kind == SyntheticKind::blobs_k) {
        for (auto& m : means) {
            double norm = 0.0;
            for (auto& v : m) {
                v = rng.normal();
                norm += v * v;
            }
            norm = std::sqrt(norm);
            for (auto& v : m) v *= separation / norm;
        }
    }

    Dataset d;
    d.name = to_string(kind);
    d.n_classes = n_classes;
    d.inputs = Tensor({n, dim});
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % n_classes;
        d.labels[i] = static_cast<int>(c);
        double* row = &d.inputs.at(i, 0);
        if (kind == SyntheticKind::rings) {
            const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double radius = static_cast<double>(c + 1) * separation;
            row[0] = radius * std::cos(angle) + 0.1 * separation * rng.normal();
            row[1] = radius * std::sin(angle) + 0.1 * separation * rng.normal();
            for (std::size_t j = 2; j < dim; ++j) row[j] = rng.normal();
        } else {
            for (std::size_t j = 0; j < dim; ++j) row[j] = means[c][j] + rng.normal();
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// Augmentation

void AugmentSpec::validate() const {
    auto prob = [](double p, const char* what) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must be a probability in [0, 1]");
    };
    prob(feature_dropout_prob, "feature_dropout_prob");
    prob(horizontal_flip_prob, "horizontal_flip_prob");
    prob(erase_patch_prob, "erase_patch_prob");
    if (!(gaussian_noise_sigma >= 0.0)) throw ConfigError("gaussian_noise_sigma must be >= 0");
}

bool AugmentSpec::identity() const {
    return gaussian_noise_sigma == 0.0 && feature_dropout_prob == 0.0 && crop_shift_max_pixels == 0 &&
           horizontal_flip_prob == 0.0 && erase_patch_prob == 0.0;
}

namespace {

void augment_vector(double* row, std::size_t d, const AugmentSpec& spec, Rng& rng) {
    for (std::size_t j = 0; j < d; ++j) {
        if (spec.feature_dropout_prob > 0.0 && rng.bernoulli(spec.feature_dropout_prob)) {
            row[j] = 0.0;
            continue;
        }
        if (spec.gaussian_noise_sigma > 0.0) row[j] += spec.gaussian_noise_sigma * rng.normal();
    }
}

void augment_image(double* img, std::size_t C, std::size_t H, std::size_t W, const AugmentSpec& spec, Rng& rng) {
    const std::size_t HW = H * W;
    std::vector<double> tmp(C * HW);
    if (spec.crop_shift_max_pixels > 0) {
        const auto k = static_cast<long>(spec.crop_shift_max_pixels);
        const long dy = static_cast<long>(rng.below(static_cast<std::size_t>(2 * k + 1))) - k;
        const long dx = static_cast<long>(rng.below(static_cast<std::size_t>(2 * k + 1))) - k;
        std::fill(tmp.begin(), tmp.end(), 0.0);
        for (std::size_t c = 0; c < C; ++c)
            for (long i = 0; i < static_cast<long>(H); ++i)
                for (long j = 0; j < static_cast<long>(W); ++j) {
                    const long si = i + dy, sj = j + dx;
                    if (si >= 0 && si < static_cast<long>(H) && sj >= 0 && sj < static_cast<long>(W))
                        tmp[c * HW + static_cast<std::size_t>(i) * W + static_cast<std::size_t>(j)] =
                            img[c * HW + static_cast<std::size_t>(si) * W + static_cast<std::size_t>(sj)];
                }
        std::copy(tmp.begin(), tmp.end(), img);
    }
    if (spec.horizontal_flip_prob > 0.0 && rng.bernoulli(spec.horizontal_flip_prob)) {
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < H; ++i) std::reverse(img + c * HW + i * W, img + c * HW + (i + 1) * W);
    }
    if (spec.erase_patch_prob > 0.0 && rng.bernoulli(spec.erase_patch_prob)) {
        const std::size_t ph = std::max<std::size_t>(1, H / 4), pw = std::max<std::size_t>(1, W / 4);
        const std::size_t top = rng.below(H - ph + 1), left = rng.below(W - pw + 1);
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = top; i < top + ph; ++i)
                for (std::size_t j = left; j < left + pw; ++j) img[c * HW + i * W + j] = 0.0;
    }
    if (spec.gaussian_noise_sigma > 0.0)
        for (std::size_t k = 0; k < C * HW; ++k) img[k] += spec.gaussian_noise_sigma * rng.normal();
    for (std::size_t k = 0; k < C * HW; ++k) img[k] = std::clamp(img[k], 0.0, 1.0);
}

Tensor augment(const Tensor& x, bool image, const AugmentSpec& spec, Rng& rng) {
    Tensor out = x;
    const std::size_t n = x.rows(), d = x.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data().data() + i * d;
        if (image) {
            const Shape& s = x.shape();
            const std::size_t C = s.size() == 4 ? s[1] : 1;
            const std::size_t H = s.size() == 4 ? s[2] : s[1];
            const std::size_t W = s.size() == 4 ? s[3] : s[2];
            augment_image(row, C, H, W, spec, rng);
        } else {
            augment_vector(row, d, spec, rng);
        }
    }
    return out;
}

}  // namespace

std::pair<Tensor, Tensor> make_views(const Tensor& x, bool image, const AugmentSpec& spec, std::uint64_t seed) {
    spec.validate();
    if (!image && (spec.crop_shift_max_pixels > 0 || spec.horizontal_flip_prob > 0.0 || spec.erase_patch_prob > 0.0)) {
        throw ConfigError("image augmentations requested for vector data");
    }
    if (image && spec.feature_dropout_prob > 0.0) throw ConfigError("feature dropout requested for image data");
    if (image && x.rank() != 3 && x.rank() != 4) throw ShapeError("image batch must be (N, C, H, W) or (N, H, W)");
    if (spec.identity()) return {x, x};
    Rng first(derive_seed(seed, 0x71));
    Rng second(derive_seed(seed, 0x72));
    return {augment(x, image, spec, first), augment(x, image, spec, second)};
}

// ---------------------------------------------------------------------------
// Splits and batching

SplitResult split(const Dataset& data, std::array<double, 3> fractions, std::uint64_t seed) {
    for (double f : fractions)
        if (!(f >= 0.0)) throw ConfigError("split fractions must be non-negative");
    const double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
    const std::size_t active = static_cast<std::size_t>(std::count_if(fractions.begin(), fractions.end(),
                                                                      [](double f) { return f > 0.0; }));

    std::vector<std::vector<std::size_t>> by_class(data.n_classes);
    for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);

    Rng rng(seed);
    std::array<std::vector<std::size_t>, 3> parts;
    for (std::size_t c = 0; c < data.n_classes; ++c) {
        auto& members = by_class[c];
        if (members.empty()) continue;
        if (members.size() < active) {
            throw ConfigError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                              " samples, fewer than the " + std::to_string(active) + " requested splits");
        }
        const auto perm = rng.permutation(members.size());
        const double nc = static_cast<double>(members.size());
        std::array<std::size_t, 3> counts{};
        std::array<double, 3> rem{};
        std::size_t assigned = 0;
        for (int k = 0; k < 3; ++k) {
            const double exact = nc * fractions[static_cast<std::size_t>(k)];
            counts[static_cast<std::size_t>(k)] = static_cast<std::size_t>(std::floor(exact + 1e-9));
            rem[static_cast<std::size_t>(k)] = exact - static_cast<double>(counts[static_cast<std::size_t>(k)]);
            assigned += counts[static_cast<std::size_t>(k)];
        }
        while (assigned < members.size()) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < 3; ++k)
                if (rem[k] > rem[best]) best = k;
            ++counts[best];
            rem[best] = -1.0;
            ++assigned;
        }
        // Every active split receives at least one sample of the class.
        for (std::size_t k = 0; k < 3; ++k) {
            if (fractions[k] > 0.0 && counts[k] == 0) {
                std::size_t donor = 0;
                for (std::size_t j = 1; j < 3; ++j)
                    if (counts[j] > counts[donor]) donor = j;
                --counts[donor];
                ++counts[k];
            }
        }
        std::size_t pos = 0;
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t j = 0; j < counts[k]; ++j) parts[k].push_back(members[perm[pos++]]);
    }
    for (auto& p : parts) std::sort(p.begin(), p.end());

    SplitResult out;
    out.pretrain = data.subset(parts[0]);
    out.finetune = fractions[1] > 0.0 ? data.subset(parts[1]) : out.pretrain;
    out.test = data.subset(parts[2]);
    return out;
}

std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                  bool shuffle) {
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    std::vector<std::size_t> order;
    if (shuffle) {
        Rng rng(seed);
        order = rng.permutation(n);
    } else {
        order.resize(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < n; i += batch_size)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
    return batches;
}

}  // namespace rcl
