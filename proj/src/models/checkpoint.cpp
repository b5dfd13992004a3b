#include "rcl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rcl/error.hpp"

namespace rcl {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'R', 'R', 'L', 'B'};

class Writer {
public:
    template <typename T>
    void put(T v) {
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out_.append(buf, sizeof(T));
    }
    void raw(const char* p, std::size_t n) { out_.append(p, n); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& in) : in_(in) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void raw(char* p, std::size_t n) {
        need(n);
        std::memcpy(p, in_.data() + pos_, n);
        pos_ += n;
    }
    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    const std::string& in_;
    std::size_t pos_ = 0;
};

void put_group(Writer& w, const std::vector<Tensor>& group) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(group.size()));
    for (const auto& t : group) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
        w.raw(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(double));
    }
}

std::vector<Tensor> get_group(Reader& r, const std::vector<Tensor>& expected, const char* name) {
    const auto n = r.get<std::uint32_t>();
    if (n != expected.size()) {
        throw FormatError(std::string("checkpoint ") + name + " has " + std::to_string(n) +
                          " tensors, declared config implies " + std::to_string(expected.size()));
    }
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) throw FormatError("checkpoint tensor rank out of range");
        Shape shape(rank);
        for (auto& d : shape) d = r.get<std::uint32_t>();
        if (shape != expected[i].shape()) {
            throw FormatError(std::string("checkpoint ") + name + " tensor " + std::to_string(i) + " has shape " +
                              shape_str(shape) + ", declared config implies " + shape_str(expected[i].shape()));
        }
        Tensor t(shape);
        r.raw(reinterpret_cast<char*>(t.data().data()), t.size() * sizeof(double));
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

std::string serialize_checkpoint(const ModelBundle& model) {
    Writer w;
    w.raw(kMagic, 4);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint8_t>(model.config.kind == EncoderKind::dense ? 0 : 1);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.config.input_shape.size()));
    for (auto d : model.config.input_shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.config.widths.size()));
    for (auto d : model.config.widths) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.n_classes));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.head_dim));
    w.put<std::uint64_t>(model.rng_seed);
    w.put<std::uint8_t>(model.freeze_encoder ? 1 : 0);
    put_group(w, model.encoder);
    put_group(w, model.head);
    put_group(w, model.classifier);
    return w.take();
}

ModelBundle deserialize_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint: bad magic bytes (version mismatch)");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
    }
    EncoderConfig cfg;
    const auto kind = r.get<std::uint8_t>();
    if (kind > 1) throw FormatError("checkpoint encoder kind out of range");
    cfg.kind = kind == 0 ? EncoderKind::dense : EncoderKind::conv_small;
    cfg.input_shape.resize(r.get<std::uint32_t>());
    if (cfg.input_shape.size() > 8) throw FormatError("checkpoint input rank out of range");
    for (auto& d : cfg.input_shape) d = r.get<std::uint32_t>();
    cfg.widths.resize(r.get<std::uint32_t>());
    if (cfg.widths.size() > 1024) throw FormatError("checkpoint layer count out of range");
    for (auto& d : cfg.widths) d = r.get<std::uint32_t>();
    const auto n_classes = r.get<std::uint32_t>();
    const auto head_dim = r.get<std::uint32_t>();
    const auto seed = r.get<std::uint64_t>();
    const auto freeze = r.get<std::uint8_t>();

    // A freshly initialised model gives the expected tensor shapes.
    ModelBundle m;
    try {
        m = init_model(cfg, n_classes, head_dim, seed);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint declares an invalid config: ") + e.what());
    }
    m.freeze_encoder = freeze != 0;
    m.encoder = get_group(r, m.encoder, "encoder");
    m.head = get_group(r, m.head, "head");
    m.classifier = get_group(r, m.classifier, "classifier");
    if (!r.done()) throw FormatError("checkpoint has trailing bytes");
    return m;
}

void save_checkpoint(const ModelBundle& model, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    const std::string bytes = serialize_checkpoint(model);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

}  // namespace rcl
