#include "stbln/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stbln/errors.hpp"

namespace stbln {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

class Writer {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    void u32(std::uint64_t v) {
        if (v > 0xFFFFFFFFu) throw ConfigError("value " + std::to_string(v) + " does not fit the u32 field");
        const auto x = static_cast<std::uint32_t>(v);
        bytes(&x, 4);
    }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void f64(double v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u32(s.size());
        bytes(s.data(), s.size());
    }
    void floats(const std::vector<float>& v) { bytes(v.data(), v.size() * sizeof(float)); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    Reader(const std::string& data, const char* what) : data_(data), what_(what) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

    [[noreturn]] void fail(const std::string& why) const {
        throw ParseError(std::string(what_) + ": " + why + " at byte " + std::to_string(pos_), pos_);
    }
    void need(std::size_t n) const {
        if (remaining() < n) {
            fail("truncated, needed " + std::to_string(n) + " more bytes but " + std::to_string(remaining()) +
                 " remain");
        }
    }
    void bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t x = 0;
        bytes(&x, 4);
        return x;
    }
    std::uint64_t u64() {
        std::uint64_t x = 0;
        bytes(&x, 8);
        return x;
    }
    double f64() {
        double x = 0;
        bytes(&x, 8);
        return x;
    }
    std::string str() {
        const auto n = u32();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::vector<float> floats(std::size_t n) {
        if (n > remaining() / sizeof(float)) need(n * sizeof(float));
        std::vector<float> v(n);
        bytes(v.data(), n * sizeof(float));
        return v;
    }
    void magic(const char (&m)[5]) {
        need(4);
        if (data_.compare(pos_, 4, m, 4) != 0) fail(std::string("bad magic, expected '") + m + "'");
        pos_ += 4;
    }

private:
    const std::string& data_;
    const char* what_;
    std::size_t pos_ = 0;
};

std::vector<float> to_floats(std::span<const double> v) {
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
    return out;
}

void write_config(Writer& w, const NetworkConfig& c) {
    w.u32(c.layers.size());
    for (const auto& l : c.layers) {
        w.u32(l.channels);
        w.u32(l.stride);
        w.u32(l.nodes);
        w.u32(static_cast<std::uint32_t>(l.variant.kind));
        w.u32(l.variant.rank);
    }
    w.u32(c.lambda ? 1 : 0);
    w.u32(c.lambda.value_or(0));
    w.u32(c.num_classes);
    w.u32(c.in_channels);
    w.u32(c.frames);
    w.u32(c.joints);
    w.u32(c.temporal_kernel);
    w.u32(c.input_bn ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(c.bilinear_init));
}

std::uint32_t flag(Reader& r) {
    const auto at = r.offset();
    const auto v = r.u32();
    if (v > 1) throw ParseError("checkpoint: expected 0 or 1 at byte " + std::to_string(at), at);
    return v;
}

NetworkConfig read_config(Reader& r) {
    NetworkConfig c;
    const auto n = r.u32();
    if (n == 0 || n > 4096) r.fail("implausible layer count " + std::to_string(n));
    for (std::uint32_t i = 0; i < n; ++i) {
        LayerSpec l;
        l.channels = r.u32();
        l.stride = r.u32();
        l.nodes = r.u32();
        const auto at = r.offset();
        const auto kind = r.u32();
        if (kind > static_cast<std::uint32_t>(VariantKind::Bilinear)) {
            throw ParseError("checkpoint: unknown variant code " + std::to_string(kind) + " at byte " +
                                 std::to_string(at),
                             at);
        }
        l.variant.kind = static_cast<VariantKind>(kind);
        l.variant.rank = r.u32();
        c.layers.push_back(l);
    }
    const bool has_lambda = flag(r);
    const auto lambda = r.u32();
    if (has_lambda) c.lambda = lambda;
    c.num_classes = r.u32();
    c.in_channels = r.u32();
    c.frames = r.u32();
    c.joints = r.u32();
    c.temporal_kernel = r.u32();
    c.input_bn = flag(r);
    c.bilinear_init = static_cast<BilinearInit>(flag(r));
    return c;
}

void write_skeleton(Writer& w, const SkeletonTemplate& s) {
    w.u32(s.joints);
    w.u32(s.edges.size());
    for (auto [a, b] : s.edges) {
        w.u32(a);
        w.u32(b);
    }
    for (const auto& p : s.rest_pose) {
        for (double x : p) w.f64(x);
    }
    w.u32(s.names.size());
    for (const auto& n : s.names) w.str(n);
}

SkeletonTemplate read_skeleton(Reader& r) {
    SkeletonTemplate s;
    s.joints = r.u32();
    const auto edges = r.u32();
    if (edges > r.remaining() / 8) r.need(std::size_t{edges} * 8);
    for (std::uint32_t i = 0; i < edges; ++i) {
        const std::size_t a = r.u32();
        const std::size_t b = r.u32();
        s.edges.emplace_back(a, b);
    }
    if (s.joints > r.remaining() / 24) r.need(s.joints * 24);
    s.rest_pose.resize(s.joints);
    for (auto& p : s.rest_pose) {
        for (auto& x : p) x = r.f64();
    }
    const auto names = r.u32();
    for (std::uint32_t i = 0; i < names; ++i) s.names.push_back(r.str());
    const auto at = r.offset();
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw ParseError(std::string("checkpoint: invalid skeleton ending at byte ") + std::to_string(at) + ": " +
                             e.what(),
                         at);
    }
    return s;
}

void write_blob(Writer& w, const Blob& b) {
    w.str(b.name);
    w.u32(b.shape.size());
    for (auto d : b.shape) w.u32(d);
    w.floats(b.values);
}

Blob read_blob(Reader& r) {
    Blob b;
    b.name = r.str();
    const auto rank = r.u32();
    if (rank > 8) r.fail("blob '" + b.name + "' has implausible rank " + std::to_string(rank));
    for (std::uint32_t i = 0; i < rank; ++i) b.shape.push_back(r.u32());
    b.values = r.floats(numel(b.shape));
    return b;
}

}  // namespace

std::string encode_dataset(const Dataset& d) {
    d.validate();
    Writer w;
    w.bytes("STBN", 4);
    w.u32(kDatasetFormatVersion);
    w.u32(d.size());
    w.u32(d.channels);
    w.u32(d.frames);
    w.u32(d.joints);
    w.u32(d.classes);
    w.floats(d.values);
    w.bytes(d.labels.data(), d.labels.size() * 4);
    return w.take();
}

Dataset decode_dataset(const std::string& bytes) {
    Reader r(bytes, "dataset");
    r.magic("STBN");
    const auto version = r.u32();
    if (version != kDatasetFormatVersion) r.fail("unsupported format version " + std::to_string(version));
    Dataset d;
    const std::uint64_t n = r.u32();
    d.channels = r.u32();
    d.frames = r.u32();
    d.joints = r.u32();
    d.classes = r.u32();
    if (d.channels == 0 || d.frames == 0 || d.joints == 0 || d.classes == 0) r.fail("zero dimension in header");
    const std::uint64_t values = n * d.channels * d.frames * d.joints;
    const std::uint64_t expected = 28 + values * 4 + n * 4;
    if (bytes.size() != expected) {
        const std::size_t at = std::min<std::size_t>(bytes.size(), expected);
        throw ParseError("dataset: header declares " + std::to_string(expected) + " bytes but the file has " +
                             std::to_string(bytes.size()) + " (mismatch at byte " + std::to_string(at) + ")",
                         at);
    }
    d.values = r.floats(values);
    d.labels.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto at = r.offset();
        d.labels[i] = r.u32();
        if (d.labels[i] >= d.classes) {
            throw ParseError("dataset: label " + std::to_string(d.labels[i]) + " at byte " + std::to_string(at) +
                                 " is not below the class count " + std::to_string(d.classes),
                             at);
        }
    }
    return d;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) { write_file(path, encode_dataset(data)); }
Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

bool Checkpoint::operator==(const Checkpoint& o) const {
    return config == o.config && skeleton.has_value() == o.skeleton.has_value() &&
           (!skeleton || (skeleton->joints == o.skeleton->joints && skeleton->edges == o.skeleton->edges &&
                          skeleton->rest_pose == o.skeleton->rest_pose && skeleton->names == o.skeleton->names)) &&
           parameters == o.parameters && batch_norm == o.batch_norm && rng_state == o.rng_state && epoch == o.epoch;
}

Checkpoint make_checkpoint(const Model& model, const std::string& rng_state, std::uint64_t epoch) {
    Checkpoint c;
    c.config = model.config();
    c.skeleton = model.skeleton();
    for (const auto& [name, t] : model.parameters()) c.parameters.push_back(Blob{name, t.shape(), to_floats(t.data())});
    for (const auto& [name, s] : model.batch_norm_states()) {
        const Shape shape{s->running_mean.size()};
        c.batch_norm.push_back(Blob{name + ".mean", shape, to_floats(s->running_mean)});
        c.batch_norm.push_back(Blob{name + ".var", shape, to_floats(s->running_var)});
    }
    c.rng_state = rng_state;
    c.epoch = epoch;
    return c;
}

Model restore_model(const Checkpoint& c) {
    Model model(c.config, c.skeleton, 0);
    const auto params = model.parameters();
    if (params.size() != c.parameters.size()) {
        throw DimensionError("checkpoint holds " + std::to_string(c.parameters.size()) +
                             " parameters, the config defines " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [name, t] = params[i];
        const Blob& b = c.parameters[i];
        if (b.name != name || b.shape != t.shape()) {
            throw DimensionError("checkpoint parameter '" + b.name + "' " + to_string(b.shape) + " does not match '" +
                                 name + "' " + to_string(t.shape()) + " of the config");
        }
        Tensor handle = t;
        auto d = handle.mutable_data();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] = b.values[k];
    }
    auto states = model.batch_norm_states();
    if (2 * states.size() != c.batch_norm.size()) {
        throw DimensionError("checkpoint holds " + std::to_string(c.batch_norm.size()) +
                             " BN statistics, the config needs " + std::to_string(2 * states.size()));
    }
    for (std::size_t i = 0; i < states.size(); ++i) {
        auto& [name, s] = states[i];
        const Blob& mean = c.batch_norm[2 * i];
        const Blob& var = c.batch_norm[2 * i + 1];
        const Shape shape{s->running_mean.size()};
        if (mean.name != name + ".mean" || var.name != name + ".var" || mean.shape != shape || var.shape != shape) {
            throw DimensionError("checkpoint BN statistics '" + mean.name + "' do not match '" + name +
                                 "' of the config");
        }
        s->running_mean.assign(mean.values.begin(), mean.values.end());
        s->running_var.assign(var.values.begin(), var.values.end());
    }
    return model;
}

std::string encode_checkpoint(const Checkpoint& c) {
    Writer w;
    w.bytes("STBC", 4);
    w.u32(kCheckpointFormatVersion);
    write_config(w, c.config);
    w.u32(c.skeleton ? 1 : 0);
    if (c.skeleton) write_skeleton(w, *c.skeleton);
    w.u32(c.parameters.size());
    for (const auto& b : c.parameters) write_blob(w, b);
    w.u32(c.batch_norm.size());
    for (const auto& b : c.batch_norm) write_blob(w, b);
    w.str(c.rng_state);
    w.u64(c.epoch);
    return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader r(bytes, "checkpoint");
    r.magic("STBC");
    const auto version = r.u32();
    if (version != kCheckpointFormatVersion) r.fail("unsupported format version " + std::to_string(version));
    Checkpoint c;
    c.config = read_config(r);
    if (flag(r)) c.skeleton = read_skeleton(r);
    const auto params = r.u32();
    for (std::uint32_t i = 0; i < params; ++i) c.parameters.push_back(read_blob(r));
    const auto bn = r.u32();
    for (std::uint32_t i = 0; i < bn; ++i) c.batch_norm.push_back(read_blob(r));
    c.rng_state = r.str();
    c.epoch = r.u64();
    if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) { write_file(path, encode_checkpoint(c)); }
Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::string scores_csv(const Tensor& scores) {
    if (scores.ndim() != 2) throw DimensionError("scores must be [N x K], got " + to_string(scores.shape()));
    const std::size_t n = scores.dim(0), k = scores.dim(1);
    std::string out;
    for (std::size_t j = 0; j < k; ++j) out += (j ? ",p" : "p") + std::to_string(j);
    out += '\n';
    char buf[32];
    auto d = scores.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", d[i * k + j]);
            if (j) out += ',';
            out += buf;
        }
        out += '\n';
    }
    return out;
}

Tensor parse_scores_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("p0", 0) != 0) throw ParseError("scores: missing header row", 1);
    const std::size_t k = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    std::vector<double> values;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::size_t cells = 0;
        while (std::getline(ls, cell, ',')) {
            char* end = nullptr;
            const double x = std::strtod(cell.c_str(), &end);
            if (cell.empty() || *end != '\0') throw ParseError("scores: bad number '" + cell + "' on line " + std::to_string(row), row);
            values.push_back(x);
            ++cells;
        }
        if (cells != k) {
            throw ParseError("scores: line " + std::to_string(row) + " has " + std::to_string(cells) + " columns, expected " +
                                 std::to_string(k),
                             row);
        }
    }
    if (values.empty()) throw ParseError("scores: no rows", row);
    const std::size_t rows = values.size() / k;
    return Tensor({rows, k}, std::move(values));
}

std::string labels_csv(const std::vector<std::uint32_t>& labels) {
    std::string out = "label\n";
    for (auto y : labels) out += std::to_string(y) + '\n';
    return out;
}

std::vector<std::uint32_t> parse_labels_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "label") throw ParseError("labels: missing header row 'label'", 1);
    std::vector<std::uint32_t> out;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::uint32_t y = 0;
        auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), y);
        if (ec != std::errc() || p != line.data() + line.size()) {
            throw ParseError("labels: bad label '" + line + "' on line " + std::to_string(row), row);
        }
        out.push_back(y);
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw ConfigError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace stbln
