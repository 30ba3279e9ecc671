#include "stbln/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "stbln/errors.hpp"

namespace stbln {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(trim(cur));
    return out;
}

struct Bad {
    std::string why;
};

std::uint64_t to_uint(const std::string& v) {
    std::uint64_t x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size() || v.empty()) throw Bad{"expected a non-negative integer"};
    return x;
}

double to_double(const std::string& v) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        throw Bad{"expected a number"};
    }
    if (used != v.size()) throw Bad{"expected a number"};
    return x;
}

bool to_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Bad{"expected true or false"};
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

std::string join(const std::vector<std::size_t>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
    return out.empty() ? "none" : out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

// Key tables. Variant and layer overrides are applied after the whole file
// is read, so their order in the file does not matter.
struct Pending {
    std::optional<SpatialVariant> variant;
    std::optional<std::string> layers;
    std::optional<std::size_t> rank;
};

}  // namespace

std::vector<LayerSpec> parse_layers(const std::string& text, SpatialVariant variant) {
    std::vector<LayerSpec> out;
    for (const auto& item : split(text, ',')) {
        const auto parts = split(item, ':');
        if (parts.size() < 2 || parts.size() > 3) {
            throw ConfigError("layer entry '" + item + "' must be C:stride or C:stride:nodes");
        }
        LayerSpec l;
        try {
            l.channels = to_uint(parts[0]);
            l.stride = to_uint(parts[1]);
            if (parts.size() == 3) l.nodes = to_uint(parts[2]);
        } catch (const Bad& b) {
            throw ConfigError("layer entry '" + item + "': " + b.why);
        }
        if (l.channels == 0 || l.stride == 0) throw ConfigError("layer entry '" + item + "' has a zero size");
        l.variant = variant;
        out.push_back(l);
    }
    if (out.empty()) throw ConfigError("layer list is empty");
    return out;
}

std::string format_layers(const std::vector<LayerSpec>& layers) {
    std::string out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(layers[i].channels) + ':' + std::to_string(layers[i].stride);
        if (layers[i].nodes) out += ':' + std::to_string(layers[i].nodes);
    }
    return out;
}

RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    Pending pending;
    const auto resolve = [&](const std::string& v) {
        std::filesystem::path p(v);
        if (v.empty()) return p;
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    const std::map<std::string, std::map<std::string, Setter>> table = {
        {"network",
         {
             {"variant", [&](RunConfig&, const std::string& v) {
                  try {
                      pending.variant = SpatialVariant{parse_variant(v), 0};
                  } catch (const ConfigError& e) {
                      throw Bad{e.what()};
                  }
              }},
             {"lambda", [](RunConfig& c, const std::string& v) {
                  if (v == "none") c.network.lambda.reset();
                  else c.network.lambda = to_uint(v);
              }},
             {"layers", [&](RunConfig&, const std::string& v) { pending.layers = v; }},
             {"symmetric_rank", [&](RunConfig&, const std::string& v) { pending.rank = to_uint(v); }},
             {"classes", [](RunConfig& c, const std::string& v) { c.network.num_classes = to_uint(v); }},
             {"temporal_kernel", [](RunConfig& c, const std::string& v) { c.network.temporal_kernel = to_uint(v); }},
             {"input_bn", [](RunConfig& c, const std::string& v) { c.network.input_bn = to_bool(v); }},
             {"bilinear_init", [](RunConfig& c, const std::string& v) {
                  if (v == "adjacency") c.network.bilinear_init = BilinearInit::Adjacency;
                  else if (v == "random") c.network.bilinear_init = BilinearInit::Random;
                  else throw Bad{"expected adjacency or random"};
              }},
             {"input", [](RunConfig& c, const std::string& v) {
                  if (v == "auto") {
                      c.input_given = false;
                      return;
                  }
                  const auto dims = split(v, 'x');
                  if (dims.size() != 3) throw Bad{"expected auto or CxTxV"};
                  c.network.in_channels = to_uint(dims[0]);
                  c.network.frames = to_uint(dims[1]);
                  c.network.joints = to_uint(dims[2]);
                  c.input_given = true;
              }},
         }},
        {"train",
         {
             {"epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = to_uint(v); }},
             {"batch", [](RunConfig& c, const std::string& v) { c.train.batch_size = to_uint(v); }},
             {"lr", [](RunConfig& c, const std::string& v) { c.train.lr = to_double(v); }},
             {"lr_drops", [](RunConfig& c, const std::string& v) {
                  c.train.lr_drop_epochs.clear();
                  if (v == "none") return;
                  for (const auto& e : split(v, ',')) c.train.lr_drop_epochs.push_back(to_uint(e));
              }},
             {"lr_drop_factor", [](RunConfig& c, const std::string& v) { c.train.lr_drop_factor = to_double(v); }},
             {"momentum", [](RunConfig& c, const std::string& v) { c.train.momentum = to_double(v); }},
             {"weight_decay", [](RunConfig& c, const std::string& v) { c.train.weight_decay = to_double(v); }},
             {"seed", [](RunConfig& c, const std::string& v) { c.train.seed = to_uint(v); }},
             {"precision", [](RunConfig& c, const std::string& v) { c.train.precision = v; }},
             {"checkpoint_every", [](RunConfig& c, const std::string& v) { c.train.checkpoint_every = to_uint(v); }},
         }},
        {"data",
         {
             {"source", [](RunConfig& c, const std::string& v) {
                  if (v == "synthetic") c.data.source = DataSection::Source::Synthetic;
                  else if (v == "file") c.data.source = DataSection::Source::File;
                  else throw Bad{"expected synthetic or file"};
              }},
             {"train_path", [&](RunConfig& c, const std::string& v) { c.data.train_path = resolve(v); }},
             {"test_path", [&](RunConfig& c, const std::string& v) { c.data.test_path = resolve(v); }},
             {"stream", [](RunConfig& c, const std::string& v) {
                  if (v != "joint" && v != "bone") throw Bad{"expected joint or bone"};
                  c.data.stream = v;
              }},
             {"seed", [](RunConfig& c, const std::string& v) { c.data.seed = to_uint(v); }},
             {"classes", [](RunConfig& c, const std::string& v) { c.data.synthetic.num_classes = to_uint(v); }},
             {"train_per_class", [](RunConfig& c, const std::string& v) { c.data.synthetic.train_per_class = to_uint(v); }},
             {"test_per_class", [](RunConfig& c, const std::string& v) { c.data.synthetic.test_per_class = to_uint(v); }},
             {"frames", [](RunConfig& c, const std::string& v) { c.data.synthetic.frames = to_uint(v); }},
             {"noise", [](RunConfig& c, const std::string& v) { c.data.synthetic.noise = to_double(v); }},
             {"amplitude", [](RunConfig& c, const std::string& v) { c.data.synthetic.amplitude = to_double(v); }},
             {"random_direction", [](RunConfig& c, const std::string& v) { c.data.synthetic.random_direction = to_bool(v); }},
         }},
        {"graph",
         {
             {"template", [&](RunConfig& c, const std::string& v) {
                  c.graph.template_name = v == "ntu25" ? v : resolve(v).string();
              }},
         }},
    };

    std::string line;
    std::size_t line_no = 0;
    std::string section;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find_first_of("#;");
        const std::string text = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']') throw ParseError("malformed section header '" + text + "'", line_no);
            section = trim(text.substr(1, text.size() - 2));
            if (!table.count(section)) {
                throw ParseError("unknown section [" + section + "] at line " + std::to_string(line_no), line_no);
            }
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw ParseError("line " + std::to_string(line_no) + ": expected key = value", line_no);
        }
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (section.empty()) {
            throw ParseError("key '" + key + "' at line " + std::to_string(line_no) + " is outside any section",
                             line_no);
        }
        const auto& keys = table.at(section);
        const auto it = keys.find(key);
        if (it == keys.end()) {
            throw ParseError("unknown key '" + key + "' in [" + section + "] at line " + std::to_string(line_no),
                             line_no);
        }
        try {
            it->second(cfg, value);
        } catch (const Bad& b) {
            throw ParseError("key '" + key + "' at line " + std::to_string(line_no) + ": " + b.why + ", got '" +
                                 value + "'",
                             line_no);
        }
    }

    SpatialVariant variant = pending.variant.value_or(cfg.network.layers.front().variant);
    if (pending.rank) variant.rank = *pending.rank;
    if (pending.layers) {
        cfg.network.layers = parse_layers(*pending.layers, variant);
    } else {
        for (auto& l : cfg.network.layers) l.variant = variant;
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    return parse_run_config(in, path.parent_path());
}

std::string format_run_config(const RunConfig& c) {
    const auto& n = c.network;
    const auto& s = c.data.synthetic;
    std::ostringstream os;
    os << "[network]\n"
       << "variant = " << to_string(n.layers.front().variant.kind) << '\n'
       << "symmetric_rank = " << n.layers.front().variant.rank << "  # 0 selects q = V\n"
       << "lambda = " << (n.lambda ? std::to_string(*n.lambda) : "none") << '\n'
       << "layers = " << format_layers(n.layers) << "  # C:stride[:nodes]\n"
       << "classes = " << n.num_classes << '\n'
       << "temporal_kernel = " << n.temporal_kernel << '\n'
       << "input_bn = " << (n.input_bn ? "true" : "false") << '\n'
       << "bilinear_init = " << (n.bilinear_init == BilinearInit::Adjacency ? "adjacency" : "random") << '\n'
       << "input = "
       << (c.input_given ? std::to_string(n.in_channels) + "x" + std::to_string(n.frames) + "x" + std::to_string(n.joints)
                         : std::string("auto"))
       << "  # CxTxV, or auto to take it from the data\n\n";
    os << "[train]\n"
       << "epochs = " << c.train.epochs << '\n'
       << "batch = " << c.train.batch_size << '\n'
       << "lr = " << fmt(c.train.lr) << '\n'
       << "lr_drops = " << join(c.train.lr_drop_epochs) << '\n'
       << "lr_drop_factor = " << fmt(c.train.lr_drop_factor) << '\n'
       << "momentum = " << fmt(c.train.momentum) << '\n'
       << "weight_decay = " << fmt(c.train.weight_decay) << '\n'
       << "seed = " << c.train.seed << '\n'
       << "precision = " << c.train.precision << '\n'
       << "checkpoint_every = " << c.train.checkpoint_every << "  # 0: final checkpoint only\n\n";
    os << "[data]\n"
       << "source = " << (c.data.source == DataSection::Source::Synthetic ? "synthetic" : "file") << '\n'
       << "stream = " << c.data.stream << '\n'
       << "train_path = " << c.data.train_path.string() << '\n'
       << "test_path = " << c.data.test_path.string() << '\n'
       << "seed = " << c.data.seed << '\n'
       << "classes = " << s.num_classes << '\n'
       << "train_per_class = " << s.train_per_class << '\n'
       << "test_per_class = " << s.test_per_class << '\n'
       << "frames = " << s.frames << '\n'
       << "noise = " << fmt(s.noise) << '\n'
       << "amplitude = " << fmt(s.amplitude) << '\n'
       << "random_direction = " << (s.random_direction ? "true" : "false") << "\n\n";
    os << "[graph]\n"
       << "template = " << c.graph.template_name << '\n';
    return os.str();
}

SkeletonTemplate resolve_graph(const GraphSection& graph, const std::filesystem::path& base_dir) {
    if (graph.template_name == "ntu25") return SkeletonTemplate::ntu25();
    std::filesystem::path p(graph.template_name);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return SkeletonTemplate::load(p);
}

}  // namespace stbln
