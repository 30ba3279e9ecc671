#include "stbln/flops.hpp"

#include <iomanip>
#include <sstream>

#include "stbln/errors.hpp"

namespace stbln {

// Raw FLOPs of NetworkConfig::reference() under the convention in flops.hpp.
namespace {
constexpr double kReferenceRawFlops = 17525333280.0;
}
const double kFlopsCalibration = kFlopsCalibrationTarget / kReferenceRawFlops;

namespace {

using u64 = std::uint64_t;

struct Counter {
    FlopsReport report;

    void add(std::size_t layer, std::string op, u64 macs, u64 elementwise, u64 params) {
        report.entries.push_back(FlopsEntry{layer, std::move(op), macs, elementwise, params});
        report.total_macs += macs;
        report.total_elementwise += elementwise;
        report.total_params += params;
    }

    // Convolution of C_in x k_t x k_v filters producing `outputs` elements.
    void conv(std::size_t layer, std::string op, u64 filters, u64 patch, u64 positions) {
        add(layer, std::move(op), filters * patch * positions, filters * positions, filters * patch + filters);
    }
};

void count_residual(Counter& c, std::size_t layer, const char* name, Residual kind, const LayerShape& s, u64 frames) {
    const u64 ci = s.in_channels, co = s.out_channels, vi = s.in_nodes, vo = s.out_nodes;
    switch (kind) {
        case Residual::None: return;
        case Residual::Identity: break;
        case Residual::Pointwise: c.conv(layer, name, co, ci, frames * vi); break;
        case Residual::Flatten: c.conv(layer, name, co * vo, ci * vi, frames); break;
    }
    c.add(layer, std::string(name) + ".add", 0, co * frames * vo, 0);
}

}  // namespace

std::uint64_t FlopsReport::layer_macs(std::size_t layer) const {
    std::uint64_t m = 0;
    for (const auto& e : entries) {
        if (e.layer == layer) m += e.macs;
    }
    return m;
}

FlopsReport count_model(const NetworkConfig& config) {
    const auto plan = resolve_layers(config);
    Counter c;
    c.report.calibration = kFlopsCalibration;
    if (config.input_bn) {
        const u64 features = config.in_channels * config.joints;
        c.add(0, "input_bn", 0, features * config.frames, 2 * features);
    }
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const std::size_t l = i + 1;
        const auto& r = plan[i];
        const auto& s = r.shape;
        const u64 ci = s.in_channels, co = s.out_channels, vi = s.in_nodes, vo = s.out_nodes;
        const u64 t_in = r.in_frames, t_out = r.out_frames, k = s.temporal_kernel;
        const bool collapse = s.degenerate() && !r.variant.needs_adjacency();

        if (collapse) {
            c.conv(l, "channel", co, ci, t_in);
        } else {
            for (std::size_t p = 0; p < kPartitions; ++p) c.conv(l, "channel", co, ci, t_in * vi);
            u64 mask_params = vo * vi;
            if (r.variant.kind == VariantKind::Symmetric) {
                mask_params = vi * (r.variant.rank == 0 ? vi : r.variant.rank);
            }
            c.add(l, "node_mix", kPartitions * vo * vi * t_in * co, 0, kPartitions * mask_params);
        }
        c.add(l, "bn1", 0, co * t_in * vo, 2 * co);
        const Residual res_v = collapse ? Residual::None : residual_kind(ci, vi, co, vo, 1);
        count_residual(c, l, "res_v", res_v, s, t_in);
        c.add(l, "relu1", 0, co * t_in * vo, 0);
        c.conv(l, "temporal", co, co * k, t_out * vo);
        c.add(l, "bn2", 0, co * t_out * vo, 2 * co);
        count_residual(c, l, "res_t", residual_kind(ci, vi, co, vo, s.stride), s, t_out);
        c.add(l, "relu2", 0, co * t_out * vo, 0);
    }
    const auto& last = plan.back();
    const u64 features = last.shape.out_channels;
    const std::size_t head = plan.size() + 1;
    c.add(head, "pool", 0, features * last.out_frames * last.shape.out_nodes, 0);
    c.add(head, "fc", config.num_classes * features, config.num_classes, config.num_classes * features + config.num_classes);
    return c.report;
}

double speedup(const FlopsReport& a, const FlopsReport& b) {
    if (a.flops() <= 0.0 || b.flops() <= 0.0) throw ContractError("speedup needs two reports with positive totals");
    return b.flops() / a.flops();
}

std::vector<LambdaRow> sweep_lambda(const NetworkConfig& base) {
    std::vector<LambdaRow> rows;
    for (std::size_t lambda = 1; lambda <= base.layers.size(); ++lambda) {
        NetworkConfig cfg = base;
        for (auto& layer : cfg.layers) {
            layer.variant = SpatialVariant{VariantKind::Bilinear, 0};
            layer.nodes = 0;
        }
        cfg.lambda = lambda;
        const auto report = count_model(cfg);
        rows.push_back(LambdaRow{lambda, report.flops(), report.total_params});
    }
    return rows;
}

std::string lambda_sweep_csv(const std::vector<LambdaRow>& rows) {
    std::ostringstream os;
    os << "lambda,flops,params\n";
    os << std::setprecision(10);
    for (const auto& r : rows) os << r.lambda << ',' << r.flops << ',' << r.params << '\n';
    return os.str();
}

std::string FlopsReport::to_text() const {
    std::ostringstream os;
    os << "# convention: 1 MAC = 2 FLOPs; bias/BN/ReLU/residual-add/pool = 1 FLOP per element;\n"
       << "# padded taps counted; mask preparation excluded; input BN and head included\n"
       << "# calibration scale " << std::setprecision(10) << calibration << " (reference bilinear net = "
       << kFlopsCalibrationTarget / 1e9 << "G)\n";
    os << std::left << std::setw(7) << "layer" << std::setw(14) << "op" << std::right << std::setw(16) << "macs"
       << std::setw(14) << "elementwise" << std::setw(12) << "params" << '\n';
    for (const auto& e : entries) {
        os << std::left << std::setw(7) << e.layer << std::setw(14) << e.op << std::right << std::setw(16) << e.macs
           << std::setw(14) << e.elementwise << std::setw(12) << e.params << '\n';
    }
    os << "total_macs " << total_macs << "\ntotal_elementwise " << total_elementwise << "\ntotal_params "
       << total_params << '\n';
    os << std::fixed << std::setprecision(4) << "raw_gflops " << raw_flops() / 1e9 << "\ngflops " << flops() / 1e9
       << '\n';
    return os.str();
}

}  // namespace stbln
