#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "stbln/network.hpp"

namespace stbln {

/// Counting convention:
///   - one multiply-accumulate (MAC) is 2 FLOPs;
///   - bias adds, batch-norm, ReLU, residual adds and pooling are 1 FLOP
///     per element;
///   - convolution taps over the zero padding are counted, as dense
///     framework kernels execute them;
///   - mask preparation (A_p * M_p, A_p + M_p, L_p L_p^T) is excluded: it is
///     a per-model constant at inference time;
///   - input batch-norm and the classifier head are included.
/// The raw count is multiplied by kFlopsCalibration, fitted once so that the
/// ten-layer bilinear network with V^(l) = V everywhere reports 24.93 GFLOPs.
inline constexpr double kFlopsCalibrationTarget = 24.93e9;
/// kFlopsCalibrationTarget / raw FLOPs of NetworkConfig::reference() on 3x300x25.
extern const double kFlopsCalibration;

struct FlopsEntry {
    std::size_t layer = 0;  // 0 for input BN, layers are 1-based, L+1 for pool/head
    std::string op;
    std::uint64_t macs = 0;
    std::uint64_t elementwise = 0;
    std::uint64_t params = 0;
};

struct FlopsReport {
    std::vector<FlopsEntry> entries;
    std::uint64_t total_macs = 0;
    std::uint64_t total_elementwise = 0;
    std::uint64_t total_params = 0;
    double calibration = 1.0;

    double raw_flops() const { return 2.0 * static_cast<double>(total_macs) + static_cast<double>(total_elementwise); }
    double flops() const { return calibration * raw_flops(); }
    std::uint64_t layer_macs(std::size_t layer) const;

    /// Per-layer table plus a header recording the convention.
    std::string to_text() const;
};

/// Closed-form per-sample costs of one forward pass at full input resolution.
FlopsReport count_model(const NetworkConfig& config);

/// flops(b) / flops(a): how much faster `a` runs than `b`.
double speedup(const FlopsReport& a, const FlopsReport& b);

struct LambdaRow {
    std::size_t lambda = 0;
    double flops = 0.0;
    std::uint64_t params = 0;
};

/// One row per lambda = 1..L on `base` with every layer turned bilinear.
std::vector<LambdaRow> sweep_lambda(const NetworkConfig& base);

/// `lambda,flops,params` with a header row.
std::string lambda_sweep_csv(const std::vector<LambdaRow>& rows);

}  // namespace stbln
