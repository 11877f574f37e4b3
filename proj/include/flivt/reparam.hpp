#pragma once

#include "flivt/blocks.hpp"

namespace flivt {

struct ModelGraph;

// Numerical certificate for one fusion pass: the fused graph reproduced the
// source graph within `tolerance` (max-abs) on every sampled input.
struct FusionReport {
    int blocks_fused = 0; // BN folds + token-mixer reparameterizations applied
    double max_abs_diff = 0.0;
    double tolerance = 0.0;
    int inputs_sampled = 0;
    bool passed = false;
};

// Place a per-channel 1x1 depthwise kernel at the center tap of a 3x3 kernel,
// zeros elsewhere. (C,1,1,1) -> (C,1,3,3).
Tensor pad_kernel_1to3(const Tensor& w);

// Per-channel 3x3 kernel with 1 at the center: convolving with it (depthwise,
// stride 1, pad 1) is the identity. Stands in for the residual connection
// when the three branches are summed into one kernel.
Tensor identity_kernel(int64_t channels, Dtype dt);

// Absorb an inference-form BN into the preceding convolution:
//   W' = W * gamma/sqrt(var + eps)   (per output channel)
//   b' = (b - mean) * gamma/sqrt(var + eps) + beta
// The returned convolution has a bias and no BN behind it.
ConvParams fold_bn(const ConvParams& conv, const BNParams& bn);

// Train-form RepMix -> single depthwise 3x3 with bias. The convolutional
// branches are summed and BN-folded, then the residual joins as an identity
// kernel (it bypasses the BN, so it must not be scaled by the fold):
//   W' = (dw3 + pad(dw1)) * gamma/sigma + identity
//   b' = (b - mean) * gamma/sigma + beta
RepMixSpec fuse_repmix(const RepMixSpec& s);

// Rewrite a whole train-form graph into deploy form: every RepMix fused,
// every conv+BN adjacency folded (stem, downsampling, FFN, head included),
// zero BN layers left. Then certify equivalence on `samples` seeded inputs
// drawn uniform from [-1, 1]; tol <= 0 picks the dtype default (1e-4 f32,
// 1e-9 f64). samples == 0 skips the numerical check (structural rewrite only).
std::pair<ModelGraph, FusionReport> fuse_model(const ModelGraph& g, double tol, int samples);

double default_tolerance(Dtype dt);

} // namespace flivt
