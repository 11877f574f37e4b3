#pragma once

#include "flivt/tensor.hpp"

#include <optional>
#include <variant>

namespace flivt {

enum class Form { Train, Deploy };

// --- token mixers -----------------------------------------------------------

// Local token mixer. Train form runs three branches,
//   y = x + BN(DW3x3(x) + DW1x1(x)),
// deploy form runs the single reparameterized depthwise 3x3 with bias.
struct RepMixTrain {
    ConvParams dw3; // 3x3 depthwise, pad 1, stride 1
    ConvParams dw1; // 1x1 depthwise
    BNParams bn;
};

struct RepMixSpec {
    int64_t channels = 0;
    std::variant<RepMixTrain, ConvParams> params; // ConvParams = fused deploy conv

    Form form() const {
        return std::holds_alternative<RepMixTrain>(params) ? Form::Train : Form::Deploy;
    }
    const RepMixTrain& train() const { return std::get<RepMixTrain>(params); }
    const ConvParams& fused() const { return std::get<ConvParams>(params); }
};

enum class LiteNorm { Affine, LayerNorm };

// Multi-head linear token mixer. Per head h over its channel group:
//   y_h = Aff(x)_h * W_h + B_h        (W_h is tokens x tokens)
// chunked after one shared per-channel affine, concatenated, then scaled by
// the per-channel layer scale. Activation-free by default; the GELU switch
// exists only as an ablation. Output is the mixing term only, the residual
// add belongs to the encoder.
struct LiteMHLASpec {
    int64_t channels = 0;
    int64_t tokens = 0; // N = H*W
    int n_head = 4;
    LiteNorm norm_kind = LiteNorm::Affine;
    AffineParams pre_affine;          // engaged when norm_kind == Affine
    LayerNormParams pre_ln;           // engaged when norm_kind == LayerNorm
    bool gelu_after_mix = false;
    struct Head {
        Tensor w; // (N, N)
        Tensor b; // (N)
    };
    std::vector<Head> heads; // size n_head
    Tensor layer_scale;      // (C), initialized to 1e-5
};

// First-generation mixer kept as a like-for-like ablation and as the
// complexity baseline: per head, Linear(N->Nr) -> GELU -> Linear(Nr->N)
// over a channel-layernormed input. Not an affine map of x.
struct MHLAv1Spec {
    int64_t channels = 0;
    int64_t tokens = 0;
    int n_head = 4;
    double ratio = 0.5; // Nr = round(N * ratio)
    std::optional<LayerNormParams> norm;
    struct Head {
        Tensor w_in;  // (N, Nr)
        Tensor w_out; // (Nr, N)
    };
    std::vector<Head> heads;

    int64_t projected_tokens() const;
};

// Channel mixer: y = BN2(Conv1x1_reduce(GELU(BN1(Conv1x1_expand(x))))).
// Mixing term only; residual add belongs to the encoder. Deploy form has
// the BNs folded into conv biases.
struct FFNSpec {
    int64_t channels = 0;
    int ratio = 2;
    ConvParams expand; // 1x1, C -> ratio*C
    std::optional<BNParams> bn1;
    ConvParams reduce; // 1x1, ratio*C -> C
    std::optional<BNParams> bn2;
};

// --- plumbing blocks ----------------------------------------------------

// Conv optionally followed by BN and GELU; deploy form has bn folded away.
struct ConvBNActSpec {
    ConvParams conv;
    std::optional<BNParams> bn;
    bool act_gelu = false;
};

struct StemSpec {
    ConvBNActSpec conv1; // 3x3 stride 2 pad 1, BN, GELU
    ConvBNActSpec conv2; // 3x3 stride 2 pad 1, BN, GELU
};

struct DownsampleSpec {
    ConvBNActSpec conv; // dense 3x3 stride 2 pad 1, BN, no activation
};

// Embedding head: 1x1 expansion (BN, GELU), global depthwise conv over the
// final 4x4 map (BN, no activation), flatten, dense projection with bias.
struct HeadSpec {
    ConvBNActSpec expand;
    ConvBNActSpec gdconv;
    Tensor embed_w; // (expand_channels, embed_dim)
    Tensor embed_b; // (embed_dim)
};

enum class EncoderKind { R, RL };

struct EncoderSpec {
    int64_t channels = 0;
    int64_t tokens = 0; // resolution^2 at this stage
    RepMixSpec repmix;
    std::optional<LiteMHLASpec> lite; // engaged for RL encoders with the lite mixer
    std::optional<MHLAv1Spec> v1;     // engaged for RL encoders with the v1 mixer
    FFNSpec ffn;

    EncoderKind kind() const { return (lite || v1) ? EncoderKind::RL : EncoderKind::R; }
};

// --- forward executors ----------------------------------------------------

Tensor repmix_forward(const Tensor& x, const RepMixSpec& s);        // train form only
Tensor repmix_forward_deploy(const Tensor& x, const RepMixSpec& s); // deploy form only
Tensor lite_mhla_forward(const Tensor& x, const LiteMHLASpec& s);
Tensor mhla_v1_forward(const Tensor& x, const MHLAv1Spec& s);
Tensor ffn_forward(const Tensor& x, const FFNSpec& s);
Tensor conv_bn_act_forward(const Tensor& x, const ConvBNActSpec& s);
Tensor stem_forward(const Tensor& x, const StemSpec& s);
Tensor downsample_forward(const Tensor& x, const DownsampleSpec& s);
Tensor head_forward(const Tensor& x, const HeadSpec& s);

// x <- repmix(x); if RL: x <- x + mix(x); x <- x + ffn(x)
Tensor encoder_forward(const Tensor& x, const EncoderSpec& s);

// Output spatial side of a conv given the input side.
int64_t conv_out_side(int64_t in, int64_t kernel, int stride, int padding);

} // namespace flivt
