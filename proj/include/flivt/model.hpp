#pragma once

#include "flivt/blocks.hpp"

#include <array>
#include <functional>
#include <string>

namespace flivt {

enum class Variant { XS, S, M, L, Custom };
enum class StageKind { R, RL };
enum class MhlaKind { Lite, V1 };
enum class LiteAct { None, Gelu };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Channel/depth/head/resolution schedule of one buildable model, either an
// XS/S/M/L preset or an ablation/custom derivative.
struct VariantConfig {
    Variant name = Variant::Custom;
    std::array<int, 2> stem_channels{16, 32};
    std::array<int, 4> stage_channels{32, 64, 128, 256};
    std::array<int, 4> stage_depths{3, 3, 9, 3};
    std::array<StageKind, 4> stage_kinds{StageKind::R, StageKind::R, StageKind::RL, StageKind::RL};
    int ffn_ratio = 2;
    int n_head = 4;
    std::array<int, 4> stage_resolutions{28, 14, 7, 4};
    int head_expand = 1284;
    int embed_dim = 512;
    MhlaKind mhla_kind = MhlaKind::Lite;
    LiteNorm norm_kind = LiteNorm::Affine;
    LiteAct lite_activation = LiteAct::None;
    double mhla_v1_ratio = 0.5;

    static VariantConfig preset(Variant v);

    int input_resolution() const { return stage_resolutions[0] * 4; }
    void validate() const;
};

// Ablation knobs, one per call:
//   kinds=R,R,R,R | kinds=RL,RL,RL,RL | n_head=<1..6> | norm=layernorm |
//   norm=affine | activation=gelu | activation=none | mhla=v1 | mhla=lite
VariantConfig build_ablation(const VariantConfig& base, const std::string& knob);

enum class StageTag { Stem, Stage1, Stage2, Stage3, Stage4, Head };
const char* stage_tag_name(StageTag t);

struct BlockSpec {
    std::string name; // unique prefix for the block's weight names
    StageTag stage;
    std::variant<StemSpec, DownsampleSpec, EncoderSpec, HeadSpec> op;
};

struct ModelGraph {
    VariantConfig config;
    Dtype dtype = Dtype::F32;
    Form form = Form::Train;
    uint64_t seed = 0;
    std::vector<BlockSpec> blocks;
};

// Deterministically seeded train-form graph. Two builds with the same seed
// are bitwise identical. Init scheme: conv/dense weights uniform
// +-sqrt(6/fan_in), token-mix weights uniform +-sqrt(6/N) with zero bias,
// BN gamma=1/beta=0/mean=0/var=1, affine alpha=1/beta=0, layer scale 1e-5.
ModelGraph build(const VariantConfig& config, uint64_t seed, Dtype dtype = Dtype::F32);

// Zero-weight graph skeleton in either form; the weight loader fills it.
ModelGraph skeleton(const VariantConfig& config, uint64_t seed, Dtype dtype, Form form);

// (B, 3, res, res) -> (B, embed_dim)
Tensor forward(const ModelGraph& g, const Tensor& x);

// Visit every parameter tensor with its unique name. Mutation through the
// callback is allowed; structure is not.
void visit_tensors(ModelGraph& g, const std::function<void(const std::string&, Tensor&)>& fn);
void visit_tensors(const ModelGraph& g,
                   const std::function<void(const std::string&, const Tensor&)>& fn);

// Per-layer (channels, spatial side) schedule of a config, in execution
// order; the expected forward trace.
struct TracePoint {
    std::string layer;
    int64_t channels;
    int64_t resolution; // spatial side; 1 after global aggregation, 0 for the embedding
};
std::vector<TracePoint> shape_trace(const VariantConfig& config);

} // namespace flivt
