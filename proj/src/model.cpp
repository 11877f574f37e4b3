#include "flivt/model.hpp"
#include "flivt/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace flivt {

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::XS: return "xs";
        case Variant::S: return "s";
        case Variant::M: return "m";
        case Variant::L: return "l";
        default: return "custom";
    }
}

Variant variant_from_name(const std::string& name) {
    std::string n = name;
    std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
    if (n == "xs") return Variant::XS;
    if (n == "s") return Variant::S;
    if (n == "m") return Variant::M;
    if (n == "l") return Variant::L;
    if (n == "custom") return Variant::Custom;
    throw std::invalid_argument("unknown variant '" + name + "'");
}

const char* stage_tag_name(StageTag t) {
    switch (t) {
        case StageTag::Stem: return "stem";
        case StageTag::Stage1: return "stage1";
        case StageTag::Stage2: return "stage2";
        case StageTag::Stage3: return "stage3";
        case StageTag::Stage4: return "stage4";
        default: return "head";
    }
}

VariantConfig VariantConfig::preset(Variant v) {
    VariantConfig c;
    c.name = v;
    switch (v) {
        case Variant::XS:
            c.stem_channels = {16, 32};
            c.stage_channels = {32, 64, 128, 256};
            break;
        case Variant::S:
            // Last-stage width follows the published total budget (192 -> 320,
            // not a plain doubling).
            c.stem_channels = {24, 48};
            c.stage_channels = {48, 96, 192, 320};
            break;
        case Variant::M:
            c.stem_channels = {28, 56};
            c.stage_channels = {56, 112, 224, 448};
            break;
        case Variant::L:
            // Stage-3 runs one encoder shallower than the smaller variants;
            // with the full depth the L budget overshoots its published
            // parameter/MAdds totals.
            c.stem_channels = {32, 64};
            c.stage_channels = {64, 128, 256, 512};
            c.stage_depths = {3, 3, 8, 3};
            break;
        default:
            break;
    }
    return c;
}

void VariantConfig::validate() const {
    FLIVT_CHECK(stem_channels[0] >= 1 && stem_channels[1] >= 1, "config: stem channels must be >= 1");
    FLIVT_CHECK(stem_channels[1] == stage_channels[0],
                "config: second stem conv must emit stage-1 channels ("
                    << stem_channels[1] << " != " << stage_channels[0] << ")");
    for (int i = 0; i < 4; ++i) {
        FLIVT_CHECK(stage_channels[i] >= 1, "config: stage channels must be >= 1");
        FLIVT_CHECK(stage_depths[i] >= 1, "config: stage depths must be >= 1");
        FLIVT_CHECK(stage_resolutions[i] >= 1, "config: stage resolutions must be >= 1");
    }
    FLIVT_CHECK(ffn_ratio >= 1, "config: ffn_ratio must be >= 1");
    FLIVT_CHECK(n_head >= 1, "config: n_head must be >= 1");
    FLIVT_CHECK(head_expand >= 1 && embed_dim >= 1, "config: head dims must be >= 1");
    FLIVT_CHECK(mhla_v1_ratio > 0, "config: v1 ratio must be > 0");

    // The stride-2 placements must reproduce the resolution schedule.
    const int64_t r0 = conv_out_side(conv_out_side(input_resolution(), 3, 2, 1), 3, 2, 1);
    FLIVT_CHECK(r0 == stage_resolutions[0], "config: stem does not reach stage-1 resolution");
    for (int i = 0; i + 1 < 4; ++i)
        FLIVT_CHECK(conv_out_side(stage_resolutions[i], 3, 2, 1) == stage_resolutions[i + 1],
                    "config: downsampling does not reach stage-" << i + 2 << " resolution");

    for (int i = 0; i < 4; ++i) {
        if (stage_kinds[i] != StageKind::RL) continue;
        FLIVT_CHECK(n_head <= stage_channels[i],
                    "config: n_head=" << n_head << " exceeds stage-" << i + 1 << " channels");
        FLIVT_CHECK(chunk_count(stage_channels[i], n_head) == n_head,
                    "config: n_head=" << n_head << " cannot split " << stage_channels[i]
                                      << " channels into that many groups");
        FLIVT_CHECK(mhla_v1_ratio * stage_resolutions[i] * stage_resolutions[i] >= 0.5 ||
                        mhla_kind == MhlaKind::Lite,
                    "config: v1 projected dim rounds to zero");
    }
}

VariantConfig build_ablation(const VariantConfig& base, const std::string& knob) {
    const auto eq = knob.find('=');
    FLIVT_CHECK(eq != std::string::npos, "ablation knob must be key=value, got '" << knob << "'");
    const std::string key = knob.substr(0, eq);
    const std::string value = knob.substr(eq + 1);
    VariantConfig c = base;
    if (key == "kinds") {
        std::array<StageKind, 4> kinds;
        size_t pos = 0;
        for (int i = 0; i < 4; ++i) {
            const size_t comma = value.find(',', pos);
            const std::string tok = value.substr(pos, comma == std::string::npos
                                                          ? std::string::npos
                                                          : comma - pos);
            if (tok == "R")
                kinds[i] = StageKind::R;
            else if (tok == "RL")
                kinds[i] = StageKind::RL;
            else
                throw std::invalid_argument("ablation kinds: expected R or RL, got '" + tok + "'");
            FLIVT_CHECK(i == 3 || comma != std::string::npos, "ablation kinds: need 4 entries");
            pos = comma + 1;
        }
        c.stage_kinds = kinds;
    } else if (key == "n_head") {
        const int n = std::stoi(value);
        FLIVT_CHECK(n >= 1 && n <= 6, "ablation n_head must be in 1..6, got " << n);
        c.n_head = n;
    } else if (key == "norm") {
        if (value == "layernorm")
            c.norm_kind = LiteNorm::LayerNorm;
        else if (value == "affine")
            c.norm_kind = LiteNorm::Affine;
        else
            throw std::invalid_argument("ablation norm: expected affine|layernorm");
    } else if (key == "activation") {
        if (value == "gelu")
            c.lite_activation = LiteAct::Gelu;
        else if (value == "none")
            c.lite_activation = LiteAct::None;
        else
            throw std::invalid_argument("ablation activation: expected none|gelu");
    } else if (key == "mhla") {
        if (value == "v1")
            c.mhla_kind = MhlaKind::V1;
        else if (value == "lite")
            c.mhla_kind = MhlaKind::Lite;
        else
            throw std::invalid_argument("ablation mhla: expected lite|v1");
    } else {
        throw std::invalid_argument("unknown ablation knob '" + key + "'");
    }
    c.validate();
    return c;
}

// --- skeleton ---------------------------------------------------------------

namespace {

ConvParams make_conv(Dtype dt, int64_t cin, int64_t cout, int64_t k, int stride, int padding,
                     int groups, bool bias) {
    ConvParams p;
    p.weight = Tensor(dt, {cout, cin / groups, k, k});
    if (bias) p.bias = Tensor(dt, {cout});
    p.stride = stride;
    p.padding = padding;
    p.groups = groups;
    return p;
}

BNParams make_bn(Dtype dt, int64_t c) {
    BNParams p;
    p.gamma = Tensor(dt, {c});
    p.beta = Tensor(dt, {c});
    p.mean = Tensor(dt, {c});
    p.var = Tensor(dt, {c});
    return p;
}

ConvBNActSpec make_conv_bn_act(Dtype dt, int64_t cin, int64_t cout, int64_t k, int stride,
                               int padding, int groups, bool gelu, Form form) {
    ConvBNActSpec s;
    s.conv = make_conv(dt, cin, cout, k, stride, padding, groups, form == Form::Deploy);
    if (form == Form::Train) s.bn = make_bn(dt, cout);
    s.act_gelu = gelu;
    return s;
}

EncoderSpec make_encoder(const VariantConfig& cfg, Dtype dt, int stage, Form form) {
    const int64_t c = cfg.stage_channels[static_cast<size_t>(stage)];
    const int64_t res = cfg.stage_resolutions[static_cast<size_t>(stage)];
    const int64_t n = res * res;

    EncoderSpec e;
    e.channels = c;
    e.tokens = n;

    e.repmix.channels = c;
    if (form == Form::Train) {
        RepMixTrain t;
        t.dw3 = make_conv(dt, c, c, 3, 1, 1, static_cast<int>(c), false);
        t.dw1 = make_conv(dt, c, c, 1, 1, 0, static_cast<int>(c), false);
        t.bn = make_bn(dt, c);
        e.repmix.params = std::move(t);
    } else {
        e.repmix.params = make_conv(dt, c, c, 3, 1, 1, static_cast<int>(c), true);
    }

    if (cfg.stage_kinds[static_cast<size_t>(stage)] == StageKind::RL) {
        if (cfg.mhla_kind == MhlaKind::Lite) {
            LiteMHLASpec m;
            m.channels = c;
            m.tokens = n;
            m.n_head = cfg.n_head;
            m.norm_kind = cfg.norm_kind;
            if (m.norm_kind == LiteNorm::Affine)
                m.pre_affine = AffineParams{Tensor(dt, {c}), Tensor(dt, {c})};
            else
                m.pre_ln = LayerNormParams{Tensor(dt, {c}), Tensor(dt, {c})};
            m.gelu_after_mix = cfg.lite_activation == LiteAct::Gelu;
            for (int i = 0; i < cfg.n_head; ++i)
                m.heads.push_back({Tensor(dt, {n, n}), Tensor(dt, {n})});
            m.layer_scale = Tensor(dt, {c});
            e.lite = std::move(m);
        } else {
            MHLAv1Spec m;
            m.channels = c;
            m.tokens = n;
            m.n_head = cfg.n_head;
            m.ratio = cfg.mhla_v1_ratio;
            m.norm = LayerNormParams{Tensor(dt, {c}), Tensor(dt, {c})};
            const int64_t nr = m.projected_tokens();
            for (int i = 0; i < cfg.n_head; ++i)
                m.heads.push_back({Tensor(dt, {n, nr}), Tensor(dt, {nr, n})});
            e.v1 = std::move(m);
        }
    }

    e.ffn.channels = c;
    e.ffn.ratio = cfg.ffn_ratio;
    const int64_t hidden = c * cfg.ffn_ratio;
    e.ffn.expand = make_conv(dt, c, hidden, 1, 1, 0, 1, form == Form::Deploy);
    e.ffn.reduce = make_conv(dt, hidden, c, 1, 1, 0, 1, form == Form::Deploy);
    if (form == Form::Train) {
        e.ffn.bn1 = make_bn(dt, hidden);
        e.ffn.bn2 = make_bn(dt, c);
    }
    return e;
}

ModelGraph make_skeleton(const VariantConfig& cfg, uint64_t seed, Dtype dt, Form form) {
    cfg.validate();
    ModelGraph g;
    g.config = cfg;
    g.dtype = dt;
    g.form = form;
    g.seed = seed;

    StemSpec stem;
    stem.conv1 = make_conv_bn_act(dt, 3, cfg.stem_channels[0], 3, 2, 1, 1, true, form);
    stem.conv2 = make_conv_bn_act(dt, cfg.stem_channels[0], cfg.stem_channels[1], 3, 2, 1, 1, true,
                                  form);
    g.blocks.push_back({"stem", StageTag::Stem, std::move(stem)});

    const StageTag tags[4] = {StageTag::Stage1, StageTag::Stage2, StageTag::Stage3,
                              StageTag::Stage4};
    for (int stage = 0; stage < 4; ++stage) {
        const std::string prefix = "stage" + std::to_string(stage + 1);
        for (int d = 0; d < cfg.stage_depths[static_cast<size_t>(stage)]; ++d)
            g.blocks.push_back({prefix + ".enc" + std::to_string(d), tags[stage],
                                make_encoder(cfg, dt, stage, form)});
        if (stage < 3) {
            DownsampleSpec down;
            down.conv = make_conv_bn_act(dt, cfg.stage_channels[static_cast<size_t>(stage)],
                                         cfg.stage_channels[static_cast<size_t>(stage) + 1], 3, 2,
                                         1, 1, false, form);
            g.blocks.push_back({prefix + ".down", tags[stage], std::move(down)});
        }
    }

    HeadSpec head;
    head.expand = make_conv_bn_act(dt, cfg.stage_channels[3], cfg.head_expand, 1, 1, 0, 1, true,
                                   form);
    head.gdconv = make_conv_bn_act(dt, cfg.head_expand, cfg.head_expand, cfg.stage_resolutions[3],
                                   1, 0, cfg.head_expand, false, form);
    head.embed_w = Tensor(dt, {cfg.head_expand, cfg.embed_dim});
    head.embed_b = Tensor(dt, {cfg.embed_dim});
    g.blocks.push_back({"head", StageTag::Head, std::move(head)});
    return g;
}

// --- tensor enumeration ----------------------------------------------------

using Visitor = std::function<void(const std::string&, Tensor&)>;

void visit_conv(const std::string& name, ConvParams& p, const Visitor& fn) {
    fn(name + ".weight", p.weight);
    if (p.bias) fn(name + ".bias", *p.bias);
}

void visit_bn(const std::string& name, BNParams& p, const Visitor& fn) {
    fn(name + ".gamma", p.gamma);
    fn(name + ".beta", p.beta);
    fn(name + ".mean", p.mean);
    fn(name + ".var", p.var);
}

void visit_conv_bn_act(const std::string& name, ConvBNActSpec& s, const Visitor& fn) {
    visit_conv(name, s.conv, fn);
    if (s.bn) visit_bn(name + ".bn", *s.bn, fn);
}

void visit_block(BlockSpec& b, const Visitor& fn) {
    if (auto* stem = std::get_if<StemSpec>(&b.op)) {
        visit_conv_bn_act(b.name + ".conv1", stem->conv1, fn);
        visit_conv_bn_act(b.name + ".conv2", stem->conv2, fn);
    } else if (auto* down = std::get_if<DownsampleSpec>(&b.op)) {
        visit_conv_bn_act(b.name + ".conv", down->conv, fn);
    } else if (auto* enc = std::get_if<EncoderSpec>(&b.op)) {
        if (enc->repmix.form() == Form::Train) {
            auto& t = std::get<RepMixTrain>(enc->repmix.params);
            visit_conv(b.name + ".repmix.dw3", t.dw3, fn);
            visit_conv(b.name + ".repmix.dw1", t.dw1, fn);
            visit_bn(b.name + ".repmix.bn", t.bn, fn);
        } else {
            visit_conv(b.name + ".repmix.fused", std::get<ConvParams>(enc->repmix.params), fn);
        }
        if (enc->lite) {
            LiteMHLASpec& m = *enc->lite;
            if (m.norm_kind == LiteNorm::Affine) {
                fn(b.name + ".mix.affine.alpha", m.pre_affine.alpha);
                fn(b.name + ".mix.affine.beta", m.pre_affine.beta);
            } else {
                fn(b.name + ".mix.ln.gamma", m.pre_ln.gamma);
                fn(b.name + ".mix.ln.beta", m.pre_ln.beta);
            }
            for (size_t i = 0; i < m.heads.size(); ++i) {
                fn(b.name + ".mix.head" + std::to_string(i) + ".w", m.heads[i].w);
                fn(b.name + ".mix.head" + std::to_string(i) + ".b", m.heads[i].b);
            }
            fn(b.name + ".mix.ls", m.layer_scale);
        }
        if (enc->v1) {
            MHLAv1Spec& m = *enc->v1;
            if (m.norm) {
                fn(b.name + ".mix.ln.gamma", m.norm->gamma);
                fn(b.name + ".mix.ln.beta", m.norm->beta);
            }
            for (size_t i = 0; i < m.heads.size(); ++i) {
                fn(b.name + ".mix.head" + std::to_string(i) + ".w_in", m.heads[i].w_in);
                fn(b.name + ".mix.head" + std::to_string(i) + ".w_out", m.heads[i].w_out);
            }
        }
        visit_conv(b.name + ".ffn.conv1", enc->ffn.expand, fn);
        if (enc->ffn.bn1) visit_bn(b.name + ".ffn.bn1", *enc->ffn.bn1, fn);
        visit_conv(b.name + ".ffn.conv2", enc->ffn.reduce, fn);
        if (enc->ffn.bn2) visit_bn(b.name + ".ffn.bn2", *enc->ffn.bn2, fn);
    } else if (auto* head = std::get_if<HeadSpec>(&b.op)) {
        visit_conv_bn_act(b.name + ".expand", head->expand, fn);
        visit_conv_bn_act(b.name + ".gdconv", head->gdconv, fn);
        fn(b.name + ".embed.w", head->embed_w);
        fn(b.name + ".embed.b", head->embed_b);
    }
}

// Every parameter is initialized purely from its (name, shape, global seed),
// so shared sub-structures get identical weights across configs built from
// the same seed. Dispatch is on the final name component.
//
// Residual-branch weights (RepMix branches, FFN convs) are damped below the
// plain fan-in bound: with identity BN statistics nothing normalizes the
// activations at init, and undamped branches grow them exponentially over
// ~40 layers, putting the absolute fusion-equivalence tolerances out of
// reach of f32 arithmetic.
void init_tensor(const std::string& name, Tensor& t, uint64_t seed) {
    const std::string leaf = name.substr(name.rfind('.') + 1);
    if (leaf == "gamma" || leaf == "var" || leaf == "alpha") {
        t = Tensor::full(t.dtype(), t.shape(), 1.0);
    } else if (leaf == "beta" || leaf == "mean" || leaf == "b" || leaf == "bias") {
        t = Tensor::full(t.dtype(), t.shape(), 0.0);
    } else if (leaf == "ls") {
        t = Tensor::full(t.dtype(), t.shape(), 1e-5);
    } else if (leaf == "weight" || leaf == "w" || leaf == "w_in" || leaf == "w_out") {
        // Fan-in uniform: conv kernels over Cin/groups*Kh*Kw, matrices over rows.
        int64_t fan_in = 1;
        if (t.rank() == 4)
            fan_in = t.dim(1) * t.dim(2) * t.dim(3);
        else if (t.rank() == 2)
            fan_in = t.dim(0);
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        if (name.find(".repmix.dw") != std::string::npos)
            bound *= 0.05;
        else if (name.find(".ffn.conv") != std::string::npos)
            bound *= 0.3;
        else if (leaf == "w_in" || leaf == "w_out")
            bound *= 0.3; // v1 mixer has no layer-scale gate on its residual
        fill_uniform(t, -bound, bound, seed, name);
    } else {
        throw std::logic_error("no initialization rule for tensor " + name);
    }
}

} // namespace

void visit_tensors(ModelGraph& g, const std::function<void(const std::string&, Tensor&)>& fn) {
    for (BlockSpec& b : g.blocks) visit_block(b, fn);
}

void visit_tensors(const ModelGraph& g,
                   const std::function<void(const std::string&, const Tensor&)>& fn) {
    // Enumeration never mutates; reuse the non-const walker on a const graph.
    auto& mut = const_cast<ModelGraph&>(g);
    for (BlockSpec& b : mut.blocks)
        visit_block(b, [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

ModelGraph build(const VariantConfig& config, uint64_t seed, Dtype dtype) {
    ModelGraph g = make_skeleton(config, seed, dtype, Form::Train);
    std::set<std::string> names;
    visit_tensors(g, [&](const std::string& name, Tensor& t) {
        FLIVT_CHECK(names.insert(name).second, "duplicate tensor name " << name);
        init_tensor(name, t, seed);
    });
    return g;
}

ModelGraph skeleton(const VariantConfig& config, uint64_t seed, Dtype dtype, Form form) {
    return make_skeleton(config, seed, dtype, form);
}

Tensor forward(const ModelGraph& g, const Tensor& x) {
    const int res = g.config.input_resolution();
    FLIVT_CHECK(x.rank() == 4 && x.dim(1) == 3 && x.dim(2) == res && x.dim(3) == res,
                "forward: expected (B,3," << res << "," << res << ") input");
    FLIVT_CHECK(x.dtype() == g.dtype, "forward: input dtype does not match model dtype");
    Tensor t = x;
    for (const BlockSpec& b : g.blocks) {
        if (const auto* stem = std::get_if<StemSpec>(&b.op))
            t = stem_forward(t, *stem);
        else if (const auto* down = std::get_if<DownsampleSpec>(&b.op))
            t = downsample_forward(t, *down);
        else if (const auto* enc = std::get_if<EncoderSpec>(&b.op))
            t = encoder_forward(t, *enc);
        else
            t = head_forward(t, std::get<HeadSpec>(b.op));
    }
    return t;
}

std::vector<TracePoint> shape_trace(const VariantConfig& cfg) {
    std::vector<TracePoint> trace;
    const int64_t r1 = conv_out_side(cfg.input_resolution(), 3, 2, 1);
    trace.push_back({"stem.conv1", cfg.stem_channels[0], r1});
    trace.push_back({"stem.conv2", cfg.stem_channels[1], conv_out_side(r1, 3, 2, 1)});
    for (int stage = 0; stage < 4; ++stage) {
        const std::string prefix = "stage" + std::to_string(stage + 1);
        for (int d = 0; d < cfg.stage_depths[static_cast<size_t>(stage)]; ++d)
            trace.push_back({prefix + ".enc" + std::to_string(d),
                             cfg.stage_channels[static_cast<size_t>(stage)],
                             cfg.stage_resolutions[static_cast<size_t>(stage)]});
        if (stage < 3)
            trace.push_back({prefix + ".down", cfg.stage_channels[static_cast<size_t>(stage) + 1],
                             cfg.stage_resolutions[static_cast<size_t>(stage) + 1]});
    }
    trace.push_back({"head.expand", cfg.head_expand, cfg.stage_resolutions[3]});
    trace.push_back({"head.gdconv", cfg.head_expand, 1});
    trace.push_back({"head.embed", cfg.embed_dim, 0});
    return trace;
}

} // namespace flivt
