#include "flivt/blocks.hpp"

#include <cmath>

namespace flivt {

int64_t conv_out_side(int64_t in, int64_t kernel, int stride, int padding) {
    return (in + 2 * padding - kernel) / stride + 1;
}

int64_t MHLAv1Spec::projected_tokens() const {
    return std::llround(static_cast<double>(tokens) * ratio);
}

Tensor repmix_forward(const Tensor& x, const RepMixSpec& s) {
    FLIVT_CHECK(s.form() == Form::Train, "repmix_forward: spec is already in deploy form");
    FLIVT_CHECK(x.rank() == 4 && x.dim(1) == s.channels,
                "repmix_forward: expected " << s.channels << " channels");
    const RepMixTrain& t = s.train();
    Tensor branch = add(conv2d(x, t.dw3), conv2d(x, t.dw1));
    return add(x, batchnorm_infer(branch, t.bn));
}

Tensor repmix_forward_deploy(const Tensor& x, const RepMixSpec& s) {
    FLIVT_CHECK(s.form() == Form::Deploy, "repmix_forward_deploy: spec is in train form");
    FLIVT_CHECK(x.rank() == 4 && x.dim(1) == s.channels,
                "repmix_forward_deploy: expected " << s.channels << " channels");
    return conv2d(x, s.fused());
}

Tensor lite_mhla_forward(const Tensor& x, const LiteMHLASpec& s) {
    FLIVT_CHECK(x.rank() == 4, "lite_mhla_forward: input must be NCHW");
    const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    FLIVT_CHECK(c == s.channels, "lite_mhla_forward: channel mismatch");
    FLIVT_CHECK(h * w == s.tokens,
                "lite_mhla_forward: feature map has " << h * w << " tokens, spec expects "
                                                      << s.tokens);
    FLIVT_CHECK(s.n_head <= c, "lite_mhla_forward: head count exceeds channels");
    FLIVT_CHECK(chunk_count(c, s.n_head) == s.n_head,
                "lite_mhla_forward: " << s.n_head << " heads cannot split " << c << " channels");
    FLIVT_CHECK(static_cast<int>(s.heads.size()) == s.n_head,
                "lite_mhla_forward: spec has " << s.heads.size() << " head weights for "
                                               << s.n_head << " heads");

    Tensor tok = reshaped(x, {b, c, s.tokens});
    tok = s.norm_kind == LiteNorm::Affine ? affine(tok, s.pre_affine)
                                          : layernorm_channels(tok, s.pre_ln);
    std::vector<Tensor> groups = chunk_channels(tok, s.n_head);
    for (int i = 0; i < s.n_head; ++i) {
        groups[static_cast<size_t>(i)] =
            linear_tokens(groups[static_cast<size_t>(i)], s.heads[static_cast<size_t>(i)].w,
                          s.heads[static_cast<size_t>(i)].b);
        if (s.gelu_after_mix)
            groups[static_cast<size_t>(i)] = gelu(groups[static_cast<size_t>(i)]);
    }
    Tensor mixed = mul_channels(concat_channels(groups), s.layer_scale);
    return reshaped(std::move(mixed), {b, c, h, w});
}

Tensor mhla_v1_forward(const Tensor& x, const MHLAv1Spec& s) {
    FLIVT_CHECK(x.rank() == 4, "mhla_v1_forward: input must be NCHW");
    const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    FLIVT_CHECK(c == s.channels, "mhla_v1_forward: channel mismatch");
    FLIVT_CHECK(h * w == s.tokens, "mhla_v1_forward: token count mismatch");
    FLIVT_CHECK(s.n_head <= c, "mhla_v1_forward: head count exceeds channels");
    FLIVT_CHECK(chunk_count(c, s.n_head) == s.n_head,
                "mhla_v1_forward: " << s.n_head << " heads cannot split " << c << " channels");
    FLIVT_CHECK(static_cast<int>(s.heads.size()) == s.n_head, "mhla_v1_forward: head weights");
    FLIVT_CHECK(s.projected_tokens() >= 1, "mhla_v1_forward: projected dim must be >= 1");

    Tensor tok = reshaped(x, {b, c, s.tokens});
    if (s.norm) tok = layernorm_channels(tok, *s.norm);
    std::vector<Tensor> groups = chunk_channels(tok, s.n_head);
    for (int i = 0; i < s.n_head; ++i) {
        const auto& head = s.heads[static_cast<size_t>(i)];
        Tensor t = linear_tokens(groups[static_cast<size_t>(i)], head.w_in);
        groups[static_cast<size_t>(i)] = linear_tokens(gelu(t), head.w_out);
    }
    Tensor mixed = concat_channels(groups);
    return reshaped(std::move(mixed), {b, c, h, w});
}

Tensor ffn_forward(const Tensor& x, const FFNSpec& s) {
    FLIVT_CHECK(x.rank() == 4 && x.dim(1) == s.channels,
                "ffn_forward: expected " << s.channels << " channels, got "
                                         << (x.rank() == 4 ? x.dim(1) : -1));
    Tensor t = conv2d(x, s.expand);
    if (s.bn1) t = batchnorm_infer(t, *s.bn1);
    t = gelu(t);
    t = conv2d(t, s.reduce);
    if (s.bn2) t = batchnorm_infer(t, *s.bn2);
    return t;
}

Tensor conv_bn_act_forward(const Tensor& x, const ConvBNActSpec& s) {
    Tensor t = conv2d(x, s.conv);
    if (s.bn) t = batchnorm_infer(t, *s.bn);
    if (s.act_gelu) t = gelu(t);
    return t;
}

Tensor stem_forward(const Tensor& x, const StemSpec& s) {
    return conv_bn_act_forward(conv_bn_act_forward(x, s.conv1), s.conv2);
}

Tensor downsample_forward(const Tensor& x, const DownsampleSpec& s) {
    return conv_bn_act_forward(x, s.conv);
}

Tensor head_forward(const Tensor& x, const HeadSpec& s) {
    FLIVT_CHECK(x.rank() == 4 && x.dim(2) == s.gdconv.conv.kh() && x.dim(3) == s.gdconv.conv.kw(),
                "head_forward: spatial dims must be " << s.gdconv.conv.kh() << "x"
                                                      << s.gdconv.conv.kw());
    Tensor t = conv_bn_act_forward(x, s.expand);
    t = global_dwconv(t, s.gdconv.conv);
    if (s.gdconv.bn) t = batchnorm_infer(t, *s.gdconv.bn);
    t = reshaped(std::move(t), {t.dim(0), t.dim(1)});
    return dense(t, s.embed_w, s.embed_b);
}

Tensor encoder_forward(const Tensor& x, const EncoderSpec& s) {
    FLIVT_CHECK(!(s.lite && s.v1), "encoder_forward: encoder has two token mixers");
    Tensor t = s.repmix.form() == Form::Train ? repmix_forward(x, s.repmix)
                                              : repmix_forward_deploy(x, s.repmix);
    if (s.lite)
        t = add(t, lite_mhla_forward(t, *s.lite));
    else if (s.v1)
        t = add(t, mhla_v1_forward(t, *s.v1));
    t = add(t, ffn_forward(t, s.ffn));
    return t;
}

} // namespace flivt
