#include "flivt/reparam.hpp"
#include "flivt/model.hpp"

#include <cmath>

namespace flivt {

double default_tolerance(Dtype dt) { return dt == Dtype::F32 ? 1e-4 : 1e-9; }

Tensor pad_kernel_1to3(const Tensor& w) {
    FLIVT_CHECK(w.rank() == 4 && w.dim(1) == 1 && w.dim(2) == 1 && w.dim(3) == 1,
                "pad_kernel_1to3: expected a (C,1,1,1) depthwise kernel");
    const int64_t c = w.dim(0);
    Tensor out(w.dtype(), {c, 1, 3, 3});
    for (int64_t ch = 0; ch < c; ++ch) out.set(ch * 9 + 4, w.at(ch)); // center tap (1,1)
    return out;
}

Tensor identity_kernel(int64_t channels, Dtype dt) {
    FLIVT_CHECK(channels >= 1, "identity_kernel: channels must be >= 1");
    Tensor out(dt, {channels, 1, 3, 3});
    for (int64_t ch = 0; ch < channels; ++ch) out.set(ch * 9 + 4, 1.0);
    return out;
}

ConvParams fold_bn(const ConvParams& conv, const BNParams& bn) {
    const int64_t cout = conv.cout();
    FLIVT_CHECK(cout == bn.channels(),
                "fold_bn: conv emits " << cout << " channels, BN has " << bn.channels());
    const int64_t per_out = conv.weight.numel() / cout;

    ConvParams folded;
    folded.weight = Tensor(conv.weight.dtype(), conv.weight.shape());
    folded.bias = Tensor(conv.weight.dtype(), {cout});
    folded.stride = conv.stride;
    folded.padding = conv.padding;
    folded.groups = conv.groups;

    // Per output channel c: W' = W * gamma/sigma, b' = (b - mean) * gamma/sigma + beta,
    // with sigma = sqrt(var + eps). The fold itself runs in double; the result
    // is stored in the conv's dtype.
    for (int64_t c = 0; c < cout; ++c) {
        const double denom = bn.var.at(c) + bn.eps;
        FLIVT_CHECK(denom > 0, "fold_bn: var + eps must be > 0 (channel " << c << ")");
        const double scale = bn.gamma.at(c) / std::sqrt(denom);
        for (int64_t i = 0; i < per_out; ++i)
            folded.weight.set(c * per_out + i, conv.weight.at(c * per_out + i) * scale);
        const double b = conv.bias ? conv.bias->at(c) : 0.0;
        folded.bias->set(c, (b - bn.mean.at(c)) * scale + bn.beta.at(c));
    }
    return folded;
}

RepMixSpec fuse_repmix(const RepMixSpec& s) {
    FLIVT_CHECK(s.form() == Form::Train, "fuse_repmix: already fused");
    const RepMixTrain& t = s.train();
    const int64_t c = s.channels;
    FLIVT_CHECK(t.dw3.kh() == 3 && t.dw3.kw() == 3 && t.dw3.padding == 1 && t.dw3.stride == 1 &&
                    t.dw3.depthwise(),
                "fuse_repmix: dw3 branch must be depthwise 3x3, stride 1, pad 1");
    FLIVT_CHECK(t.dw1.kh() == 1 && t.dw1.kw() == 1 && t.dw1.padding == 0 && t.dw1.stride == 1 &&
                    t.dw1.depthwise(),
                "fuse_repmix: dw1 branch must be depthwise 1x1, stride 1, pad 0");
    FLIVT_CHECK(t.dw3.cout() == c && t.dw1.cout() == c, "fuse_repmix: channel mismatch");

    // Sum the convolutional branches (dw3 + zero-padded dw1) and fold the BN
    // into them. The residual bypasses the BN, so its identity kernel joins
    // the weights only after the fold.
    ConvParams sum;
    sum.weight = add(t.dw3.weight, pad_kernel_1to3(t.dw1.weight));
    if (t.dw3.bias || t.dw1.bias) {
        Tensor b = t.dw3.bias ? *t.dw3.bias : Tensor(sum.weight.dtype(), {c});
        if (t.dw1.bias) b = add(b, *t.dw1.bias);
        sum.bias = std::move(b);
    }
    sum.stride = 1;
    sum.padding = 1;
    sum.groups = static_cast<int>(c);

    ConvParams folded = fold_bn(sum, t.bn);
    folded.weight = add(folded.weight, identity_kernel(c, folded.weight.dtype()));

    RepMixSpec fused;
    fused.channels = c;
    fused.params = std::move(folded);
    return fused;
}

namespace {

int fuse_conv_bn_act(ConvBNActSpec& s) {
    if (!s.bn) return 0;
    s.conv = fold_bn(s.conv, *s.bn);
    s.bn.reset();
    return 1;
}

int fuse_block(BlockSpec& b) {
    int fused = 0;
    if (auto* stem = std::get_if<StemSpec>(&b.op)) {
        fused += fuse_conv_bn_act(stem->conv1);
        fused += fuse_conv_bn_act(stem->conv2);
    } else if (auto* down = std::get_if<DownsampleSpec>(&b.op)) {
        fused += fuse_conv_bn_act(down->conv);
    } else if (auto* enc = std::get_if<EncoderSpec>(&b.op)) {
        enc->repmix = fuse_repmix(enc->repmix);
        ++fused;
        if (enc->ffn.bn1) {
            enc->ffn.expand = fold_bn(enc->ffn.expand, *enc->ffn.bn1);
            enc->ffn.bn1.reset();
            ++fused;
        }
        if (enc->ffn.bn2) {
            enc->ffn.reduce = fold_bn(enc->ffn.reduce, *enc->ffn.bn2);
            enc->ffn.bn2.reset();
            ++fused;
        }
        // Affine/layer-scale params in the token mixer stay: they sit across
        // the chunk boundary and are deliberately left as explicit cheap ops.
    } else if (auto* head = std::get_if<HeadSpec>(&b.op)) {
        fused += fuse_conv_bn_act(head->expand);
        fused += fuse_conv_bn_act(head->gdconv);
    }
    return fused;
}

} // namespace

std::pair<ModelGraph, FusionReport> fuse_model(const ModelGraph& g, double tol, int samples) {
    FLIVT_CHECK(g.form == Form::Train, "fuse_model: already fused");
    FLIVT_CHECK(samples >= 0, "fuse_model: samples must be >= 0");
    if (tol <= 0) tol = default_tolerance(g.dtype);

    ModelGraph deploy = g;
    deploy.form = Form::Deploy;
    FusionReport report;
    report.tolerance = tol;
    report.inputs_sampled = samples;
    for (BlockSpec& b : deploy.blocks) report.blocks_fused += fuse_block(b);

    if (samples > 0) {
        const int res = g.config.input_resolution();
        Tensor x(g.dtype, {samples, 3, res, res});
        fill_uniform(x, -1.0, 1.0, g.seed ^ 0x65717569u /* "equi" */, "fusion.check.input");
        report.max_abs_diff = max_abs_diff(forward(g, x), forward(deploy, x));
    }
    report.passed = report.max_abs_diff <= tol;
    return {std::move(deploy), report};
}

} // namespace flivt
