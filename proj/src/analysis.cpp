#include "flivt/analysis.hpp"

#include <cmath>
#include <ostream>

namespace flivt {

const char* category_name(OpCategory c) {
    return c == OpCategory::Compute ? "compute" : "memory";
}

namespace {

long long tnumel(const Tensor& t) { return static_cast<long long>(t.numel()); }

struct RowBuilder {
    std::vector<CostRow>& rows;
    StageTag stage;

    void compute(const std::string& layer, const std::string& kind, long long params,
                 long long madds) {
        rows.push_back({layer, kind, stage, params, params, madds, 0, OpCategory::Compute});
    }
    void memory(const std::string& layer, const std::string& kind, long long params,
                long long params_full, long long mem_ops) {
        rows.push_back({layer, kind, stage, params, params_full, 0, mem_ops, OpCategory::Memory});
    }
    void activation(const std::string& layer, long long channels) {
        rows.push_back({layer, "gelu", stage, 0, 0, 0, channels, OpCategory::Compute});
    }
};

// One conv(+BN+act) unit; returns the output spatial side.
int64_t conv_unit_rows(RowBuilder& rb, const std::string& name, const std::string& kind,
                       const ConvBNActSpec& s, int64_t in_side) {
    const ConvParams& p = s.conv;
    const int64_t out_side = conv_out_side(in_side, p.kh(), p.stride, p.padding);
    long long params = tnumel(p.weight) + (p.bias ? tnumel(*p.bias) : 0);
    long long madds = static_cast<long long>(p.kh() * p.kw() * (p.cin() / p.groups) * p.cout()) *
                      out_side * out_side;
    rb.compute(name, kind, params, madds);
    if (s.bn)
        rb.memory(name + ".bn", "batchnorm", 2 * p.cout(), 4 * p.cout(), 2 * p.cout());
    if (s.act_gelu) rb.activation(name + ".gelu", p.cout());
    return out_side;
}

std::vector<int64_t> chunk_sizes(int64_t channels, int parts) {
    const int64_t size = (channels + parts - 1) / parts;
    std::vector<int64_t> out;
    for (int64_t c0 = 0; c0 < channels; c0 += size) out.push_back(std::min(size, channels - c0));
    return out;
}

void encoder_rows(RowBuilder& rb, const std::string& name, const EncoderSpec& e, int64_t side) {
    const long long c = e.channels;
    const long long n = side * side;

    // RepMix: train form holds two depthwise branches, a BN and two adds; the
    // deploy form is a single biased depthwise 3x3.
    if (e.repmix.form() == Form::Train) {
        const RepMixTrain& t = e.repmix.train();
        rb.compute(name + ".repmix.dw3", "dwconv", tnumel(t.dw3.weight), 9 * c * n);
        rb.compute(name + ".repmix.dw1", "dwconv", tnumel(t.dw1.weight), c * n);
        rb.memory(name + ".repmix.add", "eltwise", 0, 0, 2 * c);
        rb.memory(name + ".repmix.bn", "batchnorm", 2 * c, 4 * c, 2 * c);
    } else {
        const ConvParams& f = e.repmix.fused();
        rb.compute(name + ".repmix.fused", "dwconv",
                   tnumel(f.weight) + (f.bias ? tnumel(*f.bias) : 0), 9 * c * n);
    }

    if (e.lite) {
        const LiteMHLASpec& m = *e.lite;
        if (m.norm_kind == LiteNorm::Affine)
            rb.memory(name + ".mix.affine", "affine", 2 * c, 2 * c, 2 * c);
        else
            rb.memory(name + ".mix.ln", "layernorm", 2 * c, 2 * c, 2 * c);
        const auto groups = chunk_sizes(m.channels, m.n_head);
        for (size_t i = 0; i < m.heads.size(); ++i) {
            const long long nn = m.heads[i].w.dim(0);
            rb.compute(name + ".mix.head" + std::to_string(i), "token_mix",
                       tnumel(m.heads[i].w) + tnumel(m.heads[i].b), nn * nn * groups[i]);
        }
        rb.memory(name + ".mix.bias", "eltwise", 0, 0, c);
        if (m.gelu_after_mix) rb.activation(name + ".mix.gelu", c);
        rb.memory(name + ".mix.ls", "rescale", c, c, c);
        rb.memory(name + ".residual.mix", "eltwise", 0, 0, c);
    } else if (e.v1) {
        const MHLAv1Spec& m = *e.v1;
        if (m.norm) rb.memory(name + ".mix.ln", "layernorm", 2 * c, 2 * c, 2 * c);
        const auto groups = chunk_sizes(m.channels, m.n_head);
        for (size_t i = 0; i < m.heads.size(); ++i) {
            const long long in = tnumel(m.heads[i].w_in), out = tnumel(m.heads[i].w_out);
            rb.compute(name + ".mix.head" + std::to_string(i), "token_mix", in + out,
                       (in + out) * groups[i]);
        }
        rb.activation(name + ".mix.gelu", c);
        rb.memory(name + ".residual.mix", "eltwise", 0, 0, c);
    }

    const long long hidden = e.ffn.expand.cout();
    rb.compute(name + ".ffn.conv1", "conv",
               tnumel(e.ffn.expand.weight) + (e.ffn.expand.bias ? hidden : 0), c * hidden * n);
    if (e.ffn.bn1) rb.memory(name + ".ffn.bn1", "batchnorm", 2 * hidden, 4 * hidden, 2 * hidden);
    rb.activation(name + ".ffn.gelu", hidden);
    rb.compute(name + ".ffn.conv2", "conv",
               tnumel(e.ffn.reduce.weight) + (e.ffn.reduce.bias ? c : 0), hidden * c * n);
    if (e.ffn.bn2) rb.memory(name + ".ffn.bn2", "batchnorm", 2 * c, 4 * c, 2 * c);
    rb.memory(name + ".residual.ffn", "eltwise", 0, 0, c);
}

CostReport analyze(const ModelGraph& g, int input_res) {
    CostReport report;
    report.variant = variant_name(g.config.name);
    report.form = g.form;
    int64_t side = input_res;
    for (const BlockSpec& b : g.blocks) {
        RowBuilder rb{report.rows, b.stage};
        if (const auto* stem = std::get_if<StemSpec>(&b.op)) {
            side = conv_unit_rows(rb, b.name + ".conv1", "conv", stem->conv1, side);
            side = conv_unit_rows(rb, b.name + ".conv2", "conv", stem->conv2, side);
        } else if (const auto* down = std::get_if<DownsampleSpec>(&b.op)) {
            side = conv_unit_rows(rb, b.name + ".conv", "conv", down->conv, side);
        } else if (const auto* enc = std::get_if<EncoderSpec>(&b.op)) {
            encoder_rows(rb, b.name, *enc, side);
        } else if (const auto* head = std::get_if<HeadSpec>(&b.op)) {
            // Table layout keeps the 1x1 expansion in the last stage and the
            // aggregation in the head.
            rb.stage = StageTag::Stage4;
            side = conv_unit_rows(rb, b.name + ".expand", "conv", head->expand, side);
            rb.stage = StageTag::Head;
            side = conv_unit_rows(rb, b.name + ".gdconv", "gdconv", head->gdconv, side);
            const long long in = head->embed_w.dim(0), out = head->embed_w.dim(1);
            rb.compute(b.name + ".embed", "dense", in * out + out, in * out);
        }
    }
    return report;
}

} // namespace

CostReport count_params(const ModelGraph& g) { return analyze(g, g.config.input_resolution()); }

CostReport count_madds(const ModelGraph& g, int input_res) { return analyze(g, input_res); }

long long CostReport::total_params() const {
    long long s = 0;
    for (const CostRow& r : rows) s += r.params;
    return s;
}

long long CostReport::total_params_full() const {
    long long s = 0;
    for (const CostRow& r : rows) s += r.params_full;
    return s;
}

long long CostReport::total_madds() const {
    long long s = 0;
    for (const CostRow& r : rows) s += r.madds;
    return s;
}

long long CostReport::total_mem_ops() const {
    long long s = 0;
    for (const CostRow& r : rows)
        if (r.category == OpCategory::Memory) s += r.mem_ops;
    return s;
}

long long CostReport::stage_params(StageTag t) const {
    long long s = 0;
    for (const CostRow& r : rows)
        if (r.stage == t) s += r.params;
    return s;
}

long long CostReport::stage_madds(StageTag t) const {
    long long s = 0;
    for (const CostRow& r : rows)
        if (r.stage == t) s += r.madds;
    return s;
}

ComplexityTerm eval_complexity(Mechanism m, int64_t tokens, int64_t channels, double ratio) {
    FLIVT_CHECK(tokens >= 1 && channels >= 1, "eval_complexity: N and C must be >= 1");
    ComplexityTerm term{m, tokens, channels, ratio, 0};
    const long long n = tokens, c = channels;
    switch (m) {
        case Mechanism::MHSA:
            term.madds = 4 * n * c * c + 2 * n * n * c;
            break;
        case Mechanism::MHLAv1: {
            const long long nr = std::llround(static_cast<double>(tokens) * ratio);
            term.madds = 2 * (n * nr) * c;
            break;
        }
        case Mechanism::LiteMHLA:
            term.ratio = 0.0;
            term.madds = n * n * c;
            break;
    }
    return term;
}

CrossCheckResult cross_check(const ModelGraph& g) {
    CrossCheckResult result;
    for (const BlockSpec& b : g.blocks) {
        const auto* enc = std::get_if<EncoderSpec>(&b.op);
        if (!enc || (!enc->lite && !enc->v1)) continue;

        long long counted = 0;
        long long expected = 0;
        if (enc->lite) {
            const auto groups = chunk_sizes(enc->lite->channels, enc->lite->n_head);
            for (size_t i = 0; i < enc->lite->heads.size(); ++i) {
                const Tensor& w = enc->lite->heads[i].w;
                counted += w.dim(0) * w.dim(1) * groups[i];
            }
            expected = eval_complexity(Mechanism::LiteMHLA, enc->lite->tokens,
                                       enc->lite->channels).madds;
        } else {
            const auto groups = chunk_sizes(enc->v1->channels, enc->v1->n_head);
            for (size_t i = 0; i < enc->v1->heads.size(); ++i) {
                const Tensor& wi = enc->v1->heads[i].w_in;
                const Tensor& wo = enc->v1->heads[i].w_out;
                counted += (wi.dim(0) * wi.dim(1) + wo.dim(0) * wo.dim(1)) * groups[i];
            }
            expected = eval_complexity(Mechanism::MHLAv1, enc->v1->tokens, enc->v1->channels,
                                       enc->v1->ratio).madds;
        }
        if (counted != expected) {
            result.ok = false;
            result.mismatches.push_back(b.name);
        }
    }
    return result;
}

void write_csv(const CostReport& report, std::ostream& os, bool verbose) {
    os << "layer,kind,stage,params,madds,category";
    if (verbose) os << ",params_full,mem_ops";
    os << "\r\n";
    for (const CostRow& r : report.rows) {
        os << r.layer << ',' << r.kind << ',' << stage_tag_name(r.stage) << ',' << r.params << ','
           << r.madds << ',' << category_name(r.category);
        if (verbose) os << ',' << r.params_full << ',' << r.mem_ops;
        os << "\r\n";
    }
    os << "TOTAL,,," << report.total_params() << ',' << report.total_madds() << ',';
    if (verbose) os << ',' << report.total_params_full() << ',' << report.total_mem_ops();
    os << "\r\n";
}

} // namespace flivt
