// flivt: build, fuse, verify, count, bench and run FaceLiVT-v2-style models.
//
// Exit codes: 0 success, 1 verification/equivalence failure, 2 usage error,
// 3 IO/format error.
#include <CLI11.hpp>

#include "flivt/analysis.hpp"
#include "flivt/bench.hpp"
#include "flivt/reparam.hpp"
#include "flivt/weight_file.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <thread>

using namespace flivt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerification = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

Dtype parse_dtype(const std::string& s) {
    if (s == "f32") return Dtype::F32;
    if (s == "f64") return Dtype::F64;
    throw std::invalid_argument("--dtype: expected f32 or f64");
}

VariantConfig config_from_flags(const std::string& variant,
                                const std::vector<std::string>& ablations) {
    VariantConfig cfg = VariantConfig::preset(variant_from_name(variant));
    for (const std::string& knob : ablations) cfg = build_ablation(cfg, knob);
    return cfg;
}

void print_summary(const ModelGraph& g) {
    CostReport params = count_params(g);
    long long deploy_madds;
    if (g.form == Form::Train) {
        auto [deploy, rep] = fuse_model(g, 0.0, 0);
        (void)rep;
        deploy_madds = count_madds(deploy).total_madds();
    } else {
        deploy_madds = count_madds(g).total_madds();
    }
    std::printf("%s (%s, %s): params %lld (%.2fM), deploy madds %lld (%.1fM)\n",
                variant_name(g.config.name), g.form == Form::Train ? "train" : "deploy",
                dtype_name(g.dtype), params.total_params(), params.total_params() / 1e6,
                deploy_madds, deploy_madds / 1e6);
}

void print_fusion_report(const FusionReport& r) {
    std::printf("fusion: blocks_fused=%d samples=%d max_abs_diff=%.3g tolerance=%.3g -> %s\n",
                r.blocks_fused, r.inputs_sampled, r.max_abs_diff, r.tolerance,
                r.passed ? "PASS" : "FAIL");
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    if (!f) throw io_error("cannot open " + path + " for writing");
    f << text;
    if (!f) throw io_error("write failed: " + path);
}

int cmd_build(const std::string& variant, const std::vector<std::string>& ablations,
              uint64_t seed, const std::string& dtype, const std::string& out) {
    ModelGraph g = build(config_from_flags(variant, ablations), seed, parse_dtype(dtype));
    save_weights(g, out);
    print_summary(g);
    return kExitOk;
}

int cmd_fuse(const std::string& in, const std::string& out, double tol, int samples) {
    ModelGraph g = load_weights(in);
    auto [deploy, report] = fuse_model(g, tol, samples);
    print_fusion_report(report);
    if (!report.passed) return kExitVerification;
    save_weights(deploy, out);
    print_summary(deploy);
    return kExitOk;
}

int cmd_verify(const std::string& in, double tol, int samples) {
    ModelGraph g = load_weights(in);
    auto [deploy, report] = fuse_model(g, tol, samples);
    (void)deploy; // fused graph is discarded; only the certificate matters
    print_fusion_report(report);
    return report.passed ? kExitOk : kExitVerification;
}

int cmd_count(const std::string& in, const std::string& variant,
              const std::vector<std::string>& ablations, const std::string& form,
              const std::string& csv, bool verbose) {
    ModelGraph g =
        in.empty() ? build(config_from_flags(variant, ablations), 0) : load_weights(in);
    if (form == "deploy" && g.form == Form::Train) {
        auto [deploy, rep] = fuse_model(g, 0.0, 0);
        (void)rep;
        g = std::move(deploy);
    } else if (form == "train" && g.form == Form::Deploy) {
        throw std::invalid_argument("cannot count a deploy file in train form");
    } else if (!form.empty() && form != "train" && form != "deploy") {
        throw std::invalid_argument("--form: expected train or deploy");
    }
    CostReport report = count_madds(g);
    if (!csv.empty()) {
        std::ostringstream os;
        write_csv(report, os, verbose);
        write_text_file(csv, os.str());
    }
    print_summary(g);
    std::printf("per-stage params/madds:\n");
    for (StageTag t : {StageTag::Stem, StageTag::Stage1, StageTag::Stage2, StageTag::Stage3,
                       StageTag::Stage4, StageTag::Head})
        std::printf("  %-6s %12lld %14lld\n", stage_tag_name(t), report.stage_params(t),
                    report.stage_madds(t));
    std::printf("memory-op tally (per-channel vector ops): %lld\n", report.total_mem_ops());
    return kExitOk;
}

int cmd_bench(const std::string& in, int runs, int warmup, int64_t batch, const std::string& csv,
              int threads) {
    set_num_threads(threads);
    ModelGraph g = load_weights(in);
    BenchResult r = run_bench(g, runs, warmup, batch, in);
    if (!csv.empty()) {
        std::ostringstream os;
        os << "run,latency_us\r\n";
        for (size_t i = 0; i < r.latencies_us.size(); ++i)
            os << i << ',' << r.latencies_us[i] << "\r\n";
        write_text_file(csv, os.str());
    }
    std::printf("bench %s (%s): batch=%lld runs=%d warmup=%d threads=%d\n", r.model_id.c_str(),
                r.form == Form::Train ? "train" : "deploy", static_cast<long long>(r.batch),
                r.runs, r.warmup, r.threads);
    std::printf("  mean %.1f us  stddev %.1f us  median %.1f us\n", r.mean_us, r.stddev_us,
                r.median_us);
    return kExitOk;
}

int cmd_infer(const std::string& in, const std::string& input, const std::string& out,
              int threads) {
    set_num_threads(threads);
    ModelGraph g = load_weights(in);

    std::ifstream f(input, std::ios::binary | std::ios::ate);
    if (!f) throw io_error("cannot open " + input);
    const int64_t size = f.tellg();
    f.seekg(0);
    const int res = g.config.input_resolution();
    const int64_t sample_bytes = 3LL * res * res * 4;
    if (size == 0 || size % sample_bytes != 0)
        throw io_error("input blob is " + std::to_string(size) +
                       " bytes, expected a multiple of " + std::to_string(sample_bytes) +
                       " (f32 " + std::to_string(res) + "x" + std::to_string(res) +
                       " RGB samples normalized to [-1,1])");
    const int64_t batch = size / sample_bytes;

    Tensor x(Dtype::F32, {batch, 3, res, res});
    {
        auto span = x.data<float>();
        f.read(reinterpret_cast<char*>(span.data()), size);
        if (!f) throw io_error("read failed: " + input);
    }
    if (g.dtype == Dtype::F64) x = x.to(Dtype::F64);

    Tensor y;
    if (threads > 1 && batch > 1) {
        // data-parallel over independent samples
        const int n = static_cast<int>(std::min<int64_t>(threads, batch));
        std::vector<Tensor> parts(static_cast<size_t>(n));
        std::vector<std::thread> pool;
        set_num_threads(1);
        const int64_t step = (batch + n - 1) / n;
        for (int t = 0; t < n; ++t)
            pool.emplace_back([&, t] {
                const int64_t lo = t * step;
                const int64_t hi = std::min<int64_t>(batch, lo + step);
                if (lo < hi)
                    parts[static_cast<size_t>(t)] = forward(g, slice_batch(x, lo, hi - lo));
            });
        for (auto& th : pool) th.join();
        std::vector<Tensor> nonempty;
        for (Tensor& p : parts)
            if (p.numel() > 0) nonempty.push_back(std::move(p));
        y = concat_batch(nonempty);
    } else {
        y = forward(g, x);
    }
    if (y.dtype() == Dtype::F64) y = y.to(Dtype::F32);

    std::ofstream of(out, std::ios::binary | std::ios::trunc);
    if (!of) throw io_error("cannot open " + out + " for writing");
    auto span = y.data<float>();
    of.write(reinterpret_cast<const char*>(span.data()),
             static_cast<std::streamsize>(span.size() * sizeof(float)));
    if (!of) throw io_error("write failed: " + out);
    std::printf("wrote %lld embedding(s) of %lld floats to %s\n",
                static_cast<long long>(y.dim(0)), static_cast<long long>(y.dim(1)), out.c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    set_num_threads(1);

    CLI::App app{"inference toolkit for reparameterizable hybrid face-recognition backbones"};
    app.require_subcommand(1);

    std::string variant = "xs", dtype = "f32", in, out, input_blob, csv, form;
    std::vector<std::string> ablations;
    uint64_t seed = 0;
    double tol = 0.0; // 0 = dtype default
    int samples = 16, runs = 100, warmup = 10, threads = 1;
    int64_t batch = 1;

    CLI::App* c_build = app.add_subcommand("build", "build a seeded train-form model");
    c_build->add_option("--variant", variant, "xs|s|m|l")->capture_default_str();
    c_build->add_option(
        "--ablation", ablations,
        "config knob, repeatable (kinds=..., n_head=k, norm=..., activation=..., mhla=...)");
    c_build->add_option("--seed", seed, "weight init seed")->capture_default_str();
    c_build->add_option("--dtype", dtype, "f32|f64")->capture_default_str();
    c_build->add_option("--out", out, "output weight file")->required();

    CLI::App* c_fuse = app.add_subcommand("fuse", "reparameterize into deploy form and certify");
    c_fuse->add_option("--in", in, "train-form weight file")->required();
    c_fuse->add_option("--out", out, "deploy-form weight file")->required();
    c_fuse->add_option("--tol", tol, "max-abs tolerance (default 1e-4 f32 / 1e-9 f64)");
    c_fuse->add_option("--samples", samples, "equivalence inputs")->capture_default_str();

    CLI::App* c_verify = app.add_subcommand("verify", "fuse internally and check equivalence");
    c_verify->add_option("--in", in, "train-form weight file")->required();
    c_verify->add_option("--tol", tol, "max-abs tolerance (default 1e-4 f32 / 1e-9 f64)");
    c_verify->add_option("--samples", samples, "equivalence inputs")->capture_default_str();

    CLI::App* c_count = app.add_subcommand("count", "per-layer parameter/MAdds report");
    c_count->add_option("--in", in, "weight file (alternative to --variant)");
    c_count->add_option("--variant", variant, "xs|s|m|l")->capture_default_str();
    c_count->add_option("--ablation", ablations, "config knob, repeatable");
    c_count->add_option("--form", form, "train|deploy (default: the model's own form)");
    c_count->add_option("--csv", csv, "write per-layer rows to a CSV file");
    c_count->add_flag("--verbose", "add params_full and mem_ops CSV columns");

    CLI::App* c_bench = app.add_subcommand("bench", "timed forward loop");
    c_bench->add_option("--in", in, "weight file")->required();
    c_bench->add_option("--runs", runs, "recorded runs")->capture_default_str();
    c_bench->add_option("--warmup", warmup, "unrecorded runs")->capture_default_str();
    c_bench->add_option("--batch", batch, "batch size")->capture_default_str();
    c_bench->add_option("--csv", csv, "write per-run latencies to a CSV file");
    c_bench->add_option("--threads", threads, "kernel threads")->capture_default_str();

    CLI::App* c_infer = app.add_subcommand("infer", "raw-blob inference");
    c_infer->add_option("--in", in, "weight file")->required();
    c_infer->add_option("--input", input_blob, "raw little-endian f32 blob, Bx3x112x112")
        ->required();
    c_infer->add_option("--out", out, "raw f32 embedding blob, Bx512")->required();
    c_infer->add_option("--threads", threads, "data-parallel batch threads")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (app.got_subcommand(c_build)) return cmd_build(variant, ablations, seed, dtype, out);
        if (app.got_subcommand(c_fuse)) return cmd_fuse(in, out, tol, samples);
        if (app.got_subcommand(c_verify)) return cmd_verify(in, tol, samples);
        if (app.got_subcommand(c_count))
            return cmd_count(in, variant, ablations, form, csv, c_count->count("--verbose") > 0);
        if (app.got_subcommand(c_bench)) return cmd_bench(in, runs, warmup, batch, csv, threads);
        if (app.got_subcommand(c_infer)) return cmd_infer(in, input_blob, out, threads);
    } catch (const io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitVerification;
    }
    return kExitUsage;
}
