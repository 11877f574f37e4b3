#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flivt/analysis.hpp"
#include "flivt/reparam.hpp"

#include <sstream>

using namespace flivt;

namespace {

const CostRow& find_row(const CostReport& r, const std::string& layer) {
    for (const CostRow& row : r.rows)
        if (row.layer == layer) return row;
    FAIL("no row named " << layer);
    static CostRow dummy;
    return dummy;
}

long long sum_rows(const CostReport& r, const std::string& prefix, bool madds) {
    long long s = 0;
    for (const CostRow& row : r.rows)
        if (row.layer.rfind(prefix, 0) == 0) s += madds ? row.madds : row.params;
    return s;
}

} // namespace

TEST_CASE("single conv params: 3x3, 3->16 with bias counts 448") {
    ModelGraph g = build(VariantConfig::preset(Variant::XS), 1);
    auto [deploy, rep] = fuse_model(g, 0.0, 0);
    (void)rep;
    CHECK(find_row(count_params(deploy), "stem.conv1").params == 448); // 3*3*3*16 + 16
    CHECK(find_row(count_params(g), "stem.conv1").params == 432);      // bias lives in the BN
}

TEST_CASE("fused repmix at 48 channels counts 480 params") {
    ModelGraph g = build(VariantConfig::preset(Variant::S), 1);
    auto [deploy, rep] = fuse_model(g, 0.0, 0);
    (void)rep;
    CHECK(find_row(count_params(deploy), "stage1.enc0.repmix.fused").params == 480); // 9*48+48
}

TEST_CASE("pointwise conv madds: 128->256 at 7x7 is 1605632") {
    ModelGraph g = build(VariantConfig::preset(Variant::XS), 1);
    CHECK(find_row(count_madds(g), "stage3.enc0.ffn.conv1").madds == 1605632); // 128*256*49
}

TEST_CASE("S stage-3 block: token interaction 460992, FFN 7225344") {
    ModelGraph g = build(VariantConfig::preset(Variant::S), 1);
    CostReport r = count_madds(g);
    CHECK(sum_rows(r, "stage3.enc0.mix.head", true) == 460992);  // 49^2 * 192
    CHECK(sum_rows(r, "stage3.enc0.ffn.conv", true) == 7225344); // 4 * 49 * 192^2
}

TEST_CASE("variant totals stay within 5% of the published table") {
    const struct {
        Variant v;
        double params_m, madds_m;
    } published[] = {
        {Variant::XS, 2.90, 90.0},
        {Variant::S, 4.62, 179.0},
        {Variant::M, 7.04, 258.0},
        {Variant::L, 8.52, 309.0},
    };
    for (const auto& p : published) {
        ModelGraph g = build(VariantConfig::preset(p.v), 1);
        auto [deploy, rep] = fuse_model(g, 0.0, 0);
        (void)rep;
        const double params = static_cast<double>(count_params(g).total_params());
        const double madds = static_cast<double>(count_madds(deploy).total_madds());
        CHECK(std::abs(params / (p.params_m * 1e6) - 1.0) < 0.05);
        CHECK(std::abs(madds / (p.madds_m * 1e6) - 1.0) < 0.05);
    }
}

TEST_CASE("eval_complexity closed forms") {
    CHECK(eval_complexity(Mechanism::LiteMHLA, 49, 192).madds == 460992);
    CHECK(eval_complexity(Mechanism::MHSA, 49, 192).madds == 8147328); // 4NC^2 + 2N^2C
    CHECK(eval_complexity(Mechanism::LiteMHLA, 1, 1).madds == 1);
    CHECK(eval_complexity(Mechanism::MHLAv1, 16, 8, 0.5).madds == 2 * (16 * 8) * 8);
    CHECK(eval_complexity(Mechanism::MHLAv1, 49, 192, 0.5).madds == 2 * (49 * 25) * 192);
    CHECK_THROWS_AS(eval_complexity(Mechanism::MHSA, 0, 4), std::invalid_argument);
}

TEST_CASE("counted token-mix madds equal the closed form for all configs") {
    for (Variant v : {Variant::XS, Variant::S, Variant::M, Variant::L}) {
        ModelGraph g = build(VariantConfig::preset(v), 1);
        CHECK(cross_check(g).ok);
    }
    const VariantConfig s = VariantConfig::preset(Variant::S);
    for (const char* knob : {"kinds=RL,RL,RL,RL", "n_head=1", "n_head=3", "n_head=5", "n_head=6",
                             "norm=layernorm", "activation=gelu", "mhla=v1"}) {
        ModelGraph g = build(build_ablation(s, knob), 1);
        CHECK(cross_check(g).ok);
    }
}

TEST_CASE("cross_check flags a corrupted block") {
    ModelGraph g = build(VariantConfig::preset(Variant::S), 1);
    for (BlockSpec& b : g.blocks)
        if (b.name == "stage3.enc4") std::get<EncoderSpec>(b.op).lite->tokens += 1;
    CrossCheckResult r = cross_check(g);
    CHECK(!r.ok);
    REQUIRE(r.mismatches.size() == 1);
    CHECK(r.mismatches[0] == "stage3.enc4");
}

TEST_CASE("v1 ablation counts 2(N*Nr)C per block") {
    ModelGraph g = build(build_ablation(VariantConfig::preset(Variant::S), "mhla=v1"), 1);
    CostReport r = count_madds(g);
    // stage 3: N=49, Nr=round(24.5)=25, C=192
    CHECK(sum_rows(r, "stage3.enc0.mix.head", true) == 2 * (49 * 25) * 192);
    CHECK(cross_check(g).ok);
}

TEST_CASE("deploy madds never exceed train madds") {
    for (Variant v : {Variant::XS, Variant::S, Variant::M, Variant::L}) {
        ModelGraph g = build(VariantConfig::preset(v), 1);
        auto [deploy, rep] = fuse_model(g, 0.0, 0);
        (void)rep;
        CHECK(count_madds(deploy).total_madds() <= count_madds(g).total_madds());
    }
}

TEST_CASE("parameter totals are seed-invariant") {
    const VariantConfig cfg = VariantConfig::preset(Variant::M);
    CHECK(count_params(build(cfg, 1)).total_params() ==
          count_params(build(cfg, 999)).total_params());
}

TEST_CASE("every row carries a category and the lite mixer overhead is 4C") {
    ModelGraph g = build(VariantConfig::preset(Variant::S), 1);
    CostReport r = count_params(g);
    for (const CostRow& row : r.rows) {
        CHECK(!row.kind.empty());
        CHECK((row.category == OpCategory::Compute || row.category == OpCategory::Memory));
    }
    // affine 2C + per-head bias adds C + layer scale C
    long long eps_ops = 0;
    for (const CostRow& row : r.rows) {
        if (row.layer.rfind("stage3.enc0.mix.", 0) != 0) continue;
        if (row.category == OpCategory::Memory) eps_ops += row.mem_ops;
    }
    CHECK(eps_ops == 4 * 192);
}

TEST_CASE("per-stage totals add up to the model total") {
    ModelGraph g = build(VariantConfig::preset(Variant::XS), 1);
    CostReport r = count_params(g);
    long long by_stage = 0;
    for (StageTag t : {StageTag::Stem, StageTag::Stage1, StageTag::Stage2, StageTag::Stage3,
                       StageTag::Stage4, StageTag::Head})
        by_stage += r.stage_params(t);
    CHECK(by_stage == r.total_params());
}

TEST_CASE("CSV round-trips its totals") {
    ModelGraph g = build(VariantConfig::preset(Variant::XS), 1);
    CostReport r = count_madds(g);
    std::ostringstream os;
    write_csv(r, os, false);
    std::istringstream is(os.str());

    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line.rfind("layer,kind,stage,params,madds,category", 0) == 0);
    long long params = 0, madds = 0, total_params = -1, total_madds = -1;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        REQUIRE(cells.size() >= 5);
        if (cells[0] == "TOTAL") {
            total_params = std::stoll(cells[3]);
            total_madds = std::stoll(cells[4]);
        } else {
            params += std::stoll(cells[3]);
            madds += std::stoll(cells[4]);
        }
    }
    CHECK(params == total_params);
    CHECK(madds == total_madds);
    CHECK(total_params == r.total_params());
    CHECK(total_madds == r.total_madds());
}
