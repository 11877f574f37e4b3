#pragma once

#include "flivt/model.hpp"

#include <iosfwd>

namespace flivt {

// Runtime category per the compute/memory taxonomy: convolution, matmul,
// pooling and activations are compute-bound; elementwise, normalization and
// reshape/copy work is memory-bound.
enum class OpCategory { Compute, Memory };
const char* category_name(OpCategory c);

struct CostRow {
    std::string layer; // weight-name prefix of the op
    std::string kind;  // conv | dwconv | gdconv | dense | token_mix | batchnorm | ...
    StageTag stage;
    long long params = 0;      // headline parameters (BN running stats excluded)
    long long params_full = 0; // including BN running statistics
    long long madds = 0;       // multiply-accumulates; conv/dense/token-mix only
    long long mem_ops = 0;     // per-channel vector ops of everything excluded from madds
    OpCategory category = OpCategory::Compute;
};

struct CostReport {
    std::string variant;
    Form form = Form::Train;
    std::vector<CostRow> rows;

    long long total_params() const;
    long long total_params_full() const;
    long long total_madds() const;
    long long total_mem_ops() const;
    long long stage_params(StageTag t) const;
    long long stage_madds(StageTag t) const;
};

// Per-layer parameter and multiply-accumulate accounting for batch 1.
// Conventions: conv params = Kh*Kw*(Cin/groups)*Cout (+Cout if biased);
// conv madds = Kh*Kw*(Cin/groups)*Cout*Hout*Wout; dense madds = in*out;
// token-mix madds = N^2 * group-channels summed over heads. BN counts 2C
// headline params (4C with running stats); activations, normalization,
// rescales and residual adds never enter the madds column.
CostReport count_params(const ModelGraph& g);
CostReport count_madds(const ModelGraph& g, int input_res = 112);

enum class Mechanism { MHSA, MHLAv1, LiteMHLA };

// Closed-form token-interaction cost of one mixing block:
//   MHSA     4NC^2 + 2N^2C
//   MHLA v1  2(N*Nr)C with Nr = round(N*r)
//   LiteMHLA N^2C   (the affine/rescale overhead is tracked as memory ops,
//                    never merged into madds)
struct ComplexityTerm {
    Mechanism mechanism;
    int64_t tokens = 0;
    int64_t channels = 0;
    double ratio = 0.0; // v1 only
    long long madds = 0;
};
ComplexityTerm eval_complexity(Mechanism m, int64_t tokens, int64_t channels, double ratio = 0.5);

// For every token-mixing block, the counted madds must equal the closed-form
// mechanism cost exactly (integer equality). Offenders are listed by name.
struct CrossCheckResult {
    bool ok = true;
    std::vector<std::string> mismatches;
};
CrossCheckResult cross_check(const ModelGraph& g);

// RFC-4180 CSV: layer,kind,stage,params,madds,category + final TOTAL row.
// Verbose adds params_full and mem_ops columns.
void write_csv(const CostReport& report, std::ostream& os, bool verbose = false);

} // namespace flivt
