#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace flivt {

#define FLIVT_CHECK(cond, msg)                         \
    do {                                               \
        if (!(cond)) {                                 \
            std::ostringstream oss_;                   \
            oss_ << msg;                               \
            throw std::invalid_argument(oss_.str());   \
        }                                              \
    } while (0)

enum class Dtype { F32, F64 };

inline const char* dtype_name(Dtype dt) { return dt == Dtype::F32 ? "f32" : "f64"; }
inline size_t dtype_size(Dtype dt) { return dt == Dtype::F32 ? 4 : 8; }

// Dense row-major real tensor; the single value carrier of the toolkit.
// Rank 4 (N,C,H,W) for feature maps, rank 2 for matrices, rank 1 for vectors.
// Every kernel in tensor.cpp leaves only finite values behind; a NaN/Inf result
// throws instead of propagating.
class Tensor {
public:
    Tensor() = default;

    Tensor(Dtype dt, std::vector<int64_t> shape) : shape_(std::move(shape)) {
        int64_t n = 1;
        for (int64_t d : shape_) {
            FLIVT_CHECK(d >= 0, "tensor dims must be non-negative");
            n *= d;
        }
        if (dt == Dtype::F32)
            data_ = std::vector<float>(static_cast<size_t>(n), 0.0f);
        else
            data_ = std::vector<double>(static_cast<size_t>(n), 0.0);
    }

    static Tensor full(Dtype dt, std::vector<int64_t> shape, double value);

    template <typename T>
    static Tensor from_data(std::vector<int64_t> shape, std::vector<T> values);

    Dtype dtype() const {
        return std::holds_alternative<std::vector<float>>(data_) ? Dtype::F32 : Dtype::F64;
    }

    const std::vector<int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : shape_) n *= d;
        return n;
    }

    template <typename T>
    std::span<const T> data() const {
        return std::get<std::vector<T>>(data_);
    }

    template <typename T>
    std::span<T> data() {
        return std::get<std::vector<T>>(data_);
    }

    // Dtype-agnostic element access; convenience for tests/reporting, not kernels.
    double at(int64_t flat) const;
    void set(int64_t flat, double v);

    Tensor to(Dtype dt) const;
    bool bitwise_equal(const Tensor& other) const;

    bool all_finite() const;

    friend Tensor reshaped(Tensor t, std::vector<int64_t> shape);

private:
    std::vector<int64_t> shape_;
    std::variant<std::vector<float>, std::vector<double>> data_;
};

// Reinterpret the same data with a new shape (element count must match).
Tensor reshaped(Tensor t, std::vector<int64_t> shape);

struct ConvParams {
    Tensor weight; // (Cout, Cin/groups, Kh, Kw)
    std::optional<Tensor> bias; // (Cout)
    int stride = 1;
    int padding = 0;
    int groups = 1;

    int64_t cout() const { return weight.dim(0); }
    int64_t cin() const { return weight.dim(1) * groups; }
    int64_t kh() const { return weight.dim(2); }
    int64_t kw() const { return weight.dim(3); }
    bool depthwise() const { return groups == cin() && groups == cout(); }
};

struct BNParams {
    Tensor gamma; // (C)
    Tensor beta;  // (C)
    Tensor mean;  // (C) running mean
    Tensor var;   // (C) running variance, >= 0
    double eps = 1e-5;

    int64_t channels() const { return gamma.dim(0); }
};

struct AffineParams {
    Tensor alpha; // (C)
    Tensor beta;  // (C)

    int64_t channels() const { return alpha.dim(0); }
};

struct LayerNormParams {
    Tensor gamma; // (C)
    Tensor beta;  // (C)
    double eps = 1e-5;

    int64_t channels() const { return gamma.dim(0); }
};

// --- kernels ------------------------------------------------------------
//
// All kernels are pure functions of their inputs: no shared mutable state,
// value-semantic tensors, safe to call concurrently.

// Direct-sum 2D convolution over NCHW input.
// out shape: (N, Cout, (H + 2*pad - Kh)/stride + 1, (W + 2*pad - Kw)/stride + 1)
Tensor conv2d(const Tensor& x, const ConvParams& p);

// Per-row token map: out[b,c,:] = x[b,c,:] * w (+ bias).
// x: (B, C, M); w: (M, K) row-major; bias: (K). Square (M == K) in the lite
// token mixer, rectangular in the two-layer v1 heads.
Tensor linear_tokens(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor linear_tokens(const Tensor& x, const Tensor& w);

// Inference-form batch normalization: y = (x - mean_c)/sqrt(var_c + eps)*gamma_c + beta_c.
// There is no batch-statistics mode anywhere in this toolkit.
Tensor batchnorm_infer(const Tensor& x, const BNParams& p);

// Exact GELU, y = 0.5*x*(1 + erf(x/sqrt(2))). Not the tanh approximation:
// fusion-equivalence tolerances must not absorb activation-approximation error.
Tensor gelu(const Tensor& x);

// y = alpha_c * x + beta_c, channel axis = dim 1. Accepts (B,C,N) or (N,C,H,W).
Tensor affine(const Tensor& x, const AffineParams& p);

// Normalize over the channel axis per token, then scale/shift per channel.
// x: (B, C, N).
Tensor layernorm_channels(const Tensor& x, const LayerNormParams& p);

// Contiguous channel groups of size ceil(C/parts); the final group may be
// smaller. Concatenating the result in order reconstructs x exactly.
std::vector<Tensor> chunk_channels(const Tensor& x, int parts);

// Number of groups chunk_channels yields (can be < parts when the ceiling
// rule exhausts the channels early).
int chunk_count(int64_t channels, int parts);

Tensor concat_channels(const std::vector<Tensor>& parts);

// Depthwise convolution whose kernel spans the whole feature map:
// x (N,C,H,W) with Kh == H, Kw == W, groups == C, no padding -> (N,C,1,1).
Tensor global_dwconv(const Tensor& x, const ConvParams& p);

// out[b,o] = sum_i x[b,i]*w[i,o] + bias[o]; x (B,In), w (In,Out), bias (Out).
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);

// y[b,c,...] = scale_c * x[b,c,...]; channel axis = dim 1.
Tensor mul_channels(const Tensor& x, const Tensor& scale);

Tensor slice_batch(const Tensor& x, int64_t start, int64_t count);
Tensor concat_batch(const std::vector<Tensor>& parts);

double max_abs_diff(const Tensor& a, const Tensor& b);

// Fill with uniform draws from [lo, hi), seeded by (seed, name); the stream
// depends only on the pair, never on call order.
void fill_uniform(Tensor& t, double lo, double hi, uint64_t seed, std::string_view name);

} // namespace flivt
