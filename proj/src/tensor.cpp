#include "flivt/tensor.hpp"
#include "flivt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace flivt {

namespace {

template <typename T>
bool finite_span(std::span<const T> s) {
    for (T v : s)
        if (!std::isfinite(v)) return false;
    return true;
}

void ensure_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) throw std::runtime_error(std::string(op) + ": non-finite result");
}

} // namespace

Tensor Tensor::full(Dtype dt, std::vector<int64_t> shape, double value) {
    Tensor t(dt, std::move(shape));
    if (dt == Dtype::F32)
        std::fill(t.data<float>().begin(), t.data<float>().end(), static_cast<float>(value));
    else
        std::fill(t.data<double>().begin(), t.data<double>().end(), value);
    return t;
}

template <typename T>
Tensor Tensor::from_data(std::vector<int64_t> shape, std::vector<T> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    FLIVT_CHECK(static_cast<int64_t>(values.size()) == t.numel(),
                "from_data: " << values.size() << " values for shape of " << t.numel());
    t.data_ = std::move(values);
    return t;
}

template Tensor Tensor::from_data<float>(std::vector<int64_t>, std::vector<float>);
template Tensor Tensor::from_data<double>(std::vector<int64_t>, std::vector<double>);

double Tensor::at(int64_t flat) const {
    return dtype() == Dtype::F32 ? static_cast<double>(data<float>()[static_cast<size_t>(flat)])
                                 : data<double>()[static_cast<size_t>(flat)];
}

void Tensor::set(int64_t flat, double v) {
    if (dtype() == Dtype::F32)
        data<float>()[static_cast<size_t>(flat)] = static_cast<float>(v);
    else
        data<double>()[static_cast<size_t>(flat)] = v;
}

Tensor Tensor::to(Dtype dt) const {
    if (dt == dtype()) return *this;
    Tensor out(dt, shape_);
    int64_t n = numel();
    if (dt == Dtype::F32) {
        auto src = data<double>();
        auto dst = out.data<float>();
        for (int64_t i = 0; i < n; ++i) dst[i] = static_cast<float>(src[i]);
    } else {
        auto src = data<float>();
        auto dst = out.data<double>();
        for (int64_t i = 0; i < n; ++i) dst[i] = static_cast<double>(src[i]);
    }
    return out;
}

bool Tensor::bitwise_equal(const Tensor& other) const {
    if (dtype() != other.dtype() || shape_ != other.shape_) return false;
    if (dtype() == Dtype::F32) {
        auto a = data<float>(), b = other.data<float>();
        return std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
    }
    auto a = data<double>(), b = other.data<double>();
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool Tensor::all_finite() const {
    return dtype() == Dtype::F32 ? finite_span(data<float>()) : finite_span(data<double>());
}

Tensor reshaped(Tensor t, std::vector<int64_t> shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    FLIVT_CHECK(n == t.numel(), "reshape: element count mismatch (" << t.numel() << " -> " << n << ")");
    t.shape_ = std::move(shape);
    return t;
}

// --- conv2d ---------------------------------------------------------------

namespace {

struct ConvDims {
    int64_t n, cin, h, w;
    int64_t cout, cpg_in, kh, kw; // cpg_in = Cin per group
    int64_t ho, wo;
    int64_t groups, cpg_out;
    int stride, pad;
};

ConvDims conv_dims(const Tensor& x, const ConvParams& p) {
    FLIVT_CHECK(x.rank() == 4, "conv2d: input must be NCHW, got rank " << x.rank());
    FLIVT_CHECK(p.weight.rank() == 4, "conv2d: weight must be rank 4");
    FLIVT_CHECK(p.stride >= 1 && p.padding >= 0, "conv2d: bad stride/padding");
    ConvDims d;
    d.n = x.dim(0); d.cin = x.dim(1); d.h = x.dim(2); d.w = x.dim(3);
    d.cout = p.weight.dim(0); d.cpg_in = p.weight.dim(1);
    d.kh = p.weight.dim(2); d.kw = p.weight.dim(3);
    d.groups = p.groups;
    d.stride = p.stride; d.pad = p.padding;
    FLIVT_CHECK(d.groups >= 1 && d.cin % d.groups == 0 && d.cout % d.groups == 0,
                "conv2d: groups=" << d.groups << " must divide Cin=" << d.cin
                                  << " and Cout=" << d.cout);
    FLIVT_CHECK(d.cpg_in == d.cin / d.groups,
                "conv2d: weight expects Cin " << d.cpg_in * d.groups << ", input has " << d.cin);
    d.cpg_out = d.cout / d.groups;
    d.ho = (d.h + 2 * d.pad - d.kh) / d.stride + 1;
    d.wo = (d.w + 2 * d.pad - d.kw) / d.stride + 1;
    FLIVT_CHECK(d.h + 2 * d.pad >= d.kh && d.w + 2 * d.pad >= d.kw && d.ho > 0 && d.wo > 0,
                "conv2d: kernel " << d.kh << "x" << d.kw << " exceeds padded input "
                                  << d.h + 2 * d.pad << "x" << d.w + 2 * d.pad);
    if (p.bias) {
        FLIVT_CHECK(p.bias->rank() == 1 && p.bias->dim(0) == d.cout,
                    "conv2d: bias length must equal Cout");
        FLIVT_CHECK(p.bias->dtype() == x.dtype(), "conv2d: bias dtype mismatch");
    }
    FLIVT_CHECK(p.weight.dtype() == x.dtype(), "conv2d: weight dtype mismatch");
    return d;
}

// Pointwise stride-1 ungrouped convolution: out[n,co,:] starts at the bias and
// accumulates w[co,ci]*x[n,ci,:] in ascending ci, the same per-element sum
// order as the general path.
template <typename T>
void conv2d_pointwise(const T* x, const T* w, const T* bias, T* y, const ConvDims& d) {
    const int64_t hw = d.h * d.w;
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static) if (d.n * d.cout > 8)
#endif
    for (int64_t n = 0; n < d.n; ++n) {
        for (int64_t co = 0; co < d.cout; ++co) {
            T* out = y + (n * d.cout + co) * hw;
            const T b = bias ? bias[co] : T(0);
            for (int64_t i = 0; i < hw; ++i) out[i] = b;
            const T* wrow = w + co * d.cin;
            for (int64_t ci = 0; ci < d.cin; ++ci) {
                const T wv = wrow[ci];
                const T* in = x + (n * d.cin + ci) * hw;
                for (int64_t i = 0; i < hw; ++i) out[i] += wv * in[i];
            }
        }
    }
}

template <typename T>
void conv2d_general(const T* x, const T* w, const T* bias, T* y, const ConvDims& d) {
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static) if (d.n * d.cout > 8)
#endif
    for (int64_t n = 0; n < d.n; ++n) {
        for (int64_t co = 0; co < d.cout; ++co) {
            const int64_t g = co / d.cpg_out;
            T* out = y + (n * d.cout + co) * d.ho * d.wo;
            const T* wk = w + co * d.cpg_in * d.kh * d.kw;
            for (int64_t ho = 0; ho < d.ho; ++ho) {
                const int64_t h0 = ho * d.stride - d.pad;
                for (int64_t wo = 0; wo < d.wo; ++wo) {
                    const int64_t w0 = wo * d.stride - d.pad;
                    T acc = bias ? bias[co] : T(0);
                    for (int64_t ci = 0; ci < d.cpg_in; ++ci) {
                        const T* in = x + (n * d.cin + g * d.cpg_in + ci) * d.h * d.w;
                        const T* wc = wk + ci * d.kh * d.kw;
                        for (int64_t kh = 0; kh < d.kh; ++kh) {
                            const int64_t hi = h0 + kh;
                            if (hi < 0 || hi >= d.h) continue;
                            for (int64_t kw = 0; kw < d.kw; ++kw) {
                                const int64_t wi = w0 + kw;
                                if (wi < 0 || wi >= d.w) continue;
                                acc += wc[kh * d.kw + kw] * in[hi * d.w + wi];
                            }
                        }
                    }
                    out[ho * d.wo + wo] = acc;
                }
            }
        }
    }
}

} // namespace

Tensor conv2d(const Tensor& x, const ConvParams& p) {
    ConvDims d = conv_dims(x, p);
    Tensor out(x.dtype(), {d.n, d.cout, d.ho, d.wo});
    const bool pointwise =
        d.kh == 1 && d.kw == 1 && d.stride == 1 && d.pad == 0 && d.groups == 1;
    if (x.dtype() == Dtype::F32) {
        const float* bias = p.bias ? p.bias->data<float>().data() : nullptr;
        if (pointwise)
            conv2d_pointwise(x.data<float>().data(), p.weight.data<float>().data(), bias,
                             out.data<float>().data(), d);
        else
            conv2d_general(x.data<float>().data(), p.weight.data<float>().data(), bias,
                           out.data<float>().data(), d);
    } else {
        const double* bias = p.bias ? p.bias->data<double>().data() : nullptr;
        if (pointwise)
            conv2d_pointwise(x.data<double>().data(), p.weight.data<double>().data(), bias,
                             out.data<double>().data(), d);
        else
            conv2d_general(x.data<double>().data(), p.weight.data<double>().data(), bias,
                           out.data<double>().data(), d);
    }
    ensure_finite(out, "conv2d");
    return out;
}

// --- linear_tokens / dense --------------------------------------------------

namespace {

template <typename T>
void rowwise_matmul(const T* x, const T* w, const T* bias, T* y, int64_t rows, int64_t m,
                    int64_t k) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (rows > 4)
#endif
    for (int64_t r = 0; r < rows; ++r) {
        const T* in = x + r * m;
        T* out = y + r * k;
        if (bias)
            for (int64_t j = 0; j < k; ++j) out[j] = bias[j];
        else
            for (int64_t j = 0; j < k; ++j) out[j] = T(0);
        for (int64_t i = 0; i < m; ++i) {
            const T xv = in[i];
            const T* wrow = w + i * k;
            for (int64_t j = 0; j < k; ++j) out[j] += xv * wrow[j];
        }
    }
}

Tensor linear_tokens_impl(const Tensor& x, const Tensor& w, const Tensor* bias) {
    FLIVT_CHECK(x.rank() == 3, "linear_tokens: input must be (B,C,N)");
    FLIVT_CHECK(w.rank() == 2, "linear_tokens: weight must be rank 2");
    const int64_t m = x.dim(2), k = w.dim(1);
    FLIVT_CHECK(w.dim(0) == m,
                "linear_tokens: token dim " << m << " does not match weight rows " << w.dim(0));
    FLIVT_CHECK(w.dtype() == x.dtype(), "linear_tokens: weight dtype mismatch");
    if (bias) {
        FLIVT_CHECK(bias->rank() == 1 && bias->dim(0) == k, "linear_tokens: bias length mismatch");
        FLIVT_CHECK(bias->dtype() == x.dtype(), "linear_tokens: bias dtype mismatch");
    }
    Tensor out(x.dtype(), {x.dim(0), x.dim(1), k});
    const int64_t rows = x.dim(0) * x.dim(1);
    if (x.dtype() == Dtype::F32)
        rowwise_matmul(x.data<float>().data(), w.data<float>().data(),
                       bias ? bias->data<float>().data() : nullptr, out.data<float>().data(), rows,
                       m, k);
    else
        rowwise_matmul(x.data<double>().data(), w.data<double>().data(),
                       bias ? bias->data<double>().data() : nullptr, out.data<double>().data(),
                       rows, m, k);
    ensure_finite(out, "linear_tokens");
    return out;
}

} // namespace

Tensor linear_tokens(const Tensor& x, const Tensor& w, const Tensor& bias) {
    return linear_tokens_impl(x, w, &bias);
}

Tensor linear_tokens(const Tensor& x, const Tensor& w) { return linear_tokens_impl(x, w, nullptr); }

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias) {
    FLIVT_CHECK(x.rank() == 2, "dense: input must be (B,In)");
    Tensor t = linear_tokens_impl(reshaped(x, {x.dim(0), 1, x.dim(1)}), w, &bias);
    return reshaped(std::move(t), {x.dim(0), w.dim(1)});
}

// --- batchnorm / affine / layernorm ----------------------------------------

namespace {

template <typename T>
void bn_kernel(const T* x, T* y, int64_t outer, int64_t c, int64_t inner, const T* gamma,
               const T* beta, const T* mean, const T* var, T eps) {
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const T mu = mean[ch];
            const T sigma = std::sqrt(var[ch] + eps);
            const T g = gamma[ch], b = beta[ch];
            const T* in = x + (o * c + ch) * inner;
            T* out = y + (o * c + ch) * inner;
            for (int64_t i = 0; i < inner; ++i) out[i] = (in[i] - mu) / sigma * g + b;
        }
    }
}

// Channel axis = dim 1; everything after it is flattened into `inner`.
void channel_dims(const Tensor& x, int64_t& outer, int64_t& c, int64_t& inner) {
    FLIVT_CHECK(x.rank() >= 2, "expected channel axis at dim 1, got rank " << x.rank());
    outer = x.dim(0);
    c = x.dim(1);
    inner = 1;
    for (int i = 2; i < x.rank(); ++i) inner *= x.dim(i);
}

} // namespace

Tensor batchnorm_infer(const Tensor& x, const BNParams& p) {
    int64_t outer, c, inner;
    channel_dims(x, outer, c, inner);
    FLIVT_CHECK(p.channels() == c,
                "batchnorm: input has " << c << " channels, params have " << p.channels());
    FLIVT_CHECK(p.eps > 0, "batchnorm: eps must be > 0");
    for (int64_t i = 0; i < c; ++i)
        FLIVT_CHECK(p.var.at(i) >= 0, "batchnorm: running variance must be >= 0");
    Tensor out(x.dtype(), x.shape());
    if (x.dtype() == Dtype::F32)
        bn_kernel(x.data<float>().data(), out.data<float>().data(), outer, c, inner,
                  p.gamma.data<float>().data(), p.beta.data<float>().data(),
                  p.mean.data<float>().data(), p.var.data<float>().data(),
                  static_cast<float>(p.eps));
    else
        bn_kernel(x.data<double>().data(), out.data<double>().data(), outer, c, inner,
                  p.gamma.data<double>().data(), p.beta.data<double>().data(),
                  p.mean.data<double>().data(), p.var.data<double>().data(), p.eps);
    ensure_finite(out, "batchnorm_infer");
    return out;
}

Tensor gelu(const Tensor& x) {
    Tensor out(x.dtype(), x.shape());
    const int64_t n = x.numel();
    if (x.dtype() == Dtype::F32) {
        auto in = x.data<float>();
        auto o = out.data<float>();
        const float inv_sqrt2 = 0.70710678118654752440f;
        for (int64_t i = 0; i < n; ++i)
            o[i] = 0.5f * in[i] * (1.0f + std::erf(in[i] * inv_sqrt2));
    } else {
        auto in = x.data<double>();
        auto o = out.data<double>();
        const double inv_sqrt2 = 0.70710678118654752440;
        for (int64_t i = 0; i < n; ++i)
            o[i] = 0.5 * in[i] * (1.0 + std::erf(in[i] * inv_sqrt2));
    }
    ensure_finite(out, "gelu");
    return out;
}

Tensor affine(const Tensor& x, const AffineParams& p) {
    int64_t outer, c, inner;
    channel_dims(x, outer, c, inner);
    FLIVT_CHECK(p.channels() == c && p.beta.dim(0) == c,
                "affine: input has " << c << " channels, params have " << p.channels());
    Tensor out(x.dtype(), x.shape());
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t ch = 0; ch < c; ++ch) {
            const double a = p.alpha.at(ch), b = p.beta.at(ch);
            const int64_t base = (o * c + ch) * inner;
            if (x.dtype() == Dtype::F32) {
                auto in = x.data<float>();
                auto y = out.data<float>();
                const float af = static_cast<float>(a), bf = static_cast<float>(b);
                for (int64_t i = 0; i < inner; ++i) y[base + i] = af * in[base + i] + bf;
            } else {
                auto in = x.data<double>();
                auto y = out.data<double>();
                for (int64_t i = 0; i < inner; ++i) y[base + i] = a * in[base + i] + b;
            }
        }
    ensure_finite(out, "affine");
    return out;
}

namespace {

template <typename T>
void ln_kernel(const T* x, T* y, int64_t b, int64_t c, int64_t n, const T* gamma, const T* beta,
               T eps) {
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t t = 0; t < n; ++t) {
            T mean = T(0);
            for (int64_t ch = 0; ch < c; ++ch) mean += x[(bi * c + ch) * n + t];
            mean /= static_cast<T>(c);
            T var = T(0);
            for (int64_t ch = 0; ch < c; ++ch) {
                const T d = x[(bi * c + ch) * n + t] - mean;
                var += d * d;
            }
            var /= static_cast<T>(c);
            const T inv = T(1) / std::sqrt(var + eps);
            for (int64_t ch = 0; ch < c; ++ch) {
                const int64_t idx = (bi * c + ch) * n + t;
                y[idx] = (x[idx] - mean) * inv * gamma[ch] + beta[ch];
            }
        }
    }
}

} // namespace

Tensor layernorm_channels(const Tensor& x, const LayerNormParams& p) {
    FLIVT_CHECK(x.rank() == 3, "layernorm_channels: input must be (B,C,N)");
    FLIVT_CHECK(p.channels() == x.dim(1), "layernorm_channels: channel mismatch");
    Tensor out(x.dtype(), x.shape());
    if (x.dtype() == Dtype::F32)
        ln_kernel(x.data<float>().data(), out.data<float>().data(), x.dim(0), x.dim(1), x.dim(2),
                  p.gamma.data<float>().data(), p.beta.data<float>().data(),
                  static_cast<float>(p.eps));
    else
        ln_kernel(x.data<double>().data(), out.data<double>().data(), x.dim(0), x.dim(1), x.dim(2),
                  p.gamma.data<double>().data(), p.beta.data<double>().data(), p.eps);
    ensure_finite(out, "layernorm_channels");
    return out;
}

// --- chunk / concat ---------------------------------------------------------

int chunk_count(int64_t channels, int parts) {
    const int64_t size = (channels + parts - 1) / parts;
    return static_cast<int>((channels + size - 1) / size);
}

std::vector<Tensor> chunk_channels(const Tensor& x, int parts) {
    FLIVT_CHECK(x.rank() == 3, "chunk_channels: input must be (B,C,N)");
    FLIVT_CHECK(parts >= 1, "chunk_channels: parts must be >= 1");
    const int64_t b = x.dim(0), c = x.dim(1), n = x.dim(2);
    FLIVT_CHECK(parts <= c, "chunk_channels: parts=" << parts << " exceeds channels=" << c);
    const int64_t size = (c + parts - 1) / parts;
    std::vector<Tensor> out;
    for (int64_t c0 = 0; c0 < c; c0 += size) {
        const int64_t len = std::min(size, c - c0);
        Tensor part(x.dtype(), {b, len, n});
        for (int64_t bi = 0; bi < b; ++bi) {
            const int64_t src = (bi * c + c0) * n;
            const int64_t dst = bi * len * n;
            if (x.dtype() == Dtype::F32)
                std::copy_n(x.data<float>().data() + src, len * n, part.data<float>().data() + dst);
            else
                std::copy_n(x.data<double>().data() + src, len * n,
                            part.data<double>().data() + dst);
        }
        out.push_back(std::move(part));
    }
    return out;
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    FLIVT_CHECK(!parts.empty(), "concat_channels: no parts");
    const int64_t b = parts[0].dim(0), n = parts[0].dim(2);
    int64_t c = 0;
    for (const Tensor& p : parts) {
        FLIVT_CHECK(p.rank() == 3 && p.dim(0) == b && p.dim(2) == n && p.dtype() == parts[0].dtype(),
                    "concat_channels: incompatible part");
        c += p.dim(1);
    }
    Tensor out(parts[0].dtype(), {b, c, n});
    int64_t c0 = 0;
    for (const Tensor& p : parts) {
        const int64_t len = p.dim(1);
        for (int64_t bi = 0; bi < b; ++bi) {
            const int64_t dst = (bi * c + c0) * n;
            const int64_t src = bi * len * n;
            if (out.dtype() == Dtype::F32)
                std::copy_n(p.data<float>().data() + src, len * n, out.data<float>().data() + dst);
            else
                std::copy_n(p.data<double>().data() + src, len * n,
                            out.data<double>().data() + dst);
        }
        c0 += len;
    }
    return out;
}

Tensor global_dwconv(const Tensor& x, const ConvParams& p) {
    FLIVT_CHECK(x.rank() == 4, "global_dwconv: input must be NCHW");
    FLIVT_CHECK(p.kh() == x.dim(2) && p.kw() == x.dim(3),
                "global_dwconv: kernel " << p.kh() << "x" << p.kw()
                                         << " must match feature map " << x.dim(2) << "x"
                                         << x.dim(3));
    FLIVT_CHECK(p.padding == 0 && p.stride == 1, "global_dwconv: no padding or striding");
    FLIVT_CHECK(p.groups == x.dim(1) && p.cout() == x.dim(1), "global_dwconv: must be depthwise");
    return conv2d(x, p);
}

// --- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    FLIVT_CHECK(a.shape() == b.shape() && a.dtype() == b.dtype(), "add: shape/dtype mismatch");
    Tensor out(a.dtype(), a.shape());
    const int64_t n = a.numel();
    if (a.dtype() == Dtype::F32) {
        auto pa = a.data<float>(), pb = b.data<float>();
        auto po = out.data<float>();
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    } else {
        auto pa = a.data<double>(), pb = b.data<double>();
        auto po = out.data<double>();
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    }
    ensure_finite(out, "add");
    return out;
}

Tensor mul_channels(const Tensor& x, const Tensor& scale) {
    int64_t outer, c, inner;
    channel_dims(x, outer, c, inner);
    FLIVT_CHECK(scale.rank() == 1 && scale.dim(0) == c, "mul_channels: scale length mismatch");
    Tensor out(x.dtype(), x.shape());
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t base = (o * c + ch) * inner;
            if (x.dtype() == Dtype::F32) {
                const float s = scale.data<float>()[static_cast<size_t>(ch)];
                auto in = x.data<float>();
                auto y = out.data<float>();
                for (int64_t i = 0; i < inner; ++i) y[base + i] = s * in[base + i];
            } else {
                const double s = scale.data<double>()[static_cast<size_t>(ch)];
                auto in = x.data<double>();
                auto y = out.data<double>();
                for (int64_t i = 0; i < inner; ++i) y[base + i] = s * in[base + i];
            }
        }
    ensure_finite(out, "mul_channels");
    return out;
}

Tensor slice_batch(const Tensor& x, int64_t start, int64_t count) {
    FLIVT_CHECK(x.rank() >= 1 && start >= 0 && count >= 0 && start + count <= x.dim(0),
                "slice_batch: range out of bounds");
    std::vector<int64_t> shape = x.shape();
    shape[0] = count;
    Tensor out(x.dtype(), shape);
    const int64_t stride = x.numel() / std::max<int64_t>(x.dim(0), 1);
    if (x.dtype() == Dtype::F32)
        std::copy_n(x.data<float>().data() + start * stride, count * stride,
                    out.data<float>().data());
    else
        std::copy_n(x.data<double>().data() + start * stride, count * stride,
                    out.data<double>().data());
    return out;
}

Tensor concat_batch(const std::vector<Tensor>& parts) {
    FLIVT_CHECK(!parts.empty(), "concat_batch: no parts");
    std::vector<int64_t> shape = parts[0].shape();
    int64_t total = 0;
    for (const Tensor& p : parts) total += p.dim(0);
    shape[0] = total;
    Tensor out(parts[0].dtype(), shape);
    int64_t off = 0;
    for (const Tensor& p : parts) {
        FLIVT_CHECK(p.dtype() == parts[0].dtype(), "concat_batch: dtype mismatch");
        if (out.dtype() == Dtype::F32) {
            auto src = p.data<float>();
            std::copy_n(src.data(), src.size(), out.data<float>().data() + off);
        } else {
            auto src = p.data<double>();
            std::copy_n(src.data(), src.size(), out.data<double>().data() + off);
        }
        off += p.numel();
    }
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    FLIVT_CHECK(a.shape() == b.shape(), "max_abs_diff: shape mismatch");
    double m = 0;
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
    return m;
}

void fill_uniform(Tensor& t, double lo, double hi, uint64_t seed, std::string_view name) {
    Rng rng(seed ^ fnv1a64(name));
    const int64_t n = t.numel();
    if (t.dtype() == Dtype::F32) {
        auto d = t.data<float>();
        for (int64_t i = 0; i < n; ++i) d[i] = static_cast<float>(rng.uniform(lo, hi));
    } else {
        auto d = t.data<double>();
        for (int64_t i = 0; i < n; ++i) d[i] = rng.uniform(lo, hi);
    }
}

} // namespace flivt
