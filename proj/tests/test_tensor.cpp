#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flivt/tensor.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace flivt;

namespace {

Tensor f32v(std::vector<int64_t> shape, std::vector<float> v) {
    return Tensor::from_data(std::move(shape), std::move(v));
}

Tensor f64v(std::vector<int64_t> shape, std::vector<double> v) {
    return Tensor::from_data(std::move(shape), std::move(v));
}

} // namespace

TEST_CASE("conv2d scalar multiply-add") {
    ConvParams p;
    p.weight = f32v({1, 1, 1, 1}, {3.0f});
    p.bias = f32v({1}, {1.0f});
    Tensor y = conv2d(f32v({1, 1, 1, 1}, {2.0f}), p);
    CHECK(y.data<float>()[0] == doctest::Approx(7.0f));
}

TEST_CASE("conv2d all-ones 3x3 sums to 9") {
    ConvParams p;
    p.weight = Tensor::full(Dtype::F32, {1, 1, 3, 3}, 1.0);
    Tensor y = conv2d(Tensor::full(Dtype::F32, {1, 1, 3, 3}, 1.0), p);
    CHECK(y.shape() == std::vector<int64_t>{1, 1, 1, 1});
    CHECK(y.data<float>()[0] == doctest::Approx(9.0f));
}

TEST_CASE("conv2d depthwise matches naive loop oracle") {
    Rng rng(7);
    Tensor x = oracle::rand_tensor(Dtype::F32, {1, 4, 5, 5}, rng);
    ConvParams p = oracle::rand_conv(Dtype::F32, 4, 4, 3, 1, 1, 4, true, rng);
    Tensor got = conv2d(x, p);
    Tensor want = oracle::conv2d(x, p);
    CHECK(max_abs_diff(got, want) == 0.0);
}

TEST_CASE("conv2d identity 1x1 depthwise kernel is the identity map") {
    Rng rng(11);
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        Rng r(seed);
        Tensor x = oracle::rand_tensor(Dtype::F32, {2, 3, 4, 5}, r);
        ConvParams p;
        p.weight = Tensor::full(Dtype::F32, {3, 1, 1, 1}, 1.0);
        p.groups = 3;
        CHECK(conv2d(x, p).bitwise_equal(x));
    }
    (void)rng;
}

TEST_CASE("conv2d equals naive reference over the shape sweep") {
    // All shapes up to 2x8x9x9 crossed with kernel/stride/pad/group choices;
    // exact equality for f64, 1e-6 relative for f32.
    for (Dtype dt : {Dtype::F64, Dtype::F32}) {
        Rng rng(dt == Dtype::F64 ? 100 : 200);
        for (int64_t n : {1, 2})
            for (int64_t c : {1, 3, 4, 8})
                for (int64_t h : {1, 4, 9})
                    for (int64_t w : {2, 5, 9})
                        for (int64_t k : {1, 3})
                            for (int stride : {1, 2})
                                for (int pad : {0, 1}) {
                                    if (h + 2 * pad < k || w + 2 * pad < k) continue;
                                    for (int groups : {1, static_cast<int>(c)}) {
                                        const int64_t cout = groups == 1 ? c + 1 : c;
                                        Tensor x = oracle::rand_tensor(dt, {n, c, h, w}, rng);
                                        ConvParams p = oracle::rand_conv(
                                            dt, c, cout, k, stride, pad, groups, true, rng);
                                        Tensor got = conv2d(x, p);
                                        Tensor want = oracle::conv2d(x, p);
                                        if (dt == Dtype::F64) {
                                            REQUIRE(got.bitwise_equal(want));
                                        } else {
                                            for (int64_t i = 0; i < got.numel(); ++i) {
                                                const double rel =
                                                    std::abs(got.at(i) - want.at(i)) /
                                                    std::max(1.0, std::abs(want.at(i)));
                                                REQUIRE(rel <= 1e-6);
                                            }
                                        }
                                    }
                                }
    }
}

TEST_CASE("conv2d rejects bad shapes and non-finite results") {
    ConvParams p;
    p.weight = Tensor::full(Dtype::F32, {4, 2, 1, 1}, 1.0);
    CHECK_THROWS_AS(conv2d(Tensor(Dtype::F32, {1, 3, 2, 2}), p), std::invalid_argument);

    p.groups = 3; // does not divide Cout=4
    CHECK_THROWS_AS(conv2d(Tensor(Dtype::F32, {1, 6, 2, 2}), p), std::invalid_argument);

    ConvParams huge;
    huge.weight = Tensor::full(Dtype::F32, {1, 1, 1, 1}, 3e38);
    CHECK_THROWS_AS(conv2d(Tensor::full(Dtype::F32, {1, 1, 1, 1}, 3e38), huge),
                    std::runtime_error);
}

TEST_CASE("linear_tokens identity and permutation") {
    Tensor x = f32v({1, 1, 2}, {1.0f, 2.0f});
    Tensor eye = f32v({2, 2}, {1, 0, 0, 1});
    Tensor zero_b = Tensor(Dtype::F32, {2});
    CHECK(linear_tokens(x, eye, zero_b).bitwise_equal(x));

    Tensor swap = f32v({2, 2}, {0, 1, 1, 0});
    Tensor y = linear_tokens(x, swap, zero_b);
    CHECK(y.data<float>()[0] == doctest::Approx(2.0f));
    CHECK(y.data<float>()[1] == doctest::Approx(1.0f));
}

TEST_CASE("linear_tokens matches triple-loop matmul oracle") {
    Rng rng(21);
    Tensor x = oracle::rand_tensor(Dtype::F32, {1, 3, 16}, rng);
    Tensor w = oracle::rand_tensor(Dtype::F32, {16, 16}, rng);
    Tensor b = oracle::rand_tensor(Dtype::F32, {16}, rng);
    CHECK(linear_tokens(x, w, b).bitwise_equal(oracle::linear_tokens(x, w, &b)));

    // rectangular maps are used by the two-layer v1 heads
    Tensor wr = oracle::rand_tensor(Dtype::F64, {16, 5}, rng);
    Tensor xd = oracle::rand_tensor(Dtype::F64, {2, 4, 16}, rng);
    CHECK(linear_tokens(xd, wr).bitwise_equal(oracle::linear_tokens(xd, wr)));

    Tensor bad = oracle::rand_tensor(Dtype::F32, {5, 16}, rng);
    CHECK_THROWS_AS(linear_tokens(x, bad), std::invalid_argument);
}

TEST_CASE("batchnorm_infer centered input returns beta") {
    BNParams p;
    p.gamma = f64v({2}, {1.5, 0.5});
    p.beta = f64v({2}, {-1.0, 2.0});
    p.mean = f64v({2}, {0.25, -0.75});
    p.var = f64v({2}, {1.0, 4.0});
    Tensor x(Dtype::F64, {1, 2, 2, 2});
    for (int64_t c = 0; c < 2; ++c)
        for (int64_t i = 0; i < 4; ++i) x.set(c * 4 + i, p.mean.at(c));
    Tensor y = batchnorm_infer(x, p);
    for (int64_t c = 0; c < 2; ++c)
        for (int64_t i = 0; i < 4; ++i) CHECK(y.at(c * 4 + i) == doctest::Approx(p.beta.at(c)));
}

TEST_CASE("batchnorm_infer inverse parameters give identity") {
    Rng rng(33);
    BNParams p = oracle::rand_bn(Dtype::F64, 3, rng);
    for (int64_t c = 0; c < 3; ++c) {
        p.gamma.set(c, std::sqrt(p.var.at(c) + p.eps));
        p.beta.set(c, p.mean.at(c));
    }
    Tensor x = oracle::rand_tensor(Dtype::F64, {2, 3, 3, 3}, rng);
    CHECK(max_abs_diff(batchnorm_infer(x, p), x) < 1e-12);
}

TEST_CASE("batchnorm_infer matches the scalar formula per element") {
    Rng rng(34);
    BNParams p = oracle::rand_bn(Dtype::F64, 4, rng);
    Tensor x = oracle::rand_tensor(Dtype::F64, {2, 4, 3, 5}, rng);
    Tensor y = batchnorm_infer(x, p);
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t c = 0; c < 4; ++c)
            for (int64_t i = 0; i < 15; ++i) {
                const int64_t idx = (n * 4 + c) * 15 + i;
                CHECK(y.at(idx) == oracle::bn_oracle(x.at(idx), p.gamma.at(c), p.beta.at(c),
                                                     p.mean.at(c), p.var.at(c), p.eps));
            }
    BNParams wrong = oracle::rand_bn(Dtype::F64, 5, rng);
    CHECK_THROWS_AS(batchnorm_infer(x, wrong), std::invalid_argument);
}

TEST_CASE("gelu exact values") {
    Tensor x = f64v({3}, {0.0, 10.0, 1.0});
    // channel_dims wants rank >= 2
    Tensor y = gelu(reshaped(x, {1, 3}));
    CHECK(y.at(0) == 0.0);
    CHECK(y.at(1) == doctest::Approx(10.0).epsilon(1e-7));
    CHECK(std::abs(y.at(2) - 0.8413447460685429) < 1e-6);
}

TEST_CASE("gelu matches the erf closed form on a dense grid") {
    std::vector<double> grid;
    for (double x = -8.0; x <= 8.0 + 1e-9; x += 1e-3) grid.push_back(x);
    Tensor t = Tensor::from_data({static_cast<int64_t>(grid.size())}, grid);
    Tensor y = gelu(t);
    double worst = 0.0;
    for (size_t i = 0; i < grid.size(); ++i)
        worst = std::max(worst, std::abs(y.at(static_cast<int64_t>(i)) -
                                         oracle::gelu_oracle(grid[i])));
    CHECK(worst <= 1e-12);
}

TEST_CASE("affine identity, constant and random oracle") {
    Rng rng(55);
    Tensor x = oracle::rand_tensor(Dtype::F32, {2, 3, 6}, rng);

    AffineParams id{Tensor::full(Dtype::F32, {3}, 1.0), Tensor::full(Dtype::F32, {3}, 0.0)};
    CHECK(affine(x, id).bitwise_equal(x));

    AffineParams constant{Tensor::full(Dtype::F32, {3}, 0.0), Tensor::full(Dtype::F32, {3}, 4.25)};
    Tensor y = affine(x, constant);
    for (int64_t i = 0; i < y.numel(); ++i) CHECK(y.at(i) == 4.25);

    AffineParams p{oracle::rand_tensor(Dtype::F32, {3}, rng), oracle::rand_tensor(Dtype::F32, {3}, rng)};
    Tensor got = affine(x, p);
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t i = 0; i < 6; ++i) {
                const int64_t idx = (b * 3 + c) * 6 + i;
                const float want = static_cast<float>(p.alpha.at(c)) *
                                       static_cast<float>(x.at(idx)) +
                                   static_cast<float>(p.beta.at(c));
                CHECK(static_cast<float>(got.at(idx)) == want);
            }
}

TEST_CASE("chunk_channels splitting rules") {
    Tensor x8(Dtype::F32, {1, 8, 2});
    auto even = chunk_channels(x8, 4);
    REQUIRE(even.size() == 4);
    for (const Tensor& t : even) CHECK(t.dim(1) == 2);

    Tensor x192(Dtype::F32, {1, 192, 2});
    auto uneven = chunk_channels(x192, 5);
    REQUIRE(uneven.size() == 5);
    std::vector<int64_t> sizes;
    for (const Tensor& t : uneven) sizes.push_back(t.dim(1));
    CHECK(sizes == std::vector<int64_t>{39, 39, 39, 39, 36});

    CHECK_THROWS_AS(chunk_channels(Tensor(Dtype::F32, {1, 3, 2}), 4), std::invalid_argument);
}

TEST_CASE("chunk/concat round-trips bitwise") {
    Rng rng(66);
    Tensor x = oracle::rand_tensor(Dtype::F64, {2, 12, 7}, rng);
    for (int k = 1; k <= 6; ++k) CHECK(concat_channels(chunk_channels(x, k)).bitwise_equal(x));
}

TEST_CASE("global_dwconv uniform kernel is average pooling") {
    Rng rng(77);
    Tensor x = oracle::rand_tensor(Dtype::F64, {1, 3, 4, 4}, rng);
    ConvParams p;
    p.weight = Tensor::full(Dtype::F64, {3, 1, 4, 4}, 1.0 / 16.0);
    p.groups = 3;
    Tensor y = global_dwconv(x, p);
    CHECK(y.shape() == std::vector<int64_t>{1, 3, 1, 1});
    for (int64_t c = 0; c < 3; ++c) {
        double mean = 0;
        for (int64_t i = 0; i < 16; ++i) mean += x.at(c * 16 + i) / 16.0;
        CHECK(y.at(c) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("global_dwconv one-hot kernel selects a position") {
    Rng rng(78);
    Tensor x = oracle::rand_tensor(Dtype::F32, {2, 3, 4, 4}, rng);
    ConvParams p;
    p.weight = Tensor(Dtype::F32, {3, 1, 4, 4});
    for (int64_t c = 0; c < 3; ++c) p.weight.set(c * 16, 1.0); // tap (0,0)
    p.groups = 3;
    Tensor y = global_dwconv(x, p);
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t c = 0; c < 3; ++c) CHECK(y.at(n * 3 + c) == x.at((n * 3 + c) * 16));
}

TEST_CASE("global_dwconv random case matches loop oracle, size mismatch throws") {
    Rng rng(79);
    Tensor x = oracle::rand_tensor(Dtype::F32, {1, 4, 4, 4}, rng);
    ConvParams p = oracle::rand_conv(Dtype::F32, 4, 4, 4, 1, 0, 4, true, rng);
    CHECK(global_dwconv(x, p).bitwise_equal(oracle::conv2d(x, p)));

    Tensor wrong = oracle::rand_tensor(Dtype::F32, {1, 4, 5, 5}, rng);
    CHECK_THROWS_AS(global_dwconv(wrong, p), std::invalid_argument);
}

TEST_CASE("dense projection") {
    Tensor x = f32v({1, 3}, {1, 2, 3});
    Tensor w = f32v({3, 2}, {1, 0, 0, 1, 1, 1});
    Tensor b = f32v({2}, {0.5f, -0.5f});
    Tensor y = dense(x, w, b);
    CHECK(y.shape() == std::vector<int64_t>{1, 2});
    CHECK(y.at(0) == doctest::Approx(4.5));  // 1 + 3 + 0.5
    CHECK(y.at(1) == doctest::Approx(4.5));  // 2 + 3 - 0.5
}

TEST_CASE("operations are deterministic") {
    Rng rng(88);
    Tensor x = oracle::rand_tensor(Dtype::F32, {1, 4, 6, 6}, rng);
    ConvParams p = oracle::rand_conv(Dtype::F32, 4, 8, 3, 1, 1, 1, true, rng);
    CHECK(conv2d(x, p).bitwise_equal(conv2d(x, p)));
    CHECK(gelu(x).bitwise_equal(gelu(x)));
}

TEST_CASE("batch helpers slice and rejoin") {
    Rng rng(99);
    Tensor x = oracle::rand_tensor(Dtype::F32, {4, 2, 3, 3}, rng);
    Tensor joined =
        concat_batch({slice_batch(x, 0, 1), slice_batch(x, 1, 2), slice_batch(x, 3, 1)});
    CHECK(joined.bitwise_equal(x));
}
