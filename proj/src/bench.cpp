#include "flivt/bench.hpp"
#include "flivt/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace flivt {

void set_num_threads(int n) {
    FLIVT_CHECK(n >= 1, "thread count must be >= 1");
#ifdef _OPENMP
    omp_set_num_threads(n);
#else
    (void)n;
#endif
}

int num_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

BenchResult run_bench(const ModelGraph& g, int runs, int warmup, int64_t batch,
                      const std::string& model_id) {
    FLIVT_CHECK(runs > 0, "bench: runs must be > 0");
    FLIVT_CHECK(warmup >= 0 && batch >= 1, "bench: bad warmup/batch");

    const int res = g.config.input_resolution();
    Tensor x(g.dtype, {batch, 3, res, res});
    fill_uniform(x, -1.0, 1.0, g.seed, "bench.input");

    BenchResult r;
    r.model_id = model_id;
    r.form = g.form;
    r.runs = runs;
    r.warmup = warmup;
    r.batch = batch;
    r.threads = num_threads();

    for (int i = 0; i < warmup; ++i) (void)forward(g, x);

    r.latencies_us.reserve(static_cast<size_t>(runs));
    for (int i = 0; i < runs; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        (void)forward(g, x);
        const auto t1 = std::chrono::steady_clock::now();
        r.latencies_us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    }

    double sum = 0;
    for (double v : r.latencies_us) sum += v;
    r.mean_us = sum / runs;
    double sq = 0;
    for (double v : r.latencies_us) sq += (v - r.mean_us) * (v - r.mean_us);
    r.stddev_us = runs > 1 ? std::sqrt(sq / (runs - 1)) : 0.0;

    std::vector<double> sorted = r.latencies_us;
    std::sort(sorted.begin(), sorted.end());
    r.median_us = runs % 2 ? sorted[static_cast<size_t>(runs / 2)]
                           : 0.5 * (sorted[static_cast<size_t>(runs / 2 - 1)] +
                                    sorted[static_cast<size_t>(runs / 2)]);
    return r;
}

} // namespace flivt
