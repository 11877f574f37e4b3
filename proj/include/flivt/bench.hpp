#pragma once

#include "flivt/model.hpp"

namespace flivt {

struct BenchResult {
    std::string model_id;
    Form form = Form::Train;
    int runs = 0;
    int warmup = 0;
    int64_t batch = 1;
    int threads = 1;
    std::vector<double> latencies_us; // one entry per post-warmup run
    double mean_us = 0;
    double stddev_us = 0;
    double median_us = 0;
};

// Timed forward loop over a deterministic seeded input: `warmup` unrecorded
// runs, then `runs` recorded ones. Statistics cover recorded runs only.
BenchResult run_bench(const ModelGraph& g, int runs, int warmup, int64_t batch,
                      const std::string& model_id);

// Kernel-level parallelism (no-op without OpenMP). The CLI pins this to 1
// unless asked otherwise; timing loops stay single-threaded for stability.
void set_num_threads(int n);
int num_threads();

} // namespace flivt
