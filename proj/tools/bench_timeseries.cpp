// Times the OpenMP-parallel kernels against their serial reference
// implementations: the batch branch-residual evaluation and the 24-hour
// time-series power flow.
#include <chrono>
#include <cstdio>
#include <string>

#include "feedertk/ivkernel.hpp"
#include "feedertk/oracle.hpp"
#include "feedertk/synth.hpp"

using namespace feedertk;
using Clock = std::chrono::steady_clock;

static double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

int main(int argc, char** argv) {
    SynthConfig cfg;
    cfg.n_primary_buses = argc > 1 ? std::stoi(argv[1]) : 271;
    cfg.n_transformers = argc > 2 ? std::stoi(argv[2]) : 75;
    cfg.loads_per_transformer = 2;
    cfg.seed = 42;
    std::printf("generating feeder (%d primary buses, %d transformers)...\n", cfg.n_primary_buses,
                cfg.n_transformers);
    SynthResult res = generate_feeder(cfg);
    const PuNetwork& net = res.net;
    std::printf("feeder: %d buses, %zu branches, %zu loads\n\n", net.n_bus, net.branches.size(),
                net.loads.size());

    // batch branch residuals, many repetitions over the hour-18 state
    const iv::NetworkState& st = res.truth.hours[18].state;
    Eigen::VectorXd out(iv::branch_residual_size(net));
    const int reps = 2000;
    auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) iv::all_branch_flow_residuals_serial(net, st, out);
    double serial_ms = ms_since(t0);
    t0 = Clock::now();
    for (int i = 0; i < reps; ++i) iv::all_branch_flow_residuals(net, st, out);
    double parallel_ms = ms_since(t0);
    std::printf("branch residuals x%d:  serial %8.1f ms   parallel %8.1f ms   speedup %.2fx\n",
                reps, serial_ms, parallel_ms, serial_ms / parallel_ms);

    // full 24-hour time series
    const int days = 5;
    t0 = Clock::now();
    for (int i = 0; i < days; ++i) solve_timeseries_serial(net, res.truth_inputs);
    serial_ms = ms_since(t0);
    t0 = Clock::now();
    for (int i = 0; i < days; ++i) solve_timeseries(net, res.truth_inputs);
    parallel_ms = ms_since(t0);
    std::printf("24h power flow x%d:    serial %8.1f ms   parallel %8.1f ms   speedup %.2fx\n",
                days, serial_ms, parallel_ms, serial_ms / parallel_ms);
    return 0;
}
