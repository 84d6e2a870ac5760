#ifndef FEEDERTK_SYNTH_HPP
#define FEEDERTK_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "feedertk/netmodel.hpp"
#include "feedertk/oracle.hpp"

namespace feedertk {

/// Generator settings for a synthetic radial feeder with a solved 24-hour
/// ground truth and the measurement files an AMI/DAS deployment would yield.
struct SynthConfig {
    int n_primary_buses = 40;
    int n_transformers = 12;
    int loads_per_transformer = 2;
    int n_primary_loads = 2;  // three-phase loads tapped off the primary

    double pv_fraction = 0.3;             // of loads
    double metered_fraction = 0.9;        // of loads
    double voltage_meter_fraction = 0.5;  // of metered loads
    double quarter_hour_fraction = 0.3;   // meters reporting 15-minute energy

    double load_peak_kw_min = 3.0;
    double load_peak_kw_max = 12.0;
    double pf_min = 0.88, pf_max = 0.98;  // true operating power factors

    std::string day_shape = "summer_peak";  // or "spring_max_gen"
    double noise_sigma_v_pu = 0.0;
    double noise_sigma_e_kwh = 0.0;
    uint64_t seed = 1;
};

struct SynthResult {
    NetworkModel model;
    PuNetwork net;
    std::vector<SnapshotInputs> truth_inputs;  // 24 entries, per-unit
    TimeSeriesResult truth;                    // solved ground-truth state
};

/// Builds the feeder, draws the daily profiles, and solves the ground truth.
/// If any hour fails to converge or voltages leave [0.8, 1.3] pu, load peaks
/// are scaled down and the profiles redrawn, at most five times.
SynthResult generate_feeder(const SynthConfig& cfg);

/// Writes topology.json, ami_energy.csv, ami_voltage.csv, das.csv, and
/// ground_truth.json into dir. Byte-identical for identical configs.
void write_synth_outputs(const SynthResult& res, const SynthConfig& cfg, const std::string& dir);

/// Ground-truth inputs back from ground_truth.json, in network order.
std::vector<SnapshotInputs> read_ground_truth(const PuNetwork& net, const std::string& path);

/// The hourly multipliers behind the two day shapes (exposed for tests).
std::vector<double> day_shape_load(const std::string& name);
std::vector<double> day_shape_pv(const std::string& name);

}  // namespace feedertk

#endif
