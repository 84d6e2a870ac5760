#ifndef FEEDERTK_ESTIMATOR_HPP
#define FEEDERTK_ESTIMATOR_HPP

#include <memory>
#include <optional>
#include <vector>

#include "feedertk/ingest.hpp"
#include "feedertk/nlp.hpp"
#include "feedertk/oracle.hpp"

namespace feedertk {

struct EstimatorOptions {
    double tol_kkt = 1e-6;
    double tol_feas = 1e-6;
    int max_iter = 200;
    bool warm_start = true;  // chain hours serially from the previous solution
    int threads = 0;         // parallel hourly solves when warm_start is off

    double p_cap_kw = 15.0;             // per-phase cap for unmetered active power
    double default_unmetered_p_kw = 5.0;
    double init_pf = 0.9;               // reactive initialization power factor
    double band_head = 0.20;            // voltage band at unmeasured head phases
    double band_src = 0.25;             // source magnitude band around the head reading
    double band_angle_deg = 3.0;        // source angle band around nominal
    bool verbose = false;
};

/// One hour of measurements, already normalized to per-unit bus totals.
struct SnapshotMeasurements {
    std::vector<std::optional<double>> load_p_pu;  // per load; empty optional = unmetered
    std::vector<double> pv_p_pu;                   // per PV unit, production
    double head_p_pu = 0.0;                        // feeder total at the head end
    double head_q_pu = 0.0;
    double head_vmag_pu = 1.0;  // phase-a magnitude at the head

    struct VoltageReading {
        int bp = -1;
        double v_pu = 0.0;
    };
    std::vector<VoltageReading> volts;
};

struct SnapshotEstimate {
    iv::NetworkState state;
    Eigen::VectorXd load_p_bp, load_q_bp, pv_p_bp;  // per bus-phase, per-unit
    std::vector<std::vector<double>> load_p, load_q;  // per load, per phase
    SourceSpec source;
    iv::ElementPowers powers;
    double objective = 0.0;
    double kkt_error = 0.0;
    int iterations = 0;
    nlp::SolveStatus status = nlp::SolveStatus::IterationLimit;
};

/// Per-unit conversion of one hour of a MeasurementSet.
SnapshotMeasurements snapshot_measurements(const PuNetwork& net, const MeasurementSet& ms,
                                           int hour);

/// Variable layout of the hourly estimation program: rectangular voltages,
/// branch currents, polar source pairs, then per-phase load powers. Depends
/// only on the network, never on the hour.
class SnapshotIndexer {
public:
    explicit SnapshotIndexer(const PuNetwork& net);

    int num_vars() const { return n_; }
    int idx_vr(int bp) const { return bp; }
    int idx_vi(int bp) const { return n_bp_ + bp; }
    int idx_ir(int branch, int p) const { return cur_base_[branch] + p; }
    int idx_ii(int branch, int p) const { return cur_base_[branch] + cur_np_[branch] + p; }
    int idx_src_vmag(int sp) const { return src0_ + 2 * sp; }
    int idx_src_theta(int sp) const { return src0_ + 2 * sp + 1; }
    int idx_load_p(int load, int p) const { return load_base_[load] + 2 * p; }
    int idx_load_q(int load, int p) const { return load_base_[load] + 2 * p + 1; }

private:
    int n_ = 0, n_bp_ = 0, src0_ = 0;
    std::vector<int> cur_base_, cur_np_, load_base_;
};

/// The hourly estimation program. Variable and constraint layout depend only
/// on the network, so instances built for different hours of the same feeder
/// accept each other's warm starts.
std::unique_ptr<nlp::Problem> make_snapshot_problem(const PuNetwork& net,
                                                    const SnapshotMeasurements& meas,
                                                    const EstimatorOptions& opts);

/// Decodes a solution vector of make_snapshot_problem back into network terms.
SnapshotEstimate decode_snapshot(const PuNetwork& net, const SnapshotMeasurements& meas,
                                 const Eigen::VectorXd& x);

SnapshotEstimate estimate_snapshot(const PuNetwork& net, const SnapshotMeasurements& meas,
                                   const EstimatorOptions& opts = {},
                                   const nlp::WarmStart* warm = nullptr,
                                   nlp::WarmStart* warm_out = nullptr);

struct DayEstimate {
    std::vector<SnapshotEstimate> hours;
    std::vector<int> failed_hours;  // hours that stopped short of optimality
};

DayEstimate estimate_day(const PuNetwork& net, const MeasurementSet& ms,
                         const EstimatorOptions& opts = {});

/// profiles.csv rows: element_id,kind,hour,value_pu. Loads appear per phase
/// as "<load_id>:<phase>"; source magnitudes as src_vmag_a/b/c.
void write_profiles_csv(const PuNetwork& net, const DayEstimate& day, const std::string& path);

/// substation.csv rows: hour,phase,v_mag_pu,v_ang_deg,p_kw,q_kvar with the
/// head-end delivered power of the source segment.
void write_substation_csv(const PuNetwork& net, const DayEstimate& day, const std::string& path);

/// Reads profiles.csv (+ optional substation.csv for per-hour source angles)
/// back into oracle snapshot inputs.
std::vector<SnapshotInputs> read_profiles_csv(const PuNetwork& net, const std::string& path,
                                              const std::string& substation_path = "");

}  // namespace feedertk

#endif
