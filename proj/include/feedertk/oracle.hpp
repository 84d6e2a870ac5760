#ifndef FEEDERTK_ORACLE_HPP
#define FEEDERTK_ORACLE_HPP

#include <optional>
#include <string>
#include <vector>

#include "feedertk/ivkernel.hpp"
#include "feedertk/netmodel.hpp"

namespace feedertk {

class SolverError : public std::runtime_error {
public:
    explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Three independent single-phase sources held fixed behind the source
/// impedance, one magnitude/angle pair per substation phase.
struct SourceSpec {
    std::vector<double> v_mag_pu;    // per substation phase, in phase order
    std::vector<double> angle_deg;

    /// 1 pu at the nominal 0/-120/+120 degree angles.
    static SourceSpec balanced(const PuNetwork& net, double v_mag = 1.0);
};

/// Fixed per bus-phase injections for one snapshot (per-unit, positive =
/// consumption for loads, production for PV).
struct SnapshotInputs {
    Eigen::VectorXd load_p;  // per bus-phase
    Eigen::VectorXd load_q;
    Eigen::VectorXd pv_p;
    SourceSpec source;

    static SnapshotInputs zero(const PuNetwork& net);
};

struct PowerFlowOptions {
    double tol = 1e-8;      // infinity norm of the full residual vector
    int max_iter = 50;
    double v_damp_floor = 0.4;  // |V| below this triggers step halving
    int max_halvings = 10;
    int threads = 0;  // 0 = library default; applies to time-series solves
};

struct PowerFlowSolution {
    iv::NetworkState state;
    Eigen::VectorXd inj_r, inj_i;  // derived bus-phase injection currents
    iv::ElementPowers powers;
    bool converged = false;
    int iterations = 0;
    double max_residual = 0.0;
    std::string message;
};

/// Newton-Raphson on the full rectangular IV system (voltages, branch
/// currents, and injections as unknowns) from flat start. Loads are constant
/// PQ, PVs constant P at unity power factor, capacitors constant capacitance.
PowerFlowSolution solve_snapshot(const PuNetwork& net, const SnapshotInputs& in,
                                 const PowerFlowOptions& opts = {});

struct TimeSeriesResult {
    std::vector<PowerFlowSolution> hours;
    std::vector<int> failed_hours;
};

/// 24 independent snapshot solves, OpenMP-parallel over hours.
TimeSeriesResult solve_timeseries(const PuNetwork& net, const std::vector<SnapshotInputs>& hours,
                                  const PowerFlowOptions& opts = {});
/// Serial reference implementation, kept for testing and benchmarking.
TimeSeriesResult solve_timeseries_serial(const PuNetwork& net,
                                         const std::vector<SnapshotInputs>& hours,
                                         const PowerFlowOptions& opts = {});

/// Monitor row at the feeder head and every load bus, per hour and phase.
struct MonitorRecord {
    int hour;
    std::string bus;
    Phase phase;
    double v_mag_pu, v_ang_deg;
    double p_kw, q_kvar;
};

std::vector<MonitorRecord> collect_monitors(const PuNetwork& net,
                                            const std::vector<SnapshotInputs>& hours,
                                            const TimeSeriesResult& res);

}  // namespace feedertk

#endif
