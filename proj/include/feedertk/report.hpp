#ifndef FEEDERTK_REPORT_HPP
#define FEEDERTK_REPORT_HPP

#include <string>
#include <utility>
#include <vector>

#include "feedertk/estimator.hpp"
#include "feedertk/ivkernel.hpp"
#include "feedertk/netmodel.hpp"
#include "feedertk/oracle.hpp"

namespace feedertk {

/// One day of network operation in a solver-agnostic form, so the estimator
/// output, an oracle resimulation, and the synthetic ground truth can all be
/// compared pairwise.
struct DaySolution {
    std::vector<SnapshotInputs> inputs;     // 24, per-unit injections
    std::vector<iv::NetworkState> states;   // 24
    std::vector<iv::ElementPowers> powers;  // 24
};

DaySolution day_solution(const PuNetwork& net, const std::vector<SnapshotInputs>& inputs,
                         const TimeSeriesResult& res);
DaySolution day_solution(const PuNetwork& net, const DayEstimate& day);

/// Daily RMS of the relative deviation, in percent:
/// sqrt(mean(((m - y) / y)^2)) * 100. When any reference value is ~0 the
/// relative form is meaningless; the result falls back to the absolute RMS
/// (same units as the series) and the flag is set.
std::pair<double, bool> rms_daily(const std::vector<double>& m, const std::vector<double>& y);

struct RmsEntry {
    int bus_phase = -1;
    double rms = 0.0;  // percent, or absolute per-unit when the flag is set
    bool absolute = false;
};

struct CategoryRow {
    std::string category;
    double p_kwh = 0, p_ref_kwh = 0, q_kvarh = 0, q_ref_kvarh = 0;  // daily energy
    double p_err = 0, q_err = 0;  // percent of the reference, or absolute when flagged
    bool p_abs = false, q_abs = false;
};

struct HourRow {
    int hour = 0;
    double gross_kw = 0;  // total consumption
    double net_kw = 0;    // consumption minus PV production
    double head_p_kw = 0, head_q_kvar = 0;
};

struct LoadPfRow {
    std::string id;
    double p_kwh = 0, q_kvarh = 0;
    double pf = 1.0;  // daily-energy power factor
};

struct MatchReport {
    std::vector<RmsEntry> v_rms;  // per bus-phase, first solution vs reference
    double v_rms_mean_pct = 0, v_rms_max_pct = 0;
    std::vector<CategoryRow> categories;
    std::vector<HourRow> hours;      // from the first (estimated) solution
    std::vector<LoadPfRow> load_pf;  // from the first solution
    std::vector<double> distance;    // per bus: electrical distance from the head
};

/// Cumulative series-impedance magnitude (mean of the self terms, per-unit)
/// along the shortest path from the feeder head. A voltage-level-independent
/// stand-in for conductor distance.
std::vector<double> electrical_distance(const PuNetwork& net);

MatchReport build_match_report(const PuNetwork& net, const DaySolution& est,
                               const DaySolution& ref);

/// Writes report.json, category_table.csv, v_rms.csv, feeder_characteristics.csv,
/// and summary.txt into dir. Characteristics (voltage profile) come from est.
void write_report_files(const PuNetwork& net, const MatchReport& rep, const DaySolution& est,
                        const std::string& dir);

std::string format_summary(const PuNetwork& net, const MatchReport& rep);

}  // namespace feedertk

#endif
