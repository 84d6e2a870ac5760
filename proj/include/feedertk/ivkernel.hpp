#ifndef FEEDERTK_IVKERNEL_HPP
#define FEEDERTK_IVKERNEL_HPP

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "feedertk/netmodel.hpp"

namespace feedertk::iv {

/// Rectangular network state, indexed by the PuNetwork bus-phase / branch
/// ordering. Branch currents are the sending-end variables of the line-flow
/// equations: the full current entering the branch at the from bus for a
/// line, the to-side series current for a transformer.
struct NetworkState {
    Eigen::VectorXd vr, vi;            // per bus-phase
    std::vector<Eigen::VectorXd> ibr;  // per branch: real parts, branch phases
    std::vector<Eigen::VectorXd> ibi;  // per branch: imaginary parts

    static NetworkState zero(const PuNetwork& net);
};

/// Line-flow residual of one branch: Z*(I - j*(Bsh/2)*Vf) - Vf/tap + Vt,
/// stacked [real; imag], one row pair per branch phase. Zero at any state
/// satisfying the branch voltage-drop equations.
void branch_flow_residual(const PuBranch& b, const Eigen::VectorXd& vfr,
                          const Eigen::VectorXd& vfi, const Eigen::VectorXd& vtr,
                          const Eigen::VectorXd& vti, const Eigen::VectorXd& ir,
                          const Eigen::VectorXd& ii, Eigen::VectorXd& out_r,
                          Eigen::VectorXd& out_i);

/// Current entering the branch at the from bus (per branch phase).
void from_end_current(const PuBranch& b, const Eigen::VectorXd& ir, const Eigen::VectorXd& ii,
                      Eigen::VectorXd& out_r, Eigen::VectorXd& out_i);

/// Current delivered into the to bus: I - j*(Bsh/2)*(Vf + Vt) for a line,
/// the series current itself for a transformer.
void to_end_delivered(const PuBranch& b, const Eigen::VectorXd& vfr, const Eigen::VectorXd& vfi,
                      const Eigen::VectorXd& vtr, const Eigen::VectorXd& vti,
                      const Eigen::VectorXd& ir, const Eigen::VectorXd& ii, Eigen::VectorXd& out_r,
                      Eigen::VectorXd& out_i);

/// Sum of branch-end currents out of each bus-phase (the right-hand side of
/// the current-injection constraints).
void accumulate_injections(const PuNetwork& net, const NetworkState& st, Eigen::VectorXd& inj_r,
                           Eigen::VectorXd& inj_i);

/// I_inj - sum of incident branch-end currents, per bus-phase.
void injection_residual(const PuNetwork& net, const NetworkState& st, const Eigen::VectorXd& inj_r,
                        const Eigen::VectorXd& inj_i, Eigen::VectorXd& out_r,
                        Eigen::VectorXd& out_i);

/// P = Vr*Ir + Vi*Ii, Q = Vi*Ir - Vr*Ii (power of V against conjugated I).
inline double p_of(double vr, double vi, double ir, double ii) { return vr * ir + vi * ii; }
inline double q_of(double vr, double vi, double ir, double ii) { return vi * ir - vr * ii; }

/// Constant-capacitance reactive output: Q = B * (vr^2 + vi^2) per phase.
std::vector<double> capacitor_q(const PuCapacitor& cap, const Eigen::VectorXd& vr,
                                const Eigen::VectorXd& vi);

/// Fixed power injections bound to one snapshot (per-unit, per bus-phase).
struct InjectionTerms {
    Eigen::VectorXd p;  // signed: production positive, consumption negative
    Eigen::VectorXd q;

    static InjectionTerms zero(const PuNetwork& net);
};

/// Power-balance residual per bus-phase: terms.p - P(V, I_inj) and
/// terms.q + Q_cap(V) - Q(V, I_inj). Capacitors are folded in from the
/// network's nominal susceptances.
void power_balance_residual(const PuNetwork& net, const InjectionTerms& terms,
                            const Eigen::VectorXd& vr, const Eigen::VectorXd& vi,
                            const Eigen::VectorXd& inj_r, const Eigen::VectorXd& inj_i,
                            bool include_capacitors, Eigen::VectorXd& out_p,
                            Eigen::VectorXd& out_q);

enum class Category { Source = 0, Lines, Capacitors, Loads, Transformers, Pvs };
constexpr int kNumCategories = 6;
const char* category_name(Category c);

/// Per-element powers and signed category sums (per-unit). Convention
/// matches element-wise reconciliation tables: consumption positive, so the
/// source and PV rows come out negative. The source row is the power
/// delivered at the feeder-head end of the source-impedance segment; that
/// segment is excluded from the lines row.
struct ElementPowers {
    struct Entry {
        std::string id;
        double p = 0, q = 0;
    };
    std::vector<Entry> branches;    // loss per line/transformer (source excluded)
    std::vector<Entry> capacitors;  // production, reported as negative q
    Entry source;                   // negative of delivered head-end power
    double category_p[kNumCategories] = {};
    double category_q[kNumCategories] = {};
};

/// Loads and PVs are voltage-independent injections; their category sums are
/// taken from the supplied per bus-phase terms.
ElementPowers element_powers(const PuNetwork& net, const NetworkState& st,
                             const Eigen::VectorXd& load_p_bp, const Eigen::VectorXd& load_q_bp,
                             const Eigen::VectorXd& pv_p_bp);

// Batch residual evaluation over all branches, OpenMP-parallel with a serial
// reference kept for testing. Output is stacked per branch in network order,
// [real rows; imag rows] per branch.
void all_branch_flow_residuals(const PuNetwork& net, const NetworkState& st, Eigen::VectorXd& out);
void all_branch_flow_residuals_serial(const PuNetwork& net, const NetworkState& st,
                                      Eigen::VectorXd& out);
int branch_residual_size(const PuNetwork& net);

}  // namespace feedertk::iv

#endif
