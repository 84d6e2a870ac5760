#include "feedertk/oracle.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace feedertk {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double nominal_angle_deg(Phase p) {
    switch (p) {
        case Phase::A: return 0.0;
        case Phase::B: return -120.0;
        case Phase::C: return 120.0;
    }
    return 0.0;
}

}  // namespace

SourceSpec SourceSpec::balanced(const PuNetwork& net, double v_mag) {
    SourceSpec s;
    for (Phase p : net.bus_phases[net.substation].list()) {
        s.v_mag_pu.push_back(v_mag);
        s.angle_deg.push_back(nominal_angle_deg(p));
    }
    return s;
}

SnapshotInputs SnapshotInputs::zero(const PuNetwork& net) {
    SnapshotInputs in;
    in.load_p = Eigen::VectorXd::Zero(net.n_bus_phase);
    in.load_q = Eigen::VectorXd::Zero(net.n_bus_phase);
    in.pv_p = Eigen::VectorXd::Zero(net.n_bus_phase);
    in.source = SourceSpec::balanced(net);
    return in;
}

namespace {

/// Column layout of the Newton unknowns: substation voltages are fixed, so
/// every other bus-phase carries (vr, vi) and (inj_r, inj_i); every branch
/// phase carries (ir, ii).
struct Layout {
    std::vector<int> vcol;    // per bus-phase, column of vr (-1 if fixed); vi = vcol+1
    std::vector<int> injcol;  // per bus-phase, column of inj_r (-1 at substation)
    std::vector<int> bcol;    // per branch, column of first (ir); layout ir[k], ii[k] pairs
    int n = 0;

    Layout(const PuNetwork& net) {
        vcol.assign(net.n_bus_phase, -1);
        injcol.assign(net.n_bus_phase, -1);
        for (int bp = 0; bp < net.n_bus_phase; ++bp) {
            if (net.bp_bus[bp] == net.substation) continue;
            vcol[bp] = n;
            n += 2;
        }
        bcol.resize(net.branches.size());
        for (size_t b = 0; b < net.branches.size(); ++b) {
            bcol[b] = n;
            n += 2 * net.branches[b].phases.count();
        }
        for (int bp = 0; bp < net.n_bus_phase; ++bp) {
            if (net.bp_bus[bp] == net.substation) continue;
            injcol[bp] = n;
            n += 2;
        }
    }
};

void apply_source(const PuNetwork& net, const SourceSpec& src, iv::NetworkState& st) {
    const auto phases = net.bus_phases[net.substation].list();
    if (src.v_mag_pu.size() != phases.size() || src.angle_deg.size() != phases.size())
        throw SolverError("source spec phase count mismatch");
    for (size_t k = 0; k < phases.size(); ++k) {
        int bp = net.bus_phase_index(net.substation, phases[k]);
        st.vr[bp] = src.v_mag_pu[k] * std::cos(src.angle_deg[k] * kDeg);
        st.vi[bp] = src.v_mag_pu[k] * std::sin(src.angle_deg[k] * kDeg);
    }
}

iv::InjectionTerms make_terms(const PuNetwork& net, const SnapshotInputs& in) {
    iv::InjectionTerms t = iv::InjectionTerms::zero(net);
    t.p = in.pv_p - in.load_p;
    t.q = -in.load_q;
    for (const auto& b : net.branches)
        if (b.is_transformer && b.no_load_loss_pu > 0)
            for (int bp : b.from_bp) t.p[bp] -= b.no_load_loss_pu;
    return t;
}

/// Full residual in the row order [branch flow | injection | power balance].
void eval_residual(const PuNetwork& net, const iv::InjectionTerms& terms,
                   const iv::NetworkState& st, const Eigen::VectorXd& inj_r,
                   const Eigen::VectorXd& inj_i, const Layout& lay, Eigen::VectorXd& F) {
    F.resize(lay.n);
    Eigen::VectorXd flow;
    iv::all_branch_flow_residuals_serial(net, st, flow);
    int row = 0;
    F.segment(0, flow.size()) = flow;
    row += static_cast<int>(flow.size());

    Eigen::VectorXd ires_r, ires_i;
    iv::injection_residual(net, st, inj_r, inj_i, ires_r, ires_i);
    Eigen::VectorXd pres, qres;
    iv::power_balance_residual(net, terms, st.vr, st.vi, inj_r, inj_i, true, pres, qres);
    for (int bp = 0; bp < net.n_bus_phase; ++bp) {
        if (lay.injcol[bp] < 0) continue;
        F[row++] = ires_r[bp];
        F[row++] = ires_i[bp];
    }
    for (int bp = 0; bp < net.n_bus_phase; ++bp) {
        if (lay.injcol[bp] < 0) continue;
        F[row++] = pres[bp];
        F[row++] = qres[bp];
    }
}

void assemble_jacobian(const PuNetwork& net, const iv::NetworkState& st,
                       const Eigen::VectorXd& inj_r, const Eigen::VectorXd& inj_i,
                       const Layout& lay, std::vector<Eigen::Triplet<double>>& trips) {
    trips.clear();
    // Zero-valued entries are kept so the sparsity pattern is iteration
    // invariant and the symbolic factorization can be reused.
    auto add = [&](int r, int c, double v) {
        if (c >= 0) trips.emplace_back(r, c, v);
    };

    int row = 0;
    for (size_t bi = 0; bi < net.branches.size(); ++bi) {
        const PuBranch& b = net.branches[bi];
        const int np = b.phases.count();
        const bool shunt = b.Bsh.size() > 0 && b.Bsh.cwiseAbs().maxCoeff() > 0;
        for (int ph = 0; ph < np; ++ph) {
            const int rr = row + ph, ri = row + np + ph;
            for (int p = 0; p < np; ++p) {
                add(rr, lay.bcol[bi] + 2 * p, b.R(ph, p));
                add(rr, lay.bcol[bi] + 2 * p + 1, -b.X(ph, p));
                add(ri, lay.bcol[bi] + 2 * p, b.X(ph, p));
                add(ri, lay.bcol[bi] + 2 * p + 1, b.R(ph, p));
            }
            for (int k = 0; k < np; ++k) {
                int vf = lay.vcol[b.from_bp[k]];
                int vt = lay.vcol[b.to_bp[k]];
                double diag = (k == ph) ? 1.0 / b.tap : 0.0;
                if (shunt) {
                    double xb = 0.5 * (b.X * b.Bsh)(ph, k);
                    double rb = 0.5 * (b.R * b.Bsh)(ph, k);
                    add(rr, vf, xb - diag);
                    if (vf >= 0) add(rr, vf + 1, rb);
                    add(ri, vf, -rb);
                    if (vf >= 0) add(ri, vf + 1, xb - diag);
                } else {
                    add(rr, vf, -diag);
                    if (vf >= 0) add(ri, vf + 1, -diag);
                }
                add(rr, vt, (k == ph) ? 1.0 : 0.0);
                if (vt >= 0) add(ri, vt + 1, (k == ph) ? 1.0 : 0.0);
            }
        }
        row += 2 * np;
    }

    // Injection rows: I_inj - sum of incident branch-end currents.
    std::vector<int> inj_row_r(net.n_bus_phase, -1);
    for (int bp = 0; bp < net.n_bus_phase; ++bp) {
        if (lay.injcol[bp] < 0) continue;
        inj_row_r[bp] = row;
        add(row, lay.injcol[bp], 1.0);
        add(row + 1, lay.injcol[bp] + 1, 1.0);
        row += 2;
    }
    for (size_t bi = 0; bi < net.branches.size(); ++bi) {
        const PuBranch& b = net.branches[bi];
        const int np = b.phases.count();
        const bool shunt = b.Bsh.size() > 0 && b.Bsh.cwiseAbs().maxCoeff() > 0;
        for (int k = 0; k < np; ++k) {
            int rf = inj_row_r[b.from_bp[k]];
            if (rf >= 0) {
                add(rf, lay.bcol[bi] + 2 * k, -1.0 / b.tap);
                add(rf + 1, lay.bcol[bi] + 2 * k + 1, -1.0 / b.tap);
            }
            int rt = inj_row_r[b.to_bp[k]];
            if (rt >= 0) {
                add(rt, lay.bcol[bi] + 2 * k, 1.0);
                add(rt + 1, lay.bcol[bi] + 2 * k + 1, 1.0);
                if (shunt)
                    for (int m = 0; m < np; ++m) {
                        double h = 0.5 * b.Bsh(k, m);
                        add(rt, lay.vcol[b.from_bp[m]] >= 0 ? lay.vcol[b.from_bp[m]] + 1 : -1, h);
                        add(rt, lay.vcol[b.to_bp[m]] >= 0 ? lay.vcol[b.to_bp[m]] + 1 : -1, h);
                        add(rt + 1, lay.vcol[b.from_bp[m]], -h);
                        add(rt + 1, lay.vcol[b.to_bp[m]], -h);
                    }
            }
        }
    }

    // Power balance rows (capacitors folded into the q row).
    std::vector<double> bcap(net.n_bus_phase, 0.0);
    for (const auto& cap : net.capacitors)
        for (size_t k = 0; k < cap.bp.size(); ++k) bcap[cap.bp[k]] += cap.b_pu[k];
    for (int bp = 0; bp < net.n_bus_phase; ++bp) {
        if (lay.injcol[bp] < 0) continue;
        int vc = lay.vcol[bp], ic = lay.injcol[bp];
        add(row, vc, -inj_r[bp]);
        add(row, vc + 1, -inj_i[bp]);
        add(row, ic, -st.vr[bp]);
        add(row, ic + 1, -st.vi[bp]);
        add(row + 1, vc, 2 * bcap[bp] * st.vr[bp] + inj_i[bp]);
        add(row + 1, vc + 1, 2 * bcap[bp] * st.vi[bp] - inj_r[bp]);
        add(row + 1, ic, -st.vi[bp]);
        add(row + 1, ic + 1, st.vr[bp]);
        row += 2;
    }
}

void write_state(const PuNetwork& net, const Layout& lay, const Eigen::VectorXd& u,
                 iv::NetworkState& st, Eigen::VectorXd& inj_r, Eigen::VectorXd& inj_i) {
    for (int bp = 0; bp < net.n_bus_phase; ++bp) {
        if (lay.vcol[bp] < 0) continue;
        st.vr[bp] = u[lay.vcol[bp]];
        st.vi[bp] = u[lay.vcol[bp] + 1];
    }
    for (size_t bi = 0; bi < net.branches.size(); ++bi) {
        const int np = net.branches[bi].phases.count();
        for (int k = 0; k < np; ++k) {
            st.ibr[bi][k] = u[lay.bcol[bi] + 2 * k];
            st.ibi[bi][k] = u[lay.bcol[bi] + 2 * k + 1];
        }
    }
    for (int bp = 0; bp < net.n_bus_phase; ++bp) {
        if (lay.injcol[bp] < 0) continue;
        inj_r[bp] = u[lay.injcol[bp]];
        inj_i[bp] = u[lay.injcol[bp] + 1];
    }
}

double min_vmag(const PuNetwork& net, const Layout& lay, const Eigen::VectorXd& u) {
    double m = 1e9;
    for (int bp = 0; bp < net.n_bus_phase; ++bp) {
        if (lay.vcol[bp] < 0) continue;
        m = std::min(m, std::hypot(u[lay.vcol[bp]], u[lay.vcol[bp] + 1]));
    }
    return m;
}

}  // namespace

PowerFlowSolution solve_snapshot(const PuNetwork& net, const SnapshotInputs& in,
                                 const PowerFlowOptions& opts) {
    Layout lay(net);
    PowerFlowSolution sol;
    sol.state = iv::NetworkState::zero(net);
    apply_source(net, in.source, sol.state);
    sol.inj_r = Eigen::VectorXd::Zero(net.n_bus_phase);
    sol.inj_i = Eigen::VectorXd::Zero(net.n_bus_phase);

    // Flat start: 1 pu at nominal angles, zero currents.
    Eigen::VectorXd u = Eigen::VectorXd::Zero(lay.n);
    for (int bp = 0; bp < net.n_bus_phase; ++bp) {
        if (lay.vcol[bp] < 0) continue;
        double a = nominal_angle_deg(net.bp_phase[bp]) * kDeg;
        u[lay.vcol[bp]] = std::cos(a);
        u[lay.vcol[bp] + 1] = std::sin(a);
    }

    iv::InjectionTerms terms = make_terms(net, in);
    Eigen::VectorXd F;
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::SparseMatrix<double> J(lay.n, lay.n);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    bool analyzed = false;

    write_state(net, lay, u, sol.state, sol.inj_r, sol.inj_i);
    for (int it = 0; it < opts.max_iter; ++it) {
        eval_residual(net, terms, sol.state, sol.inj_r, sol.inj_i, lay, F);
        sol.max_residual = F.size() ? F.cwiseAbs().maxCoeff() : 0.0;
        sol.iterations = it;
        if (sol.max_residual <= opts.tol) {
            sol.converged = true;
            break;
        }
        assemble_jacobian(net, sol.state, sol.inj_r, sol.inj_i, lay, trips);
        J.setFromTriplets(trips.begin(), trips.end());
        if (!analyzed) {
            lu.analyzePattern(J);
            analyzed = true;
        }
        lu.factorize(J);
        if (lu.info() != Eigen::Success)
            throw SolverError("singular power-flow Jacobian (structural deficiency)");
        Eigen::VectorXd du = lu.solve(-F);
        double alpha = 1.0;
        for (int h = 0; h < opts.max_halvings; ++h) {
            if (min_vmag(net, lay, u + alpha * du) >= opts.v_damp_floor) break;
            alpha *= 0.5;
        }
        u += alpha * du;
        write_state(net, lay, u, sol.state, sol.inj_r, sol.inj_i);
    }
    if (!sol.converged) {
        eval_residual(net, terms, sol.state, sol.inj_r, sol.inj_i, lay, F);
        sol.max_residual = F.size() ? F.cwiseAbs().maxCoeff() : 0.0;
        sol.iterations = opts.max_iter;
        sol.message = "no convergence after " + std::to_string(opts.max_iter) + " iterations";
    }

    // Substation injections from the incident branch currents.
    Eigen::VectorXd sr, si;
    iv::accumulate_injections(net, sol.state, sr, si);
    for (Phase p : net.bus_phases[net.substation].list()) {
        int bp = net.bus_phase_index(net.substation, p);
        sol.inj_r[bp] = sr[bp];
        sol.inj_i[bp] = si[bp];
    }
    sol.powers = iv::element_powers(net, sol.state, in.load_p, in.load_q, in.pv_p);
    return sol;
}

namespace {

TimeSeriesResult run_timeseries(const PuNetwork& net, const std::vector<SnapshotInputs>& hours,
                                const PowerFlowOptions& opts, bool parallel) {
    TimeSeriesResult res;
    res.hours.resize(hours.size());
    std::vector<std::string> errors(hours.size());
    const int nh = static_cast<int>(hours.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (int h = 0; h < nh; ++h) {
        try {
            res.hours[h] = solve_snapshot(net, hours[h], opts);
        } catch (const std::exception& e) {
            errors[h] = e.what();
        }
    }
    for (int h = 0; h < nh; ++h) {
        if (!errors[h].empty()) {
            res.hours[h].converged = false;
            res.hours[h].message = "hour " + std::to_string(h) + ": " + errors[h];
        }
        if (!res.hours[h].converged) res.failed_hours.push_back(h);
    }
    return res;
}

}  // namespace

TimeSeriesResult solve_timeseries(const PuNetwork& net, const std::vector<SnapshotInputs>& hours,
                                  const PowerFlowOptions& opts) {
#ifdef _OPENMP
    if (opts.threads > 0) omp_set_num_threads(opts.threads);
#endif
    return run_timeseries(net, hours, opts, true);
}

TimeSeriesResult solve_timeseries_serial(const PuNetwork& net,
                                         const std::vector<SnapshotInputs>& hours,
                                         const PowerFlowOptions& opts) {
    return run_timeseries(net, hours, opts, false);
}

std::vector<MonitorRecord> collect_monitors(const PuNetwork& net,
                                            const std::vector<SnapshotInputs>& hours,
                                            const TimeSeriesResult& res) {
    std::vector<MonitorRecord> out;
    std::vector<char> is_load_bus(net.n_bus, 0);
    for (const auto& l : net.loads) is_load_bus[l.bus] = 1;
    for (size_t h = 0; h < res.hours.size(); ++h) {
        const auto& sol = res.hours[h];
        if (!sol.converged) continue;
        auto emit_bus = [&](int bus, auto p_fn, auto q_fn) {
            for (Phase ph : net.bus_phases[bus].list()) {
                int bp = net.bus_phase_index(bus, ph);
                MonitorRecord m;
                m.hour = static_cast<int>(h);
                m.bus = net.bus_ids[bus];
                m.phase = ph;
                m.v_mag_pu = std::hypot(sol.state.vr[bp], sol.state.vi[bp]);
                m.v_ang_deg = std::atan2(sol.state.vi[bp], sol.state.vr[bp]) / kDeg;
                m.p_kw = net.pu_to_kw(p_fn(bp));
                m.q_kvar = net.pu_to_kw(q_fn(bp));
                out.push_back(m);
            }
        };
        // Feeder head: power delivered into the feeder through the source
        // segment; load buses: the bound constant-PQ consumption.
        const PuBranch& src = net.branches[net.source_branch];
        Eigen::VectorXd vfr(src.phases.count()), vfi(vfr.size()), vtr(vfr.size()), vti(vfr.size());
        for (int k = 0; k < src.phases.count(); ++k) {
            vfr[k] = sol.state.vr[src.from_bp[k]];
            vfi[k] = sol.state.vi[src.from_bp[k]];
            vtr[k] = sol.state.vr[src.to_bp[k]];
            vti[k] = sol.state.vi[src.to_bp[k]];
        }
        Eigen::VectorXd dr, di;
        iv::to_end_delivered(src, vfr, vfi, vtr, vti, sol.state.ibr[net.source_branch],
                             sol.state.ibi[net.source_branch], dr, di);
        std::vector<double> head_p(net.n_bus_phase, 0.0), head_q(net.n_bus_phase, 0.0);
        for (int k = 0; k < src.phases.count(); ++k) {
            int bp = src.to_bp[k];
            head_p[bp] = iv::p_of(sol.state.vr[bp], sol.state.vi[bp], dr[k], di[k]);
            head_q[bp] = iv::q_of(sol.state.vr[bp], sol.state.vi[bp], dr[k], di[k]);
        }
        emit_bus(net.feeder_head, [&](int bp) { return head_p[bp]; },
                 [&](int bp) { return head_q[bp]; });
        for (int b = 0; b < net.n_bus; ++b)
            if (is_load_bus[b])
                emit_bus(b, [&](int bp) { return hours[h].load_p[bp]; },
                         [&](int bp) { return hours[h].load_q[bp]; });
    }
    return out;
}

}  // namespace feedertk
