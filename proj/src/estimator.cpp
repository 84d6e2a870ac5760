#include "feedertk/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "feedertk/csv.hpp"

namespace feedertk {

namespace {

constexpr double kPi = 3.14159265358979323846;

double nominal_angle_rad(Phase p) {
    switch (p) {
        case Phase::A: return 0.0;
        case Phase::B: return -2.0 * kPi / 3.0;
        case Phase::C: return 2.0 * kPi / 3.0;
    }
    return 0.0;
}

double tan_acos(double pf) { return std::tan(std::acos(std::clamp(pf, 0.0, 1.0))); }

}  // namespace

SnapshotIndexer::SnapshotIndexer(const PuNetwork& net) {
    n_bp_ = net.n_bus_phase;
    int cursor = 2 * n_bp_;
    cur_base_.resize(net.branches.size());
    cur_np_.resize(net.branches.size());
    for (size_t b = 0; b < net.branches.size(); ++b) {
        cur_base_[b] = cursor;
        cur_np_[b] = net.branches[b].phases.count();
        cursor += 2 * cur_np_[b];
    }
    src0_ = cursor;
    cursor += 2 * net.bus_phases[net.substation].count();
    load_base_.resize(net.loads.size());
    for (size_t l = 0; l < net.loads.size(); ++l) {
        load_base_[l] = cursor;
        cursor += 2 * static_cast<int>(net.loads[l].bp.size());
    }
    n_ = cursor;
}

namespace {

/// Hourly estimation program over rectangular voltages, branch currents,
/// polar source variables, and per-phase load powers. Constraints other than
/// the source polar links are affine or quadratic, kept as explicit term
/// lists so values, Jacobian, and Hessian share one definition.
class SnapshotNlp : public nlp::Problem {
public:
    SnapshotNlp(const PuNetwork& net, const SnapshotMeasurements& meas,
                const EstimatorOptions& opts)
        : net_(net), meas_(meas), opts_(opts), ix_(net) {
        n_ = ix_.num_vars();
        sub_phases_ = net_.bus_phases[net_.substation].list();
        build_rows();
        finalize();
    }

    int idx_vr(int bp) const { return ix_.idx_vr(bp); }
    int idx_vi(int bp) const { return ix_.idx_vi(bp); }
    int idx_ir(int branch, int p) const { return ix_.idx_ir(branch, p); }
    int idx_ii(int branch, int p) const { return ix_.idx_ii(branch, p); }
    int idx_src_vmag(int sp) const { return ix_.idx_src_vmag(sp); }
    int idx_src_theta(int sp) const { return ix_.idx_src_theta(sp); }
    int idx_load_p(int load, int p) const { return ix_.idx_load_p(load, p); }
    int idx_load_q(int load, int p) const { return ix_.idx_load_q(load, p); }

    // ---- nlp::Problem ----
    int num_vars() const override { return n_; }
    int num_cons() const override { return m_; }

    void bounds(Eigen::VectorXd& xl, Eigen::VectorXd& xu, Eigen::VectorXd& cl,
                Eigen::VectorXd& cu) const override {
        xl = xl_;
        xu = xu_;
        cl = cl_;
        cu = cu_;
    }

    void initial_point(Eigen::VectorXd& x) const override { x = x0_; }

    double objective(const Eigen::VectorXd& x) const override {
        double f = 0.0;
        for (const auto& vm : obj_) {
            double q = x[vm.ivr] * x[vm.ivr] + x[vm.ivi] * x[vm.ivi];
            double e = q - vm.m2;
            f += e * e;
        }
        return f;
    }

    void gradient(const Eigen::VectorXd& x, Eigen::VectorXd& g) const override {
        g.setZero();
        for (const auto& vm : obj_) {
            double q = x[vm.ivr] * x[vm.ivr] + x[vm.ivi] * x[vm.ivi];
            double e = q - vm.m2;
            g[vm.ivr] += 4.0 * e * x[vm.ivr];
            g[vm.ivi] += 4.0 * e * x[vm.ivi];
        }
    }

    void constraints(const Eigen::VectorXd& x, Eigen::VectorXd& c) const override {
        for (int r = 0; r < n_expr_rows_; ++r) {
            double v = row_const_[r];
            for (const auto& t : row_lin_[r]) v += t.coef * x[t.col];
            for (const auto& t : row_quad_[r]) v += t.coef * x[t.i] * x[t.j];
            c[r] = v;
        }
        for (size_t sp = 0; sp < polar_.size(); ++sp) {
            const auto& pl = polar_[sp];
            double V = x[pl.iv], th = x[pl.ith];
            c[pl.row_r] = x[pl.ivr] - V * std::cos(th);
            c[pl.row_i] = x[pl.ivi] - V * std::sin(th);
        }
    }

    void jacobian_structure(std::vector<int>& rows, std::vector<int>& cols) const override {
        rows = jr_;
        cols = jc_;
    }

    void jacobian_values(const Eigen::VectorXd& x, Eigen::VectorXd& vals) const override {
        vals.setZero();
        for (int r = 0; r < n_expr_rows_; ++r) {
            for (const auto& t : row_lin_[r]) vals[t.slot] += t.coef;
            for (const auto& t : row_quad_[r]) {
                vals[t.slot_i] += t.coef * x[t.j];
                vals[t.slot_j] += t.coef * x[t.i];
            }
        }
        for (const auto& pl : polar_) {
            double V = x[pl.iv], th = x[pl.ith];
            vals[pl.jr_vr] = 1.0;
            vals[pl.jr_v] = -std::cos(th);
            vals[pl.jr_th] = V * std::sin(th);
            vals[pl.ji_vi] = 1.0;
            vals[pl.ji_v] = -std::sin(th);
            vals[pl.ji_th] = -V * std::cos(th);
        }
    }

    void hessian_structure(std::vector<int>& rows, std::vector<int>& cols) const override {
        rows = hr_;
        cols = hc_;
    }

    void hessian_values(const Eigen::VectorXd& x, double sigma, const Eigen::VectorXd& lam,
                        Eigen::VectorXd& vals) const override {
        vals.setZero();
        for (const auto& t : hquad_) vals[t.hslot] += lam[t.row] * t.dcoef;
        for (const auto& vm : obj_) {
            double vr = x[vm.ivr], vi = x[vm.ivi];
            double e = vr * vr + vi * vi - vm.m2;
            vals[vm.h_rr] += sigma * (4.0 * e + 8.0 * vr * vr);
            vals[vm.h_ii] += sigma * (4.0 * e + 8.0 * vi * vi);
            vals[vm.h_ri] += sigma * 8.0 * vr * vi;
        }
        for (const auto& pl : polar_) {
            double V = x[pl.iv], th = x[pl.ith];
            vals[pl.h_vth] += lam[pl.row_r] * std::sin(th) - lam[pl.row_i] * std::cos(th);
            vals[pl.h_thth] += lam[pl.row_r] * V * std::cos(th) + lam[pl.row_i] * V * std::sin(th);
        }
    }

private:
    struct LinTerm {
        int col;
        double coef;
        int slot = -1;
    };
    struct QuadTerm {
        int i, j;
        double coef;
        int slot_i = -1, slot_j = -1;
    };
    struct HQuad {
        int row;
        double dcoef;
        int hslot;
    };
    struct ObjTerm {
        int ivr, ivi;
        double m2;
        int h_rr, h_ii, h_ri;
    };
    struct PolarLink {
        int ivr, ivi, iv, ith;
        int row_r, row_i;
        int jr_vr, jr_v, jr_th, ji_vi, ji_v, ji_th;
        int h_vth, h_thth;
    };

    int new_row(double lo, double hi, double c0 = 0.0) {
        row_lin_.emplace_back();
        row_quad_.emplace_back();
        row_const_.push_back(c0);
        clv_.push_back(lo);
        cuv_.push_back(hi);
        return static_cast<int>(row_const_.size()) - 1;
    }
    void add_lin(int row, int col, double coef) {
        if (coef != 0.0) lin_acc_[{row, col}] += coef;
    }
    void add_quad(int row, int i, int j, double coef) {
        if (coef == 0.0) return;
        if (i < j) std::swap(i, j);
        quad_acc_[{row, {i, j}}] += coef;
    }

    /// Power at bus-phase bp of the current at one end of branch b, phase p,
    /// scaled by sign; p_row gets Re(V conj(I)), q_row gets Im.
    void add_end_power(int p_row, int q_row, int bp, int b, int p, bool from_end, double sign) {
        const PuBranch& br = net_.branches[b];
        int vr = idx_vr(bp), vi = idx_vi(bp);
        if (from_end) {
            double s = sign / br.tap;
            add_quad(p_row, vr, idx_ir(b, p), s);
            add_quad(p_row, vi, idx_ii(b, p), s);
            add_quad(q_row, vi, idx_ir(b, p), s);
            add_quad(q_row, vr, idx_ii(b, p), -s);
        } else {
            // delivered current: I - j*(Bsh/2)*(Vf + Vt)
            add_quad(p_row, vr, idx_ir(b, p), sign);
            add_quad(p_row, vi, idx_ii(b, p), sign);
            add_quad(q_row, vi, idx_ir(b, p), sign);
            add_quad(q_row, vr, idx_ii(b, p), -sign);
            int np = br.phases.count();
            for (int q = 0; q < np; ++q) {
                double bsh = 0.5 * br.Bsh(p, q);
                if (bsh == 0.0) continue;
                int fvr = idx_vr(br.from_bp[q]), fvi = idx_vi(br.from_bp[q]);
                int tvr = idx_vr(br.to_bp[q]), tvi = idx_vi(br.to_bp[q]);
                // del_r += bsh*(vfi + vti); del_i -= bsh*(vfr + vtr)
                add_quad(p_row, vr, fvi, sign * bsh);
                add_quad(p_row, vr, tvi, sign * bsh);
                add_quad(p_row, vi, fvr, -sign * bsh);
                add_quad(p_row, vi, tvr, -sign * bsh);
                add_quad(q_row, vi, fvi, sign * bsh);
                add_quad(q_row, vi, tvi, sign * bsh);
                add_quad(q_row, vr, fvr, sign * bsh);
                add_quad(q_row, vr, tvr, sign * bsh);
            }
        }
    }

    void build_rows() {
        const double m = meas_.head_vmag_pu;

        // Branch voltage-drop rows, affine in V and I.
        for (size_t b = 0; b < net_.branches.size(); ++b) {
            const PuBranch& br = net_.branches[b];
            int np = br.phases.count();
            Eigen::MatrixXd RB = br.R * br.Bsh, XB = br.X * br.Bsh;
            std::vector<int> real_rows(np), imag_rows(np);
            for (int p = 0; p < np; ++p) real_rows[p] = new_row(0, 0);
            for (int p = 0; p < np; ++p) imag_rows[p] = new_row(0, 0);
            for (int p = 0; p < np; ++p) {
                for (int q = 0; q < np; ++q) {
                    add_lin(real_rows[p], idx_ir(b, q), br.R(p, q));
                    add_lin(real_rows[p], idx_ii(b, q), -br.X(p, q));
                    add_lin(real_rows[p], idx_vr(br.from_bp[q]), 0.5 * XB(p, q));
                    add_lin(real_rows[p], idx_vi(br.from_bp[q]), 0.5 * RB(p, q));
                    add_lin(imag_rows[p], idx_ir(b, q), br.X(p, q));
                    add_lin(imag_rows[p], idx_ii(b, q), br.R(p, q));
                    add_lin(imag_rows[p], idx_vr(br.from_bp[q]), -0.5 * RB(p, q));
                    add_lin(imag_rows[p], idx_vi(br.from_bp[q]), 0.5 * XB(p, q));
                }
                add_lin(real_rows[p], idx_vr(br.from_bp[p]), -1.0 / br.tap);
                add_lin(real_rows[p], idx_vr(br.to_bp[p]), 1.0);
                add_lin(imag_rows[p], idx_vi(br.from_bp[p]), -1.0 / br.tap);
                add_lin(imag_rows[p], idx_vi(br.to_bp[p]), 1.0);
            }
        }

        // Power balance at every non-substation bus-phase:
        //   flow_out + P_load + P_noload - P_pv = 0
        //   qflow_out + Q_load - B_cap |V|^2 = 0
        std::vector<double> pv_bp(net_.n_bus_phase, 0.0);
        for (size_t v = 0; v < net_.pvs.size(); ++v) {
            double per_phase = meas_.pv_p_pu[v] / net_.pvs[v].bp.size();
            for (int bp : net_.pvs[v].bp) pv_bp[bp] += per_phase;
        }
        std::vector<double> noload_bp(net_.n_bus_phase, 0.0);
        for (const auto& br : net_.branches)
            if (br.is_transformer)
                for (int bp : br.from_bp) noload_bp[bp] += br.no_load_loss_pu;
        std::vector<double> cap_bp(net_.n_bus_phase, 0.0);
        for (const auto& cap : net_.capacitors)
            for (size_t k = 0; k < cap.bp.size(); ++k) cap_bp[cap.bp[k]] += cap.b_pu[k];

        bal_row_.assign(net_.n_bus_phase, -1);
        for (int bp = 0; bp < net_.n_bus_phase; ++bp) {
            if (net_.bp_bus[bp] == net_.substation) continue;
            int p_row = new_row(0, 0, noload_bp[bp] - pv_bp[bp]);
            int q_row = new_row(0, 0);
            bal_row_[bp] = p_row;
            int bus = net_.bp_bus[bp];
            Phase ph = net_.bp_phase[bp];
            for (auto [b, is_from] : net_.incident[bus]) {
                const PuBranch& br = net_.branches[b];
                if (!br.phases.has(ph)) continue;
                auto plist = br.phases.list();
                int p = static_cast<int>(std::find(plist.begin(), plist.end(), ph) -
                                         plist.begin());
                // from end: power leaves the bus (+); to end: arrives (-)
                add_end_power(p_row, q_row, bp, static_cast<int>(b), p, is_from,
                              is_from ? 1.0 : -1.0);
            }
            if (cap_bp[bp] != 0.0) {
                add_quad(q_row, idx_vr(bp), idx_vr(bp), -cap_bp[bp]);
                add_quad(q_row, idx_vi(bp), idx_vi(bp), -cap_bp[bp]);
            }
        }
        // Load powers enter their bus-phase balance rows.
        for (size_t l = 0; l < net_.loads.size(); ++l) {
            for (size_t k = 0; k < net_.loads[l].bp.size(); ++k) {
                int bp = net_.loads[l].bp[k];
                if (bal_row_[bp] < 0)
                    throw ModelError("load " + net_.loads[l].id + " sits on the substation bus");
                add_lin(bal_row_[bp], idx_load_p(static_cast<int>(l), static_cast<int>(k)), 1.0);
                add_lin(bal_row_[bp] + 1, idx_load_q(static_cast<int>(l), static_cast<int>(k)),
                        1.0);
            }
        }

        // Feeder-head totals: power delivered at the head end of the source
        // segment matches the recorded totals.
        {
            int sb = net_.source_branch;
            const PuBranch& br = net_.branches[sb];
            int p_row = new_row(meas_.head_p_pu, meas_.head_p_pu);
            int q_row = new_row(meas_.head_q_pu, meas_.head_q_pu);
            int np = br.phases.count();
            for (int p = 0; p < np; ++p)
                add_end_power(p_row, q_row, br.to_bp[p], sb, p, false, 1.0);
        }

        // Head voltage magnitudes: phase a pinned to the reading, the other
        // phases banded around it.
        for (int bp = net_.bp_offset[net_.feeder_head];
             bp < net_.bp_offset[net_.feeder_head] +
                      net_.bus_phases[net_.feeder_head].count();
             ++bp) {
            double lo, hi;
            if (net_.bp_phase[bp] == Phase::A) {
                lo = hi = m * m;
            } else {
                lo = (1.0 - opts_.band_head) * m;
                hi = (1.0 + opts_.band_head) * m;
                lo *= lo;
                hi *= hi;
            }
            int row = new_row(lo, hi);
            add_quad(row, idx_vr(bp), idx_vr(bp), 1.0);
            add_quad(row, idx_vi(bp), idx_vi(bp), 1.0);
        }

        // Per load-phase: an anchor row pinning (metered) or capping
        // (unmetered) active power, plus the power-factor corridor keeping Q
        // between the tan(acos pf) rays. Anchors are rows, not variable
        // bounds, so a pinned value never throttles the barrier steps.
        double p_cap = net_.kw_to_pu(opts_.p_cap_kw);
        for (size_t l = 0; l < net_.loads.size(); ++l) {
            double a_lo = tan_acos(net_.loads[l].pf_max);  // smaller tangent
            double a_hi = tan_acos(net_.loads[l].pf_min);
            int np = static_cast<int>(net_.loads[l].bp.size());
            bool metered = meas_.load_p_pu[l].has_value();
            double p_phase = metered ? std::max(0.0, *meas_.load_p_pu[l]) / np : 0.0;
            for (int k = 0; k < np; ++k) {
                int ip = idx_load_p(static_cast<int>(l), k);
                int iq = idx_load_q(static_cast<int>(l), k);
                int ra = metered ? new_row(p_phase, p_phase) : new_row(0, p_cap);
                add_lin(ra, ip, 1.0);
                int r1 = new_row(0, nlp::kInf);  // Q - a_lo*P >= 0
                add_lin(r1, iq, 1.0);
                add_lin(r1, ip, -a_lo);
                int r2 = new_row(-nlp::kInf, 0);  // Q - a_hi*P <= 0
                add_lin(r2, iq, 1.0);
                add_lin(r2, ip, -a_hi);
            }
        }

        n_expr_rows_ = static_cast<int>(row_const_.size());

        // Source polar links: vr = V cos(theta), vi = V sin(theta).
        for (size_t sp = 0; sp < sub_phases_.size(); ++sp) {
            int bp = net_.bus_phase_index(net_.substation, sub_phases_[sp]);
            PolarLink pl{};
            pl.ivr = idx_vr(bp);
            pl.ivi = idx_vi(bp);
            pl.iv = idx_src_vmag(static_cast<int>(sp));
            pl.ith = idx_src_theta(static_cast<int>(sp));
            pl.row_r = static_cast<int>(clv_.size());
            clv_.push_back(0);
            cuv_.push_back(0);
            pl.row_i = static_cast<int>(clv_.size());
            clv_.push_back(0);
            cuv_.push_back(0);
            polar_.push_back(pl);
        }
        m_ = static_cast<int>(clv_.size());
    }

    int hslot(int i, int j) {
        if (i < j) std::swap(i, j);
        auto key = std::make_pair(i, j);
        auto it = hmap_.find(key);
        if (it != hmap_.end()) return it->second;
        int s = static_cast<int>(hr_.size());
        hmap_.emplace(key, s);
        hr_.push_back(i);
        hc_.push_back(j);
        return s;
    }

    void finalize() {
        // Flatten the accumulation maps into per-row term lists with fixed
        // Jacobian slots.
        row_lin_.assign(n_expr_rows_, {});
        row_quad_.assign(n_expr_rows_, {});
        for (const auto& [key, coef] : lin_acc_)
            row_lin_[key.first].push_back({key.second, coef});
        for (const auto& [key, coef] : quad_acc_)
            row_quad_[key.first].push_back({key.second.first, key.second.second, coef});

        jr_.clear();
        jc_.clear();
        for (int r = 0; r < n_expr_rows_; ++r) {
            std::map<int, int> slot_of;
            auto slot = [&](int col) {
                auto it = slot_of.find(col);
                if (it != slot_of.end()) return it->second;
                int s = static_cast<int>(jr_.size());
                jr_.push_back(r);
                jc_.push_back(col);
                slot_of.emplace(col, s);
                return s;
            };
            for (auto& t : row_lin_[r]) t.slot = slot(t.col);
            for (auto& t : row_quad_[r]) {
                t.slot_i = slot(t.i);
                t.slot_j = slot(t.j);
                hquad_.push_back({r, t.i == t.j ? 2.0 * t.coef : t.coef, hslot(t.i, t.j)});
            }
        }
        for (auto& pl : polar_) {
            auto push = [&](int row, int col) {
                jr_.push_back(row);
                jc_.push_back(col);
                return static_cast<int>(jr_.size()) - 1;
            };
            pl.jr_vr = push(pl.row_r, pl.ivr);
            pl.jr_v = push(pl.row_r, pl.iv);
            pl.jr_th = push(pl.row_r, pl.ith);
            pl.ji_vi = push(pl.row_i, pl.ivi);
            pl.ji_v = push(pl.row_i, pl.iv);
            pl.ji_th = push(pl.row_i, pl.ith);
            pl.h_vth = hslot(pl.iv, pl.ith);
            pl.h_thth = hslot(pl.ith, pl.ith);
        }

        // Objective terms for the voltage readings.
        for (const auto& vm : meas_.volts) {
            ObjTerm t{};
            t.ivr = idx_vr(vm.bp);
            t.ivi = idx_vi(vm.bp);
            t.m2 = vm.v_pu * vm.v_pu;
            t.h_rr = hslot(t.ivr, t.ivr);
            t.h_ii = hslot(t.ivi, t.ivi);
            t.h_ri = hslot(t.ivi, t.ivr);
            obj_.push_back(t);
        }

        cl_ = Eigen::Map<Eigen::VectorXd>(clv_.data(), m_);
        cu_ = Eigen::Map<Eigen::VectorXd>(cuv_.data(), m_);
        build_var_bounds_and_start();
        lin_acc_.clear();
        quad_acc_.clear();
    }

    void build_var_bounds_and_start() {
        const double m = meas_.head_vmag_pu;
        xl_ = Eigen::VectorXd::Constant(n_, -nlp::kInf);
        xu_ = Eigen::VectorXd::Constant(n_, nlp::kInf);
        x0_ = Eigen::VectorXd::Zero(n_);

        for (int bp = 0; bp < net_.n_bus_phase; ++bp) {
            double th = nominal_angle_rad(net_.bp_phase[bp]);
            x0_[idx_vr(bp)] = m * std::cos(th);
            x0_[idx_vi(bp)] = m * std::sin(th);
        }
        for (size_t sp = 0; sp < sub_phases_.size(); ++sp) {
            int iv = idx_src_vmag(static_cast<int>(sp));
            int ith = idx_src_theta(static_cast<int>(sp));
            double th0 = nominal_angle_rad(sub_phases_[sp]);
            xl_[iv] = (1.0 - opts_.band_src) * m;
            xu_[iv] = (1.0 + opts_.band_src) * m;
            xl_[ith] = th0 - opts_.band_angle_deg * kPi / 180.0;
            xu_[ith] = th0 + opts_.band_angle_deg * kPi / 180.0;
            x0_[iv] = m;
            x0_[ith] = th0;
        }

        double p_cap = net_.kw_to_pu(opts_.p_cap_kw);
        double p_def = std::min(net_.kw_to_pu(opts_.default_unmetered_p_kw), p_cap);
        double a_init = tan_acos(opts_.init_pf);
        for (size_t l = 0; l < net_.loads.size(); ++l) {
            const PuLoad& ld = net_.loads[l];
            double a_lo = tan_acos(ld.pf_max), a_hi = tan_acos(ld.pf_min);
            int np = static_cast<int>(ld.bp.size());
            bool metered = meas_.load_p_pu[l].has_value();
            double p_phase = metered ? std::max(0.0, *meas_.load_p_pu[l]) / np : p_def;
            for (int k = 0; k < np; ++k) {
                x0_[idx_load_p(static_cast<int>(l), k)] = p_phase;
                x0_[idx_load_q(static_cast<int>(l), k)] =
                    std::clamp(a_init * p_phase, a_lo * p_phase, a_hi * p_phase);
            }
        }
    }

    const PuNetwork& net_;
    const SnapshotMeasurements& meas_;
    EstimatorOptions opts_;
    SnapshotIndexer ix_;

    int n_ = 0, m_ = 0, n_expr_rows_ = 0;
    std::vector<int> bal_row_;
    std::vector<Phase> sub_phases_;

    std::map<std::pair<int, int>, double> lin_acc_;
    std::map<std::pair<int, std::pair<int, int>>, double> quad_acc_;
    std::vector<std::vector<LinTerm>> row_lin_;
    std::vector<std::vector<QuadTerm>> row_quad_;
    std::vector<double> row_const_, clv_, cuv_;
    std::vector<HQuad> hquad_;
    std::vector<ObjTerm> obj_;
    std::vector<PolarLink> polar_;
    std::vector<int> jr_, jc_, hr_, hc_;
    std::map<std::pair<int, int>, int> hmap_;

    Eigen::VectorXd xl_, xu_, cl_, cu_, x0_;
};

}  // namespace

SnapshotMeasurements snapshot_measurements(const PuNetwork& net, const MeasurementSet& ms,
                                           int hour) {
    SnapshotMeasurements out;
    out.load_p_pu.resize(net.loads.size());
    for (size_t l = 0; l < net.loads.size(); ++l)
        if (ms.gross_kw[hour][l])
            out.load_p_pu[l] = net.kw_to_pu(*ms.gross_kw[hour][l]);
    out.pv_p_pu.resize(net.pvs.size());
    for (size_t v = 0; v < net.pvs.size(); ++v) out.pv_p_pu[v] = net.kw_to_pu(ms.pv_kw[hour][v]);
    const auto& fh = ms.feeder_head[hour];
    out.head_p_pu = net.kw_to_pu(fh.p_total_kw);
    out.head_q_pu = net.kw_to_pu(fh.q_total_kvar);
    out.head_vmag_pu = fh.v_mag_phase_a_pu;
    for (const auto& vm : ms.volts[hour]) out.volts.push_back({vm.bus_phase, vm.v_pu});
    return out;
}

std::unique_ptr<nlp::Problem> make_snapshot_problem(const PuNetwork& net,
                                                    const SnapshotMeasurements& meas,
                                                    const EstimatorOptions& opts) {
    if (!net.bus_phases[net.feeder_head].has(Phase::A))
        throw ModelError("feeder head bus lacks phase a, required for the head voltage reading");
    return std::make_unique<SnapshotNlp>(net, meas, opts);
}

SnapshotEstimate decode_snapshot(const PuNetwork& net, const SnapshotMeasurements& meas,
                                 const Eigen::VectorXd& x) {
    SnapshotIndexer layout(net);
    SnapshotEstimate est;
    est.state = iv::NetworkState::zero(net);
    for (int bp = 0; bp < net.n_bus_phase; ++bp) {
        est.state.vr[bp] = x[layout.idx_vr(bp)];
        est.state.vi[bp] = x[layout.idx_vi(bp)];
    }
    for (size_t b = 0; b < net.branches.size(); ++b) {
        int np = net.branches[b].phases.count();
        for (int p = 0; p < np; ++p) {
            est.state.ibr[b][p] = x[layout.idx_ir(static_cast<int>(b), p)];
            est.state.ibi[b][p] = x[layout.idx_ii(static_cast<int>(b), p)];
        }
    }
    est.load_p_bp = Eigen::VectorXd::Zero(net.n_bus_phase);
    est.load_q_bp = Eigen::VectorXd::Zero(net.n_bus_phase);
    est.pv_p_bp = Eigen::VectorXd::Zero(net.n_bus_phase);
    est.load_p.resize(net.loads.size());
    est.load_q.resize(net.loads.size());
    for (size_t l = 0; l < net.loads.size(); ++l) {
        int np = static_cast<int>(net.loads[l].bp.size());
        est.load_p[l].resize(np);
        est.load_q[l].resize(np);
        for (int k = 0; k < np; ++k) {
            double p = x[layout.idx_load_p(static_cast<int>(l), k)];
            double q = x[layout.idx_load_q(static_cast<int>(l), k)];
            est.load_p[l][k] = p;
            est.load_q[l][k] = q;
            est.load_p_bp[net.loads[l].bp[k]] += p;
            est.load_q_bp[net.loads[l].bp[k]] += q;
        }
    }
    for (size_t v = 0; v < net.pvs.size(); ++v) {
        double per_phase = meas.pv_p_pu[v] / net.pvs[v].bp.size();
        for (int bp : net.pvs[v].bp) est.pv_p_bp[bp] += per_phase;
    }
    auto sub_phases = net.bus_phases[net.substation].list();
    est.source.v_mag_pu.resize(sub_phases.size());
    est.source.angle_deg.resize(sub_phases.size());
    for (size_t sp = 0; sp < sub_phases.size(); ++sp) {
        est.source.v_mag_pu[sp] = x[layout.idx_src_vmag(static_cast<int>(sp))];
        est.source.angle_deg[sp] = x[layout.idx_src_theta(static_cast<int>(sp))] * 180.0 / kPi;
    }
    est.powers = iv::element_powers(net, est.state, est.load_p_bp, est.load_q_bp, est.pv_p_bp);
    return est;
}

SnapshotEstimate estimate_snapshot(const PuNetwork& net, const SnapshotMeasurements& meas,
                                   const EstimatorOptions& opts, const nlp::WarmStart* warm,
                                   nlp::WarmStart* warm_out) {
    auto prob = make_snapshot_problem(net, meas, opts);
    nlp::SolveOptions sopts;
    sopts.tol = opts.tol_kkt;
    sopts.con_tol = opts.tol_feas;
    sopts.max_iter = opts.max_iter;
    sopts.verbose = opts.verbose;
    if (warm) sopts.mu_init = 1e-4;
    auto res = nlp::solve(*prob, sopts, warm);
    SnapshotEstimate est = decode_snapshot(net, meas, res.x);
    est.objective = res.objective;
    est.kkt_error = res.kkt_error;
    est.iterations = res.iterations;
    est.status = res.status;
    if (warm_out) *warm_out = {res.x, res.lambda, res.zl, res.zu};
    return est;
}

DayEstimate estimate_day(const PuNetwork& net, const MeasurementSet& ms,
                         const EstimatorOptions& opts) {
    DayEstimate day;
    day.hours.resize(24);
    if (opts.warm_start) {
        nlp::WarmStart warm, next;
        bool have_warm = false;
        for (int h = 0; h < 24; ++h) {
            auto meas = snapshot_measurements(net, ms, h);
            day.hours[h] =
                estimate_snapshot(net, meas, opts, have_warm ? &warm : nullptr, &next);
            // a stale active set can stall the warm-started solve; retry cold
            if (have_warm && day.hours[h].status != nlp::SolveStatus::Optimal)
                day.hours[h] = estimate_snapshot(net, meas, opts, nullptr, &next);
            if (day.hours[h].status == nlp::SolveStatus::Optimal) {
                warm = next;
                have_warm = true;
            }
        }
    } else {
        bool parallel = opts.threads != 1;
#pragma omp parallel for schedule(dynamic) if (parallel)
        for (int h = 0; h < 24; ++h) {
            try {
                auto meas = snapshot_measurements(net, ms, h);
                day.hours[h] = estimate_snapshot(net, meas, opts);
            } catch (const std::exception&) {
                day.hours[h].status = nlp::SolveStatus::LinearSolverFailure;
            }
        }
    }
    for (int h = 0; h < 24; ++h)
        if (day.hours[h].status != nlp::SolveStatus::Optimal) day.failed_hours.push_back(h);
    return day;
}

void write_profiles_csv(const PuNetwork& net, const DayEstimate& day, const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    for (int h = 0; h < 24; ++h) {
        const auto& est = day.hours[h];
        for (size_t l = 0; l < net.loads.size(); ++l) {
            for (size_t k = 0; k < net.loads[l].bp.size(); ++k) {
                std::string el =
                    net.loads[l].id + ":" + phase_char(net.bp_phase[net.loads[l].bp[k]]);
                rows.push_back({el, "load_p", std::to_string(h), csv::num(est.load_p[l][k])});
                rows.push_back({el, "load_q", std::to_string(h), csv::num(est.load_q[l][k])});
            }
        }
        for (size_t v = 0; v < net.pvs.size(); ++v) {
            for (size_t k = 0; k < net.pvs[v].bp.size(); ++k) {
                std::string el =
                    net.pvs[v].id + ":" + phase_char(net.bp_phase[net.pvs[v].bp[k]]);
                rows.push_back({el, "pv_p", std::to_string(h),
                                csv::num(est.pv_p_bp[net.pvs[v].bp[k]])});
            }
        }
        auto sub_phases = net.bus_phases[net.substation].list();
        for (size_t sp = 0; sp < sub_phases.size(); ++sp) {
            std::string kind = std::string("src_vmag_") + phase_char(sub_phases[sp]);
            rows.push_back({net.bus_ids[net.substation], kind, std::to_string(h),
                            csv::num(est.source.v_mag_pu[sp])});
        }
    }
    csv::write_csv(path, {"element_id", "kind", "hour", "value_pu"}, rows);
}

void write_substation_csv(const PuNetwork& net, const DayEstimate& day, const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    const PuBranch& src = net.branches[net.source_branch];
    for (int h = 0; h < 24; ++h) {
        const auto& est = day.hours[h];
        int np = src.phases.count();
        Eigen::VectorXd vfr(np), vfi(np), vtr(np), vti(np), dr, di;
        for (int p = 0; p < np; ++p) {
            vfr[p] = est.state.vr[src.from_bp[p]];
            vfi[p] = est.state.vi[src.from_bp[p]];
            vtr[p] = est.state.vr[src.to_bp[p]];
            vti[p] = est.state.vi[src.to_bp[p]];
        }
        iv::to_end_delivered(src, vfr, vfi, vtr, vti, est.state.ibr[net.source_branch],
                             est.state.ibi[net.source_branch], dr, di);
        auto phases = src.phases.list();
        auto sub_phases = net.bus_phases[net.substation].list();
        for (int p = 0; p < np; ++p) {
            size_t sp = std::find(sub_phases.begin(), sub_phases.end(), phases[p]) -
                        sub_phases.begin();
            rows.push_back({std::to_string(h), std::string(1, phase_char(phases[p])),
                            csv::num(est.source.v_mag_pu[sp]),
                            csv::num(est.source.angle_deg[sp]),
                            csv::num(net.pu_to_kw(iv::p_of(vtr[p], vti[p], dr[p], di[p]))),
                            csv::num(net.pu_to_kw(iv::q_of(vtr[p], vti[p], dr[p], di[p])))});
        }
    }
    csv::write_csv(path, {"hour", "phase", "v_mag_pu", "v_ang_deg", "p_kw", "q_kvar"}, rows);
}

std::vector<SnapshotInputs> read_profiles_csv(const PuNetwork& net, const std::string& path,
                                              const std::string& substation_path) {
    csv::Table t = csv::read_csv(path);
    int c_el = t.column("element_id"), c_kind = t.column("kind"), c_h = t.column("hour"),
        c_v = t.column("value_pu");

    std::unordered_map<std::string, int> load_bp, pv_bp;
    for (const auto& ld : net.loads)
        for (int bp : ld.bp) load_bp[ld.id + ":" + phase_char(net.bp_phase[bp])] = bp;
    for (const auto& pv : net.pvs)
        for (int bp : pv.bp) pv_bp[pv.id + ":" + phase_char(net.bp_phase[bp])] = bp;
    auto sub_phases = net.bus_phases[net.substation].list();

    std::vector<SnapshotInputs> hours(24, SnapshotInputs::zero(net));
    for (auto& in : hours) in.source = SourceSpec::balanced(net);

    for (const auto& row : t.rows) {
        int h = std::stoi(row[c_h]);
        if (h < 0 || h > 23) throw IngestError("profiles: hour out of range: " + row[c_h]);
        double v = std::stod(row[c_v]);
        const std::string& kind = row[c_kind];
        if (kind == "load_p" || kind == "load_q") {
            auto it = load_bp.find(row[c_el]);
            if (it == load_bp.end())
                throw IngestError("profiles: unknown load element " + row[c_el]);
            (kind == "load_p" ? hours[h].load_p : hours[h].load_q)[it->second] += v;
        } else if (kind == "pv_p") {
            auto it = pv_bp.find(row[c_el]);
            if (it == pv_bp.end())
                throw IngestError("profiles: unknown pv element " + row[c_el]);
            hours[h].pv_p[it->second] += v;
        } else if (kind.rfind("src_vmag_", 0) == 0 && kind.size() == 10) {
            Phase ph = kind[9] == 'a' ? Phase::A : (kind[9] == 'b' ? Phase::B : Phase::C);
            for (size_t sp = 0; sp < sub_phases.size(); ++sp)
                if (sub_phases[sp] == ph) hours[h].source.v_mag_pu[sp] = v;
        } else {
            throw IngestError("profiles: unknown kind " + kind);
        }
    }

    if (!substation_path.empty()) {
        csv::Table s = csv::read_csv(substation_path);
        int s_h = s.column("hour"), s_ph = s.column("phase"), s_ang = s.column("v_ang_deg");
        for (const auto& row : s.rows) {
            int h = std::stoi(row[s_h]);
            if (h < 0 || h > 23) continue;
            PhaseSet ps = PhaseSet::parse(row[s_ph]);
            for (size_t sp = 0; sp < sub_phases.size(); ++sp)
                if (ps.has(sub_phases[sp]))
                    hours[h].source.angle_deg[sp] = std::stod(row[s_ang]);
        }
    }
    return hours;
}

}  // namespace feedertk
