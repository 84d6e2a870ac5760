#include "feedertk/ivkernel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace feedertk::iv {

NetworkState NetworkState::zero(const PuNetwork& net) {
    NetworkState st;
    st.vr = Eigen::VectorXd::Zero(net.n_bus_phase);
    st.vi = Eigen::VectorXd::Zero(net.n_bus_phase);
    for (const auto& b : net.branches) {
        st.ibr.emplace_back(Eigen::VectorXd::Zero(b.phases.count()));
        st.ibi.emplace_back(Eigen::VectorXd::Zero(b.phases.count()));
    }
    return st;
}

void branch_flow_residual(const PuBranch& b, const Eigen::VectorXd& vfr,
                          const Eigen::VectorXd& vfi, const Eigen::VectorXd& vtr,
                          const Eigen::VectorXd& vti, const Eigen::VectorXd& ir,
                          const Eigen::VectorXd& ii, Eigen::VectorXd& out_r,
                          Eigen::VectorXd& out_i) {
    const int n = b.phases.count();
    if (vfr.size() != n || vtr.size() != n || ir.size() != n)
        throw ModelError("branch '" + b.id + "': kernel dimension mismatch");
    // Series current: the branch variable minus the from-side half charging.
    Eigen::VectorXd isr = ir, isi = ii;
    if (b.Bsh.cwiseAbs().maxCoeff() > 0) {
        isr += 0.5 * (b.Bsh * vfi);
        isi -= 0.5 * (b.Bsh * vfr);
    }
    out_r = b.R * isr - b.X * isi - vfr / b.tap + vtr;
    out_i = b.R * isi + b.X * isr - vfi / b.tap + vti;
}

void from_end_current(const PuBranch& b, const Eigen::VectorXd& ir, const Eigen::VectorXd& ii,
                      Eigen::VectorXd& out_r, Eigen::VectorXd& out_i) {
    out_r = ir / b.tap;
    out_i = ii / b.tap;
}

void to_end_delivered(const PuBranch& b, const Eigen::VectorXd& vfr, const Eigen::VectorXd& vfi,
                      const Eigen::VectorXd& vtr, const Eigen::VectorXd& vti,
                      const Eigen::VectorXd& ir, const Eigen::VectorXd& ii, Eigen::VectorXd& out_r,
                      Eigen::VectorXd& out_i) {
    out_r = ir;
    out_i = ii;
    if (b.Bsh.cwiseAbs().maxCoeff() > 0) {
        out_r += 0.5 * (b.Bsh * (vfi + vti));
        out_i -= 0.5 * (b.Bsh * (vfr + vtr));
    }
}

namespace {

void gather(const Eigen::VectorXd& v, const std::vector<int>& idx, Eigen::VectorXd& out) {
    out.resize(static_cast<Eigen::Index>(idx.size()));
    for (size_t k = 0; k < idx.size(); ++k) out[k] = v[idx[k]];
}

}  // namespace

void accumulate_injections(const PuNetwork& net, const NetworkState& st, Eigen::VectorXd& inj_r,
                           Eigen::VectorXd& inj_i) {
    inj_r = Eigen::VectorXd::Zero(net.n_bus_phase);
    inj_i = Eigen::VectorXd::Zero(net.n_bus_phase);
    Eigen::VectorXd vfr, vfi, vtr, vti, cr, ci;
    for (size_t bi = 0; bi < net.branches.size(); ++bi) {
        const PuBranch& b = net.branches[bi];
        from_end_current(b, st.ibr[bi], st.ibi[bi], cr, ci);
        for (size_t k = 0; k < b.from_bp.size(); ++k) {
            inj_r[b.from_bp[k]] += cr[k];
            inj_i[b.from_bp[k]] += ci[k];
        }
        gather(st.vr, b.from_bp, vfr);
        gather(st.vi, b.from_bp, vfi);
        gather(st.vr, b.to_bp, vtr);
        gather(st.vi, b.to_bp, vti);
        to_end_delivered(b, vfr, vfi, vtr, vti, st.ibr[bi], st.ibi[bi], cr, ci);
        for (size_t k = 0; k < b.to_bp.size(); ++k) {
            inj_r[b.to_bp[k]] -= cr[k];
            inj_i[b.to_bp[k]] -= ci[k];
        }
    }
}

void injection_residual(const PuNetwork& net, const NetworkState& st, const Eigen::VectorXd& inj_r,
                        const Eigen::VectorXd& inj_i, Eigen::VectorXd& out_r,
                        Eigen::VectorXd& out_i) {
    Eigen::VectorXd sum_r, sum_i;
    accumulate_injections(net, st, sum_r, sum_i);
    out_r = inj_r - sum_r;
    out_i = inj_i - sum_i;
}

std::vector<double> capacitor_q(const PuCapacitor& cap, const Eigen::VectorXd& vr,
                                const Eigen::VectorXd& vi) {
    std::vector<double> q(cap.bp.size());
    for (size_t k = 0; k < cap.bp.size(); ++k) {
        double a = vr[cap.bp[k]], b = vi[cap.bp[k]];
        q[k] = cap.b_pu[k] * (a * a + b * b);
    }
    return q;
}

InjectionTerms InjectionTerms::zero(const PuNetwork& net) {
    InjectionTerms t;
    t.p = Eigen::VectorXd::Zero(net.n_bus_phase);
    t.q = Eigen::VectorXd::Zero(net.n_bus_phase);
    return t;
}

void power_balance_residual(const PuNetwork& net, const InjectionTerms& terms,
                            const Eigen::VectorXd& vr, const Eigen::VectorXd& vi,
                            const Eigen::VectorXd& inj_r, const Eigen::VectorXd& inj_i,
                            bool include_capacitors, Eigen::VectorXd& out_p,
                            Eigen::VectorXd& out_q) {
    out_p.resize(net.n_bus_phase);
    out_q.resize(net.n_bus_phase);
    for (int i = 0; i < net.n_bus_phase; ++i) {
        out_p[i] = terms.p[i] - p_of(vr[i], vi[i], inj_r[i], inj_i[i]);
        out_q[i] = terms.q[i] - q_of(vr[i], vi[i], inj_r[i], inj_i[i]);
    }
    if (include_capacitors)
        for (const auto& cap : net.capacitors) {
            auto q = capacitor_q(cap, vr, vi);
            for (size_t k = 0; k < cap.bp.size(); ++k) out_q[cap.bp[k]] += q[k];
        }
}

const char* category_name(Category c) {
    switch (c) {
        case Category::Source: return "source";
        case Category::Lines: return "lines";
        case Category::Capacitors: return "capacitors";
        case Category::Loads: return "loads";
        case Category::Transformers: return "transformers";
        case Category::Pvs: return "pvs";
    }
    return "?";
}

ElementPowers element_powers(const PuNetwork& net, const NetworkState& st,
                             const Eigen::VectorXd& load_p_bp, const Eigen::VectorXd& load_q_bp,
                             const Eigen::VectorXd& pv_p_bp) {
    ElementPowers ep;
    Eigen::VectorXd vfr, vfi, vtr, vti, fr, fi, dr, di;
    for (size_t bi = 0; bi < net.branches.size(); ++bi) {
        const PuBranch& b = net.branches[bi];
        gather(st.vr, b.from_bp, vfr);
        gather(st.vi, b.from_bp, vfi);
        gather(st.vr, b.to_bp, vtr);
        gather(st.vi, b.to_bp, vti);
        from_end_current(b, st.ibr[bi], st.ibi[bi], fr, fi);
        to_end_delivered(b, vfr, vfi, vtr, vti, st.ibr[bi], st.ibi[bi], dr, di);
        double p_send = 0, q_send = 0, p_recv = 0, q_recv = 0;
        for (int k = 0; k < b.phases.count(); ++k) {
            p_send += p_of(vfr[k], vfi[k], fr[k], fi[k]);
            q_send += q_of(vfr[k], vfi[k], fr[k], fi[k]);
            p_recv += p_of(vtr[k], vti[k], dr[k], di[k]);
            q_recv += q_of(vtr[k], vti[k], dr[k], di[k]);
        }
        if (b.is_source) {
            // Receiving (feeder-head) end power, listed as production.
            ep.source = {b.id, -p_recv, -q_recv};
            ep.category_p[int(Category::Source)] = -p_recv;
            ep.category_q[int(Category::Source)] = -q_recv;
            continue;
        }
        ElementPowers::Entry e;
        e.id = b.id;
        e.p = p_send - p_recv;
        e.q = q_send - q_recv;
        Category cat = Category::Lines;
        if (b.is_transformer) {
            e.p += b.no_load_loss_pu * b.phases.count();
            cat = Category::Transformers;
        }
        ep.category_p[int(cat)] += e.p;
        ep.category_q[int(cat)] += e.q;
        ep.branches.push_back(std::move(e));
    }
    for (const auto& cap : net.capacitors) {
        auto q = capacitor_q(cap, st.vr, st.vi);
        double qt = 0;
        for (double v : q) qt += v;
        ep.capacitors.push_back({cap.id, 0.0, -qt});
        ep.category_q[int(Category::Capacitors)] -= qt;
    }
    ep.category_p[int(Category::Loads)] = load_p_bp.sum();
    ep.category_q[int(Category::Loads)] = load_q_bp.sum();
    ep.category_p[int(Category::Pvs)] = -pv_p_bp.sum();
    return ep;
}

int branch_residual_size(const PuNetwork& net) {
    int n = 0;
    for (const auto& b : net.branches) n += 2 * b.phases.count();
    return n;
}

namespace {

void branch_residual_at(const PuNetwork& net, const NetworkState& st, size_t bi, int offset,
                        Eigen::VectorXd& out) {
    const PuBranch& b = net.branches[bi];
    Eigen::VectorXd vfr, vfi, vtr, vti, rr, ri;
    gather(st.vr, b.from_bp, vfr);
    gather(st.vi, b.from_bp, vfi);
    gather(st.vr, b.to_bp, vtr);
    gather(st.vi, b.to_bp, vti);
    branch_flow_residual(b, vfr, vfi, vtr, vti, st.ibr[bi], st.ibi[bi], rr, ri);
    out.segment(offset, rr.size()) = rr;
    out.segment(offset + rr.size(), ri.size()) = ri;
}

std::vector<int> branch_offsets(const PuNetwork& net) {
    std::vector<int> off(net.branches.size());
    int n = 0;
    for (size_t i = 0; i < net.branches.size(); ++i) {
        off[i] = n;
        n += 2 * net.branches[i].phases.count();
    }
    return off;
}

}  // namespace

void all_branch_flow_residuals_serial(const PuNetwork& net, const NetworkState& st,
                                      Eigen::VectorXd& out) {
    auto off = branch_offsets(net);
    out.resize(branch_residual_size(net));
    for (size_t bi = 0; bi < net.branches.size(); ++bi) branch_residual_at(net, st, bi, off[bi], out);
}

void all_branch_flow_residuals(const PuNetwork& net, const NetworkState& st, Eigen::VectorXd& out) {
    auto off = branch_offsets(net);
    out.resize(branch_residual_size(net));
    const int nb = static_cast<int>(net.branches.size());
#pragma omp parallel for schedule(static)
    for (int bi = 0; bi < nb; ++bi) branch_residual_at(net, st, bi, off[bi], out);
}

}  // namespace feedertk::iv
