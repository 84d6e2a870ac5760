// Acceptance gate: one pass/fail line per criterion, exit code = number of
// failed criteria. Heavier than the unit suites; expect a few minutes.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "feedertk/csv.hpp"
#include "feedertk/estimator.hpp"
#include "feedertk/ingest.hpp"
#include "feedertk/ivkernel.hpp"
#include "feedertk/netmodel.hpp"
#include "feedertk/oracle.hpp"
#include "feedertk/report.hpp"
#include "feedertk/synth.hpp"
#include "test_support.hpp"

using namespace feedertk;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void criterion(int n, const std::string& name, bool ok, const std::string& detail) {
    std::printf("criterion %d [%s] %s: %s\n", n, ok ? "PASS" : "FAIL", name.c_str(),
                detail.c_str());
    if (!ok) ++g_failures;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

double vmag(const iv::NetworkState& st, int bp) { return std::hypot(st.vr[bp], st.vi[bp]); }

struct AcceptanceRun {
    SynthConfig cfg;
    SynthResult synth;
    fs::path dir;
    PuNetwork net;  // reloaded from the written topology (full pipeline)
    MeasurementSet ms;
    DayEstimate day;
    double est_seconds = 0;
    std::vector<SnapshotInputs> resim_inputs;
    TimeSeriesResult resim;
};

AcceptanceRun run_pipeline(const SynthConfig& cfg, const char* subdir) {
    AcceptanceRun r;
    r.cfg = cfg;
    r.synth = generate_feeder(cfg);
    r.dir = fs::temp_directory_path() / subdir;
    fs::create_directories(r.dir);
    write_synth_outputs(r.synth, cfg, r.dir.string());
    r.net = to_per_unit(load_network_file((r.dir / "topology.json").string()));
    r.ms = load_measurements(r.net, r.dir.string());
    auto t0 = Clock::now();
    r.day = estimate_day(r.net, r.ms);
    r.est_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    write_profiles_csv(r.net, r.day, (r.dir / "profiles.csv").string());
    write_substation_csv(r.net, r.day, (r.dir / "substation.csv").string());
    r.resim_inputs = read_profiles_csv(r.net, (r.dir / "profiles.csv").string(),
                                       (r.dir / "substation.csv").string());
    r.resim = solve_timeseries(r.net, r.resim_inputs);
    return r;
}

SynthConfig acceptance_config() {
    SynthConfig cfg;
    cfg.n_primary_buses = 271;  // 2 + 271 + 75 + 150 + 2 = 500 buses
    cfg.n_transformers = 75;
    cfg.loads_per_transformer = 2;
    cfg.n_primary_loads = 2;
    cfg.pv_fraction = 0.3;
    cfg.metered_fraction = 0.9;
    cfg.voltage_meter_fraction = 0.7;
    cfg.seed = 2024;
    return cfg;
}

// --------------------------------------------------------------------------

void criterion_1_2_3(const AcceptanceRun& r) {
    std::ostringstream d1, d2, d3;
    bool ok1 = r.day.failed_hours.empty() && r.resim.failed_hours.empty();
    bool ok2 = ok1, ok3 = ok1;
    if (!ok1) {
        d1 << r.day.failed_hours.size() << " estimation / " << r.resim.failed_hours.size()
           << " resimulation hour(s) failed";
        criterion(1, "estimator-oracle category consistency", false, d1.str());
        criterion(2, "estimator-oracle voltage consistency", false, d1.str());
        criterion(3, "clean round-trip recovery", false, d1.str());
        return;
    }

    // 1: category sums at the peak-demand hour, estimator state vs oracle
    // re-solve of the exported profiles, within 0.2% per category
    int peak = 0;
    for (int h = 1; h < 24; ++h)
        if (r.ms.feeder_head[h].p_total_kw > r.ms.feeder_head[peak].p_total_kw) peak = h;
    double worst_pct = 0;
    std::string worst_name;
    for (int c = 0; c < iv::kNumCategories; ++c) {
        for (bool reactive : {false, true}) {
            double a = reactive ? r.day.hours[peak].powers.category_q[c]
                                : r.day.hours[peak].powers.category_p[c];
            double b = reactive ? r.resim.hours[peak].powers.category_q[c]
                                : r.resim.hours[peak].powers.category_p[c];
            if (std::abs(b) < 1e-9) {
                if (std::abs(a - b) > 1e-9) worst_pct = 1e9;  // zero category must stay zero
                continue;
            }
            double pct = std::abs(a - b) / std::abs(b) * 100.0;
            if (pct > worst_pct) {
                worst_pct = pct;
                worst_name = iv::category_name(static_cast<iv::Category>(c));
            }
        }
    }
    double per_snapshot = r.est_seconds / 24.0;
    ok1 = worst_pct <= 0.2 && per_snapshot <= 60.0;
    d1 << "peak hour " << peak << ", worst category error " << worst_pct << "% (" << worst_name
       << "), " << per_snapshot << " s/snapshot";
    criterion(1, "estimator-oracle category consistency", ok1, d1.str());

    // 2: max |V| gap between estimator state and oracle re-solve, all hours
    double dv = 0;
    for (int h = 0; h < 24; ++h)
        for (int bp = 0; bp < r.net.n_bus_phase; ++bp)
            dv = std::max(dv,
                          std::abs(vmag(r.day.hours[h].state, bp) - vmag(r.resim.hours[h].state, bp)));
    ok2 = dv <= 1e-4;
    d2 << "max |V| difference " << dv << " pu over 24 hours";
    criterion(2, "estimator-oracle voltage consistency", ok2, d2.str());

    // 3: feeder-head totals are hard equalities; AMI voltage recovery RMS
    double head_res = 0;
    for (int h = 0; h < 24; ++h) {
        auto meas = snapshot_measurements(r.net, r.ms, h);
        const auto& p = r.day.hours[h].powers;
        head_res = std::max(head_res,
                            std::abs(-p.category_p[int(iv::Category::Source)] - meas.head_p_pu));
        head_res = std::max(head_res,
                            std::abs(-p.category_q[int(iv::Category::Source)] - meas.head_q_pu));
        int head_a = r.net.bus_phase_index(r.net.feeder_head, Phase::A);
        head_res = std::max(
            head_res, std::abs(vmag(r.day.hours[h].state, head_a) - meas.head_vmag_pu));
    }
    // per voltage meter: daily RMS of resimulated vs AMI-reported magnitudes
    std::vector<double> meter_rms;
    for (const auto& ld : r.net.loads) {
        if (!ld.has_voltage_meter) continue;
        for (int bp : ld.bp) {
            std::vector<double> m(24), y(24);
            bool have = true;
            for (int h = 0; h < 24; ++h) {
                m[h] = vmag(r.resim.hours[h].state, bp);
                double yv = -1;
                for (const auto& vr : r.ms.volts[h])
                    if (vr.bus_phase == bp) yv = vr.v_pu;
                if (yv < 0) have = false;
                y[h] = yv;
            }
            if (have) meter_rms.push_back(rms_daily(m, y).first);
        }
    }
    double rms_mean = 0, rms_max = 0;
    for (double v : meter_rms) {
        rms_mean += v;
        rms_max = std::max(rms_max, v);
    }
    rms_mean /= meter_rms.size();
    ok3 = head_res <= 1e-6 && rms_mean <= 0.5 && rms_max <= 1.4;
    d3 << "head residual " << head_res << " pu; voltage RMS over " << meter_rms.size()
       << " meters: mean " << rms_mean << "%, max " << rms_max << "%";
    criterion(3, "clean round-trip recovery", ok3, d3.str());
}

void criterion_4() {
    SynthConfig cfg = acceptance_config();
    cfg.noise_sigma_v_pu = 0.002;
    cfg.seed = 2025;
    AcceptanceRun r = run_pipeline(cfg, "feedertk_acc_noisy");
    std::ostringstream d;
    if (!r.day.failed_hours.empty() || !r.resim.failed_hours.empty()) {
        d << r.day.failed_hours.size() << " estimation / " << r.resim.failed_hours.size()
          << " resimulation hour(s) failed";
        criterion(4, "noisy-measurement robustness", false, d.str());
        return;
    }
    // per meter: daily RMS of resimulated voltage vs the true (noise-free) one
    std::vector<double> meter_rms;
    for (const auto& ld : r.net.loads) {
        if (!ld.has_voltage_meter) continue;
        for (int bp : ld.bp) {
            std::vector<double> m(24), y(24);
            for (int h = 0; h < 24; ++h) {
                m[h] = vmag(r.resim.hours[h].state, bp);
                y[h] = vmag(r.synth.truth.hours[h].state, bp);
            }
            meter_rms.push_back(rms_daily(m, y).first);
        }
    }
    std::sort(meter_rms.begin(), meter_rms.end());
    double median = meter_rms[meter_rms.size() / 2];
    bool ok = median <= 3 * cfg.noise_sigma_v_pu * 100.0;
    d << "median per-meter voltage RMS " << median << "% over " << meter_rms.size()
      << " meters (noise sigma 0.2%), no solver failures";
    criterion(4, "noisy-measurement robustness", ok, d.str());
}

void criterion_5() {
    using C = std::complex<double>;
    std::mt19937 gen(99);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> unp(1, 3);

    double worst = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        int np = unp(gen);
        PuBranch b;
        b.phases = PhaseSet(static_cast<uint8_t>((1u << np) - 1));
        b.R.setZero(np, np);
        b.X.setZero(np, np);
        b.Bsh.setZero(np, np);
        for (int i = 0; i < np; ++i)
            for (int j = 0; j < np; ++j) {
                b.R(i, j) = (i == j ? 0.3 : 0.05) * (1 + 0.5 * u(gen));
                b.X(i, j) = (i == j ? 0.6 : 0.15) * (1 + 0.5 * u(gen));
            }
        b.is_transformer = trial % 3 == 0;
        if (b.is_transformer) {
            b.tap = 1.0 + 0.1 * u(gen);
        } else {
            for (int i = 0; i < np; ++i) b.Bsh(i, i) = 0.1 * (1 + u(gen));
        }
        Eigen::VectorXd vfr(np), vfi(np), vtr(np), vti(np), ir(np), ii(np);
        for (int i = 0; i < np; ++i) {
            vfr[i] = 1 + 0.2 * u(gen);
            vfi[i] = 0.2 * u(gen);
            vtr[i] = 1 + 0.2 * u(gen);
            vti[i] = 0.2 * u(gen);
            ir[i] = u(gen);
            ii[i] = u(gen);
        }
        Eigen::VectorXd rr(np), ri(np), dr(np), di(np), fr(np), fi(np);
        iv::branch_flow_residual(b, vfr, vfi, vtr, vti, ir, ii, rr, ri);
        iv::to_end_delivered(b, vfr, vfi, vtr, vti, ir, ii, dr, di);
        iv::from_end_current(b, ir, ii, fr, fi);

        // independent reference in complex arithmetic
        Eigen::MatrixXcd Z = b.R.cast<C>() + C(0, 1) * b.X.cast<C>();
        Eigen::VectorXcd Vf = vfr.cast<C>() + C(0, 1) * vfi.cast<C>();
        Eigen::VectorXcd Vt = vtr.cast<C>() + C(0, 1) * vti.cast<C>();
        Eigen::VectorXcd I = ir.cast<C>() + C(0, 1) * ii.cast<C>();
        Eigen::VectorXcd Ysh = C(0, 1) * (0.5 * b.Bsh.diagonal()).cast<C>();
        Eigen::VectorXcd res = Z * (I - Ysh.cwiseProduct(Vf)) - Vf / b.tap + Vt;
        Eigen::VectorXcd del = I - Ysh.cwiseProduct(Vf + Vt);
        Eigen::VectorXcd from = I / b.tap;
        for (int i = 0; i < np; ++i) {
            worst = std::max(worst, std::abs(res[i].real() - rr[i]));
            worst = std::max(worst, std::abs(res[i].imag() - ri[i]));
            worst = std::max(worst, std::abs(del[i].real() - dr[i]));
            worst = std::max(worst, std::abs(del[i].imag() - di[i]));
            worst = std::max(worst, std::abs(from[i].real() - fr[i]));
            worst = std::max(worst, std::abs(from[i].imag() - fi[i]));
            // powers of V against conjugated I
            C s = Vf[i] * std::conj(I[i]);
            worst = std::max(worst,
                             std::abs(s.real() - iv::p_of(vfr[i], vfi[i], ir[i], ii[i])));
            worst = std::max(worst,
                             std::abs(s.imag() - iv::q_of(vfr[i], vfi[i], ir[i], ii[i])));
        }
    }
    bool ok_res = worst <= 1e-12;

    // analytic Jacobian of the estimation program vs central finite differences
    PuNetwork net = to_per_unit(load_network(testing::small_feeder_doc()));
    SnapshotMeasurements meas;
    meas.load_p_pu.assign(net.loads.size(), std::nullopt);
    meas.load_p_pu[0] = 0.004;
    meas.pv_p_pu.assign(net.pvs.size(), 0.002);
    meas.head_p_pu = 0.03;
    meas.head_q_pu = 0.008;
    meas.head_vmag_pu = 1.02;
    auto prob = make_snapshot_problem(net, meas, {});
    int nv = prob->num_vars(), nc = prob->num_cons();
    std::vector<int> rows, cols;
    prob->jacobian_structure(rows, cols);
    Eigen::VectorXd jv(rows.size()), cp(nc), cm(nc);
    double worst_j = 0;
    std::uniform_real_distribution<double> pw(-0.05, 0.05);
    for (int pt = 0; pt < 100; ++pt) {
        Eigen::VectorXd x(nv);
        for (int j = 0; j < nv; ++j) x[j] = (j < 2 * net.n_bus_phase ? 1.0 : 0.0) + pw(gen);
        prob->jacobian_values(x, jv);
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nc, nv);
        for (size_t k = 0; k < rows.size(); ++k) J(rows[k], cols[k]) += jv[k];
        const double h = 1e-6;
        for (int j = 0; j < nv; ++j) {
            Eigen::VectorXd xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            prob->constraints(xp, cp);
            prob->constraints(xm, cm);
            for (int i = 0; i < nc; ++i) {
                double fd = (cp[i] - cm[i]) / (2 * h);
                double rel = std::abs(fd - J(i, j)) / std::max(1.0, std::abs(J(i, j)));
                worst_j = std::max(worst_j, rel);
            }
        }
    }
    bool ok_jac = worst_j <= 1e-6;
    std::ostringstream d;
    d << "1000 randomized branches: worst residual/power gap " << worst
      << "; 100 Jacobian points: worst relative FD gap " << worst_j;
    criterion(5, "kernel correctness vs complex arithmetic", ok_res && ok_jac, d.str());
}

void criterion_6(const AcceptanceRun& acc) {
    // closed form: a single-phase chain sub -> head -> load collapses to one
    // series impedance; |V| at the load solves
    //   |V|^4 + (2(P r + Q x) - m^2) |V|^2 + (P^2 + Q^2)(r^2 + x^2) = 0
    PuNetwork n2 = to_per_unit(load_network(testing::single_phase_two_bus_doc()));
    SnapshotInputs in2 = SnapshotInputs::zero(n2);
    const double P = 0.05, Q = 0.02, vs = 1.03;
    in2.load_p[n2.loads[0].bp[0]] = P;
    in2.load_q[n2.loads[0].bp[0]] = Q;
    in2.source = SourceSpec::balanced(n2, vs);
    auto sol2 = solve_snapshot(n2, in2);
    double zb = 7.2 * 7.2 / 1.0;  // 51.84 ohm
    double r = 0.5184 / zb, x = 1.0368 / zb;
    double bq = 2 * (P * r + Q * x) - vs * vs;
    double cq = (P * P + Q * Q) * (r * r + x * x);
    double v2 = (-bq + std::sqrt(bq * bq - 4 * cq)) / 2;
    double gap2 = std::abs(vmag(sol2.state, n2.loads[0].bp[0]) - std::sqrt(v2));
    bool ok_closed = sol2.converged && gap2 <= 1e-10;

    // conservation on every converged acceptance hour; the category sums
    // accumulate the per-equation residual over ~1300 bus-phases, so solve
    // down to near machine precision for this check
    PowerFlowOptions tight;
    tight.tol = 1e-12;
    TimeSeriesResult tight_res = solve_timeseries(acc.net, acc.resim_inputs, tight);
    double worst_bal = 0;
    for (const auto& sol : tight_res.hours) {
        double p = 0, q = 0;
        for (int c = 0; c < iv::kNumCategories; ++c) {
            p += sol.powers.category_p[c];
            q += sol.powers.category_q[c];
        }
        worst_bal = std::max(worst_bal, std::max(std::abs(p), std::abs(q)));
    }
    bool ok_bal = worst_bal <= 1e-8;

    // flat-start iteration counts on generated feeders up to ~1000 buses
    int worst_it = 0;
    for (auto [npri, ntr] : {std::pair{10, 4}, {100, 30}, {600, 160}}) {
        SynthConfig cfg;
        cfg.n_primary_buses = npri;
        cfg.n_transformers = ntr;
        cfg.loads_per_transformer = 2;
        cfg.seed = 31 + npri;
        SynthResult res = generate_feeder(cfg);
        for (const auto& sol : res.truth.hours) worst_it = std::max(worst_it, sol.iterations);
    }
    for (const auto& sol : acc.resim.hours) worst_it = std::max(worst_it, sol.iterations);
    bool ok_it = worst_it <= 10;

    std::ostringstream d;
    d << "closed-form gap " << gap2 << " pu; worst power imbalance " << worst_bal
      << " pu; worst flat-start iterations " << worst_it;
    criterion(6, "oracle correctness", ok_closed && ok_bal && ok_it, d.str());
}

void criterion_7() {
    bool ok = true;
    std::ostringstream d;
    // gross demand reconstruction is exact arithmetic
    ok = ok && gross_load(3.25, 0.5, 1.0) == 3.75;
    ok = ok && gross_load(0.0, 2.5, 3.0) == 0.5;

    auto rec = [](int minute, int iv, double kwh) {
        MeterEnergyRecord r;
        r.meter_id = "m";
        r.bus = "b";
        r.hour = 7;
        r.minute = minute;
        r.interval_minutes = iv;
        r.energy_kwh = kwh;
        return r;
    };
    // four 15-minute readings aggregate to the same hourly power as one
    // 60-minute reading of their total
    auto q = derive_hourly_power({rec(0, 15, 0.25), rec(15, 15, 0.25), rec(30, 15, 0.25),
                                  rec(45, 15, 0.25)});
    auto full = derive_hourly_power({rec(0, 60, 1.0)});
    ok = ok && q.has_value() && full.has_value() && *q == *full;
    // a missing quarter is a gap, never a zero fill
    auto gap = derive_hourly_power({rec(0, 15, 0.25), rec(15, 15, 0.25), rec(30, 15, 0.25)});
    ok = ok && !gap.has_value();

    // partition invariant: every load-hour is metered or unmetered, never
    // both, and a gap demotes exactly that hour
    PuNetwork net = to_per_unit(load_network(testing::small_feeder_doc()));
    std::vector<MeterEnergyRecord> energy;
    for (int h = 0; h < 24; ++h) {
        if (h == 9) continue;  // gap hour for the metered load
        MeterEnergyRecord r = rec(0, 60, 0.5);
        r.meter_id = "m_ld1";
        r.bus = net.bus_ids[net.loads[0].bus];
        r.hour = h;
        energy.push_back(r);
    }
    for (int h = 0; h < 24; ++h) {  // the PV needs production data every hour
        MeterEnergyRecord r = rec(0, 60, 0.1);
        r.meter_id = "m_pv";
        r.bus = net.bus_ids[net.pvs[0].bus];
        r.hour = h;
        r.channel = MeterChannel::PvProduction;
        energy.push_back(r);
    }
    std::array<FeederHeadRecord, 24> das{};
    for (int h = 0; h < 24; ++h) das[h] = {h, 30.0, 8.0, 1.02};
    MeasurementSet ms = build_measurement_set(net, energy, {}, das);
    int metered = 0, unmetered = 0;
    for (int h = 0; h < 24; ++h)
        for (size_t li = 0; li < net.loads.size(); ++li)
            (ms.metered(h, static_cast<int>(li)) ? metered : unmetered)++;
    ok = ok && metered + unmetered == 24 * static_cast<int>(net.loads.size());
    ok = ok && metered == 23;  // one metered load, one gap hour
    ok = ok && !ms.metered(9, 0) && ms.metered(8, 0);
    d << "gross-load, 15/60-minute equivalence, gap demotion, and partition checks all exact";
    criterion(7, "measurement-derivation unit suite", ok, d.str());
}

void criterion_8() {
    bool ok = true;
    double worst = 0;
    // five head readings: the phase-a squared-magnitude pin and the +/-20%
    // band at phases b/c, the +/-25% source window, the +/-3 degree angle
    // window -- all against literal hand-computed values
    struct SpotM {
        double m, lo_sq, hi_sq, src_lo, src_hi;
    };
    const SpotM spots[] = {
        // ((1-0.2)m)^2, ((1+0.2)m)^2, 0.75m, 1.25m
        {0.94, 0.56550400, 1.27238400, 0.705000, 1.175000},
        {0.97, 0.60217600, 1.35489600, 0.727500, 1.212500},
        {1.00, 0.64000000, 1.44000000, 0.750000, 1.250000},
        {1.02, 0.66585600, 1.49817600, 0.765000, 1.275000},
        {1.05, 0.70560000, 1.58760000, 0.787500, 1.312500},
    };
    PuNetwork net = to_per_unit(load_network(testing::small_feeder_doc()));
    SnapshotIndexer ix(net);
    for (const auto& s : spots) {
        SnapshotMeasurements meas;
        meas.load_p_pu.assign(net.loads.size(), std::nullopt);
        meas.pv_p_pu.assign(net.pvs.size(), 0.0);
        meas.head_p_pu = 0.02;
        meas.head_q_pu = 0.005;
        meas.head_vmag_pu = s.m;
        auto prob = make_snapshot_problem(net, meas, {});
        Eigen::VectorXd xl(prob->num_vars()), xu(prob->num_vars()), cl(prob->num_cons()),
            cu(prob->num_cons());
        prob->bounds(xl, xu, cl, cu);
        bool pin = false;
        int banded = 0;
        for (int i = 0; i < prob->num_cons(); ++i) {
            if (cl[i] == cu[i] && std::abs(cl[i] - s.m * s.m) < 1e-12) pin = true;
            if (std::abs(cl[i] - s.lo_sq) < 1e-9 && std::abs(cu[i] - s.hi_sq) < 1e-9) ++banded;
        }
        ok = ok && pin && banded == 2;  // phases b and c
        for (int sp = 0; sp < 3; ++sp) {
            worst = std::max(worst, std::abs(xl[ix.idx_src_vmag(sp)] - s.src_lo));
            worst = std::max(worst, std::abs(xu[ix.idx_src_vmag(sp)] - s.src_hi));
        }
        // angle window: nominal +/- 0.05235987755982988 rad (3 degrees)
        const double nominal[3] = {0.0, -2.0943951023931953, 2.0943951023931953};
        for (int sp = 0; sp < 3; ++sp) {
            worst = std::max(worst, std::abs(xl[ix.idx_src_theta(sp)] -
                                             (nominal[sp] - 0.05235987755982988)));
            worst = std::max(worst, std::abs(xu[ix.idx_src_theta(sp)] -
                                             (nominal[sp] + 0.05235987755982988)));
        }
    }
    ok = ok && worst <= 1e-12;

    // five power-factor corridors: the reactive rows carry tan(acos(pf)),
    // checked against hand-computed sqrt(1-pf^2)/pf
    struct SpotPf {
        double pf, tan;
    };
    const SpotPf pfs[] = {
        {0.85, 0.6197443384031023},  {0.88, 0.5397428221380871},
        {0.90, 0.48432210483785254}, {0.95, 0.3286841051788632},
        {0.98, 0.20305866063400416},
    };
    nlohmann::json doc = nlohmann::json::parse(testing::small_feeder_doc());
    for (const auto& s : pfs) {
        for (auto& ld : doc.at("loads")) {
            ld["pf_min"] = s.pf;
            ld["pf_max"] = 1.0;
        }
        PuNetwork n2 = to_per_unit(load_network(doc.dump()));
        SnapshotMeasurements meas;
        meas.load_p_pu.assign(n2.loads.size(), std::nullopt);
        meas.pv_p_pu.assign(n2.pvs.size(), 0.0);
        meas.head_p_pu = 0.02;
        meas.head_q_pu = 0.005;
        meas.head_vmag_pu = 1.0;
        auto prob = make_snapshot_problem(n2, meas, {});
        SnapshotIndexer ix2(n2);
        // evaluate the constraints with exactly one load carrying P=0.01,
        // Q=0.003: the lower-corridor row must read Q - tan(acos pf) * P
        Eigen::VectorXd x = Eigen::VectorXd::Zero(prob->num_vars());
        x[ix2.idx_load_p(0, 0)] = 0.01;
        x[ix2.idx_load_q(0, 0)] = 0.003;
        Eigen::VectorXd c(prob->num_cons());
        prob->constraints(x, c);
        double expect = 0.003 - s.tan * 0.01;
        bool found = false;
        for (int i = 0; i < prob->num_cons(); ++i)
            if (std::abs(c[i] - expect) < 1e-15) found = true;
        ok = ok && found;
    }
    criterion(8, "constraint-bound fidelity on spot cases", ok,
              ok ? "10 hand-computed spot cases match exactly"
                 : "a generated bound deviates from its hand-computed value");
}

void criterion_9() {
    SynthConfig cfg;
    cfg.n_primary_buses = 10;
    cfg.n_transformers = 4;
    cfg.loads_per_transformer = 2;
    cfg.n_primary_loads = 1;
    cfg.seed = 7;
    bool ok = true;
    fs::path d1, d2;
    for (int run = 0; run < 2; ++run) {
        fs::path dir = fs::temp_directory_path() /
                       (run == 0 ? "feedertk_acc_det_a" : "feedertk_acc_det_b");
        fs::create_directories(dir);
        (run == 0 ? d1 : d2) = dir;
        SynthResult res = generate_feeder(cfg);
        write_synth_outputs(res, cfg, dir.string());
        PuNetwork net = to_per_unit(load_network_file((dir / "topology.json").string()));
        MeasurementSet ms = load_measurements(net, dir.string());
        DayEstimate day = estimate_day(net, ms);
        write_profiles_csv(net, day, (dir / "profiles.csv").string());
        write_substation_csv(net, day, (dir / "substation.csv").string());
        auto inputs = read_profiles_csv(net, (dir / "profiles.csv").string(),
                                        (dir / "substation.csv").string());
        TimeSeriesResult resim = solve_timeseries(net, inputs);
        DaySolution est = day_solution(net, day);
        DaySolution ref = day_solution(net, inputs, resim);
        write_report_files(net, build_match_report(net, est, ref), est, dir.string());
    }
    for (const char* f :
         {"topology.json", "ami_energy.csv", "ami_voltage.csv", "das.csv", "ground_truth.json",
          "profiles.csv", "substation.csv", "report.json", "category_table.csv", "v_rms.csv",
          "feeder_characteristics.csv", "summary.txt"})
        if (slurp(d1 / f) != slurp(d2 / f)) ok = false;
    criterion(9, "seeded end-to-end determinism", ok,
              ok ? "two identical runs produced byte-identical exports and reports"
                 : "a repeated run produced different bytes");
}

}  // namespace

int main() {
    std::printf("acceptance feeder: 500 buses, 152 loads, 30%% PV, 90%% metered\n");
    AcceptanceRun acc = run_pipeline(acceptance_config(), "feedertk_acc_clean");
    criterion_1_2_3(acc);
    criterion_4();
    criterion_5();
    criterion_6(acc);
    criterion_7();
    criterion_8();
    criterion_9();
    std::printf("%s (%d of 9 criteria failed)\n", g_failures ? "FAILURE" : "SUCCESS", g_failures);
    return g_failures;
}
