#include "feedertk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "feedertk/csv.hpp"
#include "feedertk/ivkernel.hpp"

namespace feedertk {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string pad_id(const char* prefix, int n, int width = 3) {
    std::string s = std::to_string(n);
    while (static_cast<int>(s.size()) < width) s = "0" + s;
    return std::string(prefix) + s;
}

Eigen::MatrixXd coupled(int n, double self, double mutual) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(n, n, mutual);
    m.diagonal().setConstant(self);
    return m;
}

struct Rng {
    std::mt19937_64 gen;
    explicit Rng(uint64_t seed) : gen(seed) {}
    double uni(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
    int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(gen); }
    bool flip(double p) { return uni(0.0, 1.0) < p; }
    double gauss(double sigma) { return std::normal_distribution<double>(0.0, sigma)(gen); }
};

// True hourly operating point in physical units, kept alongside the per-unit
// SnapshotInputs so the measurement files can be written without conversions
// scattered around.
struct TruthProfiles {
    // [load][hour]: bus-level demand, kW; q follows the per-load power factor
    std::vector<std::array<double, 24>> load_kw;
    std::vector<double> load_pf;
    // [pv][hour]: production, kW
    std::vector<std::array<double, 24>> pv_kw;
    // [hour][phase]
    std::array<std::array<double, 3>, 24> src_vmag;
    std::array<std::array<double, 3>, 24> src_angle_deg;
};

}  // namespace

std::vector<double> day_shape_load(const std::string& name) {
    if (name == "summer_peak")
        return {0.45, 0.42, 0.40, 0.38, 0.38, 0.40, 0.48, 0.55, 0.60, 0.63, 0.66, 0.70,
                0.74, 0.78, 0.82, 0.88, 0.93, 0.98, 1.00, 0.97, 0.90, 0.78, 0.62, 0.52};
    if (name == "spring_max_gen")
        return {0.50, 0.47, 0.45, 0.44, 0.44, 0.46, 0.52, 0.58, 0.56, 0.52, 0.48, 0.46,
                0.45, 0.45, 0.46, 0.50, 0.56, 0.65, 0.72, 0.70, 0.65, 0.60, 0.55, 0.52};
    throw ModelError("unknown day shape '" + name + "'");
}

std::vector<double> day_shape_pv(const std::string& name) {
    (void)day_shape_load(name);  // validate the name
    return {0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.05, 0.18, 0.38, 0.58, 0.75, 0.88,
            0.97, 1.00, 0.95, 0.84, 0.66, 0.44, 0.22, 0.06, 0.0,  0.0,  0.0,  0.0};
}

static NetworkModel build_model(const SynthConfig& cfg, Rng& rng) {
    NetworkModel m;
    m.base_mva = 1.0;
    const double kv_pri = 7.2, kv_sec = 0.24;
    const PhaseSet abc = PhaseSet::parse("abc");

    m.buses.push_back({"sub", BusKind::Substation, abc, kv_pri});
    m.buses.push_back({"head", BusKind::FeederHead, abc, kv_pri});
    m.lines.push_back({"src", "sub", "head", abc, coupled(3, 0.02, 0.005), coupled(3, 0.12, 0.04),
                       Eigen::MatrixXd::Zero(3, 3)});

    // Radial primary: mostly a trunk, with laterals branching off earlier buses.
    std::vector<std::string> primary;
    for (int i = 0; i < cfg.n_primary_buses; ++i) {
        std::string id = pad_id("p", i + 1);
        std::string parent = primary.empty() ? "head"
                             : rng.flip(0.7)  ? primary.back()
                                              : primary[rng.pick(static_cast<int>(primary.size()))];
        m.buses.push_back({id, BusKind::Primary, abc, kv_pri});
        double km = rng.uni(0.05, 0.4);
        m.lines.push_back({pad_id("ln", i + 1), parent, id, abc, coupled(3, 0.19 * km, 0.06 * km),
                           coupled(3, 0.39 * km, 0.17 * km),
                           coupled(3, 3.0 * km, 0.0)});
        primary.push_back(id);
    }

    int n_caps = std::max(1, cfg.n_primary_buses / 120);
    for (int i = 0; i < n_caps; ++i) {
        const std::string& bus = primary[rng.pick(static_cast<int>(primary.size()))];
        double b = rng.uni(40.0, 120.0);
        m.capacitors.push_back({pad_id("cap", i + 1, 2), bus, abc, {b, b, b}});
    }

    // Distribution transformers on distinct primary buses, each feeding a
    // small single-phase secondary with service-drop loads.
    std::vector<int> order(primary.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.gen);
    int n_load = 0, n_pv = 0;
    for (int t = 0; t < cfg.n_transformers; ++t) {
        const std::string& pri = primary[order[t % order.size()]];
        Phase ph = static_cast<Phase>(rng.pick(3));
        PhaseSet ps(static_cast<uint8_t>(1u << static_cast<int>(ph)));
        std::string sec = pad_id("s", t + 1);
        m.buses.push_back({sec, BusKind::Secondary, ps, kv_sec});
        Eigen::MatrixXd r(1, 1), x(1, 1);
        r << rng.uni(8.0, 15.0);
        x << rng.uni(25.0, 45.0);
        m.transformers.push_back(
            {pad_id("t", t + 1), pri, sec, ps, r, x, rng.uni(0.02, 0.08), kv_pri / kv_sec});
        for (int k = 0; k < cfg.loads_per_transformer; ++k) {
            ++n_load;
            std::string lb = pad_id("l", n_load);
            m.buses.push_back({lb, BusKind::Load, ps, kv_sec});
            Eigen::MatrixXd sr(1, 1), sx(1, 1), sy = Eigen::MatrixXd::Zero(1, 1);
            sr << rng.uni(0.01, 0.03);
            sx << rng.uni(0.005, 0.012);
            m.lines.push_back({pad_id("svc", n_load), sec, lb, ps, sr, sx, sy});
            bool metered = rng.flip(cfg.metered_fraction);
            bool vmeter = metered && rng.flip(cfg.voltage_meter_fraction);
            m.loads.push_back({pad_id("ld", n_load), lb, ps, metered, vmeter, 0.85, 1.0});
            if (rng.flip(cfg.pv_fraction))
                m.pvs.push_back({pad_id("pv", ++n_pv), lb, ps, 0.0});  // rating set later
        }
    }

    // A few three-phase loads tapped straight off the primary.
    for (int k = 0; k < cfg.n_primary_loads; ++k) {
        ++n_load;
        std::string lb = pad_id("l", n_load);
        const std::string& pri = primary[rng.pick(static_cast<int>(primary.size()))];
        m.buses.push_back({lb, BusKind::Load, abc, kv_pri});
        double km = rng.uni(0.02, 0.1);
        m.lines.push_back({pad_id("tap", k + 1, 2), pri, lb, abc,
                           coupled(3, 0.19 * km, 0.06 * km), coupled(3, 0.39 * km, 0.17 * km),
                           Eigen::MatrixXd::Zero(3, 3)});
        bool metered = rng.flip(cfg.metered_fraction);
        bool vmeter = metered && rng.flip(cfg.voltage_meter_fraction);
        m.loads.push_back({pad_id("ld", n_load), lb, abc, metered, vmeter, 0.85, 1.0});
        if (rng.flip(cfg.pv_fraction)) m.pvs.push_back({pad_id("pv", ++n_pv), lb, abc, 0.0});
    }
    return m;
}

static TruthProfiles draw_profiles(const SynthConfig& cfg, NetworkModel& model, Rng& rng) {
    TruthProfiles tp;
    auto lshape = day_shape_load(cfg.day_shape);
    auto pshape = day_shape_pv(cfg.day_shape);
    bool spring = cfg.day_shape == "spring_max_gen";

    std::vector<double> peak(model.loads.size());
    tp.load_kw.resize(model.loads.size());
    tp.load_pf.resize(model.loads.size());
    for (size_t i = 0; i < model.loads.size(); ++i) {
        double mult = model.loads[i].phases.count() == 3 ? 3.0 : 1.0;
        peak[i] = mult * rng.uni(cfg.load_peak_kw_min, cfg.load_peak_kw_max);
        tp.load_pf[i] = rng.uni(cfg.pf_min, cfg.pf_max);
        for (int h = 0; h < 24; ++h) tp.load_kw[i][h] = peak[i] * lshape[h] * rng.uni(0.9, 1.0);
    }

    std::unordered_map<std::string, double> peak_at_bus;
    for (size_t i = 0; i < model.loads.size(); ++i) peak_at_bus[model.loads[i].bus] = peak[i];
    tp.pv_kw.resize(model.pvs.size());
    for (size_t i = 0; i < model.pvs.size(); ++i) {
        // sized so a spring day drives midday net load at PV homes negative
        model.pvs[i].rated_kw = peak_at_bus[model.pvs[i].bus] * (spring ? 2.2 : 0.9);
        for (int h = 0; h < 24; ++h)
            tp.pv_kw[i][h] = model.pvs[i].rated_kw * pshape[h] * rng.uni(0.92, 1.0);
    }

    std::array<double, 3> mag_off, ang_off;
    for (int p = 0; p < 3; ++p) {
        mag_off[p] = rng.uni(-0.004, 0.004);
        ang_off[p] = rng.uni(-1.5, 1.5);
    }
    const double nominal[3] = {0.0, -120.0, 120.0};
    for (int h = 0; h < 24; ++h) {
        double base = 1.025 + 0.01 * std::sin(2.0 * kPi * (h - 6) / 24.0);
        for (int p = 0; p < 3; ++p) {
            tp.src_vmag[h][p] = base + mag_off[p] + rng.uni(-0.001, 0.001);
            tp.src_angle_deg[h][p] = nominal[p] + ang_off[p] + rng.uni(-0.2, 0.2);
        }
    }
    return tp;
}

static std::vector<SnapshotInputs> to_inputs(const PuNetwork& net, const NetworkModel& model,
                                             const TruthProfiles& tp, double load_scale) {
    std::vector<SnapshotInputs> hours(24, SnapshotInputs::zero(net));
    auto src_phases = net.bus_phases[net.substation].list();
    for (int h = 0; h < 24; ++h) {
        SnapshotInputs& in = hours[h];
        for (size_t li = 0; li < net.loads.size(); ++li) {
            const PuLoad& ld = net.loads[li];
            int np = static_cast<int>(ld.bp.size());
            double p = net.kw_to_pu(tp.load_kw[li][h] * load_scale) / np;
            double q = p * std::tan(std::acos(tp.load_pf[li]));
            for (int bp : ld.bp) {
                in.load_p[bp] = p;
                in.load_q[bp] = q;
            }
        }
        for (size_t pi = 0; pi < net.pvs.size(); ++pi) {
            const PuPv& pv = net.pvs[pi];
            double p = net.kw_to_pu(tp.pv_kw[pi][h]) / static_cast<int>(pv.bp.size());
            for (int bp : pv.bp) in.pv_p[bp] = p;
        }
        in.source.v_mag_pu.clear();
        in.source.angle_deg.clear();
        for (Phase ph : src_phases) {
            in.source.v_mag_pu.push_back(tp.src_vmag[h][static_cast<int>(ph)]);
            in.source.angle_deg.push_back(tp.src_angle_deg[h][static_cast<int>(ph)]);
        }
        (void)model;
    }
    return hours;
}

SynthResult generate_feeder(const SynthConfig& cfg) {
    Rng rng(cfg.seed);
    SynthResult res;
    res.model = build_model(cfg, rng);
    TruthProfiles tp = draw_profiles(cfg, res.model, rng);  // also sizes the PVs
    // Round-tripping through the document form runs the full validation pass
    // and fills the derived source/feeder-head indices.
    res.model = load_network(export_network(res.model));
    res.net = to_per_unit(res.model);

    double scale = 1.0;
    for (int attempt = 0; attempt < 5; ++attempt) {
        res.truth_inputs = to_inputs(res.net, res.model, tp, scale);
        res.truth = solve_timeseries(res.net, res.truth_inputs);
        bool ok = res.truth.failed_hours.empty();
        for (const auto& sol : res.truth.hours) {
            if (sol.state.vr.size() != res.net.n_bus_phase) continue;  // failed hour
            for (int bp = 0; ok && bp < res.net.n_bus_phase; ++bp) {
                double v = std::hypot(sol.state.vr[bp], sol.state.vi[bp]);
                ok = v >= 0.8 && v <= 1.3;
            }
        }
        if (ok) {
            // record the truth actually used, including the scale
            if (scale != 1.0)
                for (auto& row : tp.load_kw)
                    for (double& v : row) v *= scale;
            return res;
        }
        scale *= 0.7;  // overloaded: shed load and try again
    }
    throw SolverError("synthetic feeder did not converge within allowed load sheddings");
}

// ---------------------------------------------------------------------------
// Output files

static std::string stamp(int hour, int minute) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "2024-06-21T%02d:%02d", hour, minute);
    return buf;
}

void write_synth_outputs(const SynthResult& res, const SynthConfig& cfg, const std::string& dir) {
    const PuNetwork& net = res.net;
    // Measurement noise must not perturb the ground truth, so it draws from
    // its own stream.
    Rng noise(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    {
        std::ofstream f(dir + "/topology.json");
        if (!f) throw ModelError("cannot write " + dir + "/topology.json");
        f << export_network(res.model);
    }

    // Per-bus true consumption and production, kW, straight from the inputs.
    auto bus_load_kw = [&](int hour, int bus) {
        double kw = 0;
        const SnapshotInputs& in = res.truth_inputs[hour];
        for (int bp = net.bp_offset[bus]; bp < net.bp_offset[bus] + net.bus_phases[bus].count();
             ++bp)
            kw += net.pu_to_kw(in.load_p[bp]);
        return kw;
    };
    auto bus_pv_kw = [&](int hour, int bus) {
        double kw = 0;
        const SnapshotInputs& in = res.truth_inputs[hour];
        for (int bp = net.bp_offset[bus]; bp < net.bp_offset[bus] + net.bus_phases[bus].count();
             ++bp)
            kw += net.pu_to_kw(in.pv_p[bp]);
        return kw;
    };

    std::vector<bool> bus_has_pv(net.n_bus, false);
    for (const auto& pv : net.pvs) bus_has_pv[pv.bus] = true;

    std::vector<std::vector<std::string>> erows;
    auto clamp0 = [](double v) { return v < 0 ? 0.0 : v; };
    for (size_t li = 0; li < net.loads.size(); ++li) {
        const PuLoad& ld = net.loads[li];
        const std::string& bus_id = net.bus_ids[ld.bus];
        std::string meter = "m_" + ld.id;
        bool quarter = noise.flip(cfg.quarter_hour_fraction);
        bool pv_here = bus_has_pv[ld.bus];
        if (!ld.metered && !pv_here) continue;
        for (int h = 0; h < 24; ++h) {
            double d = bus_load_kw(h, ld.bus);
            double g = bus_pv_kw(h, ld.bus);
            double del = clamp0(std::max(d - g, 0.0) + noise.gauss(cfg.noise_sigma_e_kwh));
            double rec = clamp0(std::max(g - d, 0.0) + noise.gauss(cfg.noise_sigma_e_kwh));
            double pvp = clamp0(g + (pv_here ? noise.gauss(cfg.noise_sigma_e_kwh) : 0.0));
            auto emit = [&](const char* channel, double kwh) {
                if (quarter) {
                    for (int q = 0; q < 4; ++q)
                        erows.push_back({meter, bus_id, channel, stamp(h, q * 15), "15",
                                         csv::num(kwh / 4.0)});
                } else {
                    erows.push_back({meter, bus_id, channel, stamp(h, 0), "60", csv::num(kwh)});
                }
            };
            if (ld.metered) {
                emit("delivered", del);
                emit("received", rec);
            }
            if (pv_here) emit("pv_production", pvp);
        }
    }
    csv::write_csv(dir + "/ami_energy.csv",
                   {"meter_id", "bus", "channel", "interval_start", "interval_minutes",
                    "energy_kwh"},
                   erows);

    std::vector<std::vector<std::string>> vrows;
    for (size_t li = 0; li < net.loads.size(); ++li) {
        const PuLoad& ld = net.loads[li];
        if (!ld.has_voltage_meter) continue;
        for (int h = 0; h < 24; ++h) {
            const auto& st = res.truth.hours[h].state;
            for (int bp : ld.bp) {
                double v = std::hypot(st.vr[bp], st.vi[bp]) + noise.gauss(cfg.noise_sigma_v_pu);
                vrows.push_back({"m_" + ld.id, net.bus_ids[ld.bus],
                                 std::string(1, phase_char(net.bp_phase[bp])), std::to_string(h),
                                 csv::num(v)});
            }
        }
    }
    csv::write_csv(dir + "/ami_voltage.csv", {"meter_id", "bus", "phase", "hour", "v_mag_pu"},
                   vrows);

    std::vector<std::vector<std::string>> drows;
    int head_a = net.bus_phase_index(net.feeder_head, Phase::A);
    for (int h = 0; h < 24; ++h) {
        const PowerFlowSolution& sol = res.truth.hours[h];
        double p = net.pu_to_kw(-sol.powers.category_p[int(iv::Category::Source)]);
        double q = net.pu_to_kw(-sol.powers.category_q[int(iv::Category::Source)]);
        double va = std::hypot(sol.state.vr[head_a], sol.state.vi[head_a]);
        drows.push_back({std::to_string(h), csv::num(p), csv::num(q), csv::num(va)});
    }
    csv::write_csv(dir + "/das.csv", {"hour", "p_total_kw", "q_total_kvar", "v_mag_phase_a_pu"},
                   drows);

    // Noise-free truth for scoring: physical-unit inputs plus head totals.
    nlohmann::ordered_json gt;
    gt["day_shape"] = cfg.day_shape;
    gt["seed"] = cfg.seed;
    gt["hours"] = nlohmann::ordered_json::array();
    for (int h = 0; h < 24; ++h) {
        const SnapshotInputs& in = res.truth_inputs[h];
        nlohmann::ordered_json jh;
        jh["hour"] = h;
        nlohmann::ordered_json loads = nlohmann::ordered_json::object();
        for (const auto& ld : net.loads) {
            nlohmann::ordered_json jl;
            for (int bp : ld.bp) {
                std::string ph(1, phase_char(net.bp_phase[bp]));
                jl[ph] = {{"p_kw", net.pu_to_kw(in.load_p[bp])},
                          {"q_kvar", net.pu_to_kw(in.load_q[bp])}};
            }
            loads[ld.id] = std::move(jl);
        }
        jh["loads"] = std::move(loads);
        nlohmann::ordered_json pvs = nlohmann::ordered_json::object();
        for (const auto& pv : net.pvs) {
            nlohmann::ordered_json jp;
            for (int bp : pv.bp)
                jp[std::string(1, phase_char(net.bp_phase[bp]))] = net.pu_to_kw(in.pv_p[bp]);
            pvs[pv.id] = std::move(jp);
        }
        jh["pvs"] = std::move(pvs);
        jh["source"] = {{"v_mag_pu", in.source.v_mag_pu}, {"angle_deg", in.source.angle_deg}};
        const PowerFlowSolution& sol = res.truth.hours[h];
        jh["head"] = {
            {"p_kw", net.pu_to_kw(-sol.powers.category_p[int(iv::Category::Source)])},
            {"q_kvar", net.pu_to_kw(-sol.powers.category_q[int(iv::Category::Source)])},
            {"v_mag_phase_a_pu", std::hypot(sol.state.vr[head_a], sol.state.vi[head_a])}};
        gt["hours"].push_back(std::move(jh));
    }
    std::ofstream f(dir + "/ground_truth.json");
    if (!f) throw ModelError("cannot write " + dir + "/ground_truth.json");
    f << gt.dump(1) << "\n";
}

std::vector<SnapshotInputs> read_ground_truth(const PuNetwork& net, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ModelError("cannot read " + path);
    nlohmann::json doc = nlohmann::json::parse(f);
    const auto& jhours = doc.at("hours");
    if (jhours.size() != 24) throw ModelError("ground truth must cover 24 hours");

    std::vector<SnapshotInputs> hours(24, SnapshotInputs::zero(net));
    for (const auto& jh : jhours) {
        int h = jh.at("hour").get<int>();
        if (h < 0 || h > 23) throw ModelError("ground-truth hour out of range");
        SnapshotInputs& in = hours[h];
        for (const auto& ld : net.loads) {
            const auto& jl = jh.at("loads").at(ld.id);
            for (int bp : ld.bp) {
                const auto& jp = jl.at(std::string(1, phase_char(net.bp_phase[bp])));
                in.load_p[bp] = net.kw_to_pu(jp.at("p_kw").get<double>());
                in.load_q[bp] = net.kw_to_pu(jp.at("q_kvar").get<double>());
            }
        }
        for (const auto& pv : net.pvs) {
            const auto& jp = jh.at("pvs").at(pv.id);
            for (int bp : pv.bp)
                in.pv_p[bp] =
                    net.kw_to_pu(jp.at(std::string(1, phase_char(net.bp_phase[bp]))).get<double>());
        }
        in.source.v_mag_pu = jh.at("source").at("v_mag_pu").get<std::vector<double>>();
        in.source.angle_deg = jh.at("source").at("angle_deg").get<std::vector<double>>();
    }
    return hours;
}

}  // namespace feedertk
