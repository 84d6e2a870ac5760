#include "feedertk/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "feedertk/csv.hpp"

namespace feedertk {

namespace {

// percent of the reference, or the absolute difference when the reference
// is too small to divide by
std::pair<double, bool> rel_err(double a, double b) {
    if (std::abs(b) < 1e-9) return {a - b, true};
    return {(a - b) / std::abs(b) * 100.0, false};
}

}  // namespace

DaySolution day_solution(const PuNetwork& net, const std::vector<SnapshotInputs>& inputs,
                         const TimeSeriesResult& res) {
    (void)net;
    if (inputs.size() != res.hours.size())
        throw ModelError("day solution needs matching input and result lengths");
    DaySolution d;
    d.inputs = inputs;
    for (const auto& sol : res.hours) {
        d.states.push_back(sol.state);
        d.powers.push_back(sol.powers);
    }
    return d;
}

DaySolution day_solution(const PuNetwork& net, const DayEstimate& day) {
    DaySolution d;
    for (const auto& est : day.hours) {
        SnapshotInputs in = SnapshotInputs::zero(net);
        in.load_p = est.load_p_bp;
        in.load_q = est.load_q_bp;
        in.pv_p = est.pv_p_bp;
        in.source = est.source;
        d.inputs.push_back(std::move(in));
        d.states.push_back(est.state);
        d.powers.push_back(est.powers);
    }
    return d;
}

std::pair<double, bool> rms_daily(const std::vector<double>& m, const std::vector<double>& y) {
    if (m.size() != y.size() || m.empty()) throw ModelError("rms_daily needs equal-length series");
    bool absolute = false;
    for (double v : y)
        if (std::abs(v) < 1e-9) absolute = true;
    double acc = 0;
    for (size_t i = 0; i < m.size(); ++i) {
        double e = absolute ? m[i] - y[i] : (m[i] - y[i]) / y[i];
        acc += e * e;
    }
    double rms = std::sqrt(acc / m.size());
    return {absolute ? rms : rms * 100.0, absolute};
}

std::vector<double> electrical_distance(const PuNetwork& net) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(net.n_bus, kInf);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[net.feeder_head] = 0.0;
    pq.push({0.0, net.feeder_head});
    while (!pq.empty()) {
        auto [d, bus] = pq.top();
        pq.pop();
        if (d > dist[bus]) continue;
        for (auto [bi, from_here] : net.incident[bus]) {
            const PuBranch& b = net.branches[bi];
            double w = std::hypot(b.R.diagonal().mean(), b.X.diagonal().mean());
            int other = from_here ? b.to_bus : b.from_bus;
            if (d + w < dist[other]) {
                dist[other] = d + w;
                pq.push({dist[other], other});
            }
        }
    }
    return dist;
}

MatchReport build_match_report(const PuNetwork& net, const DaySolution& est,
                               const DaySolution& ref) {
    if (est.states.size() != 24 || ref.states.size() != 24)
        throw ModelError("match report needs two full 24-hour solutions");
    MatchReport rep;

    for (int bp = 0; bp < net.n_bus_phase; ++bp) {
        std::vector<double> m(24), y(24);
        for (int h = 0; h < 24; ++h) {
            m[h] = std::hypot(est.states[h].vr[bp], est.states[h].vi[bp]);
            y[h] = std::hypot(ref.states[h].vr[bp], ref.states[h].vi[bp]);
        }
        auto [rms, absolute] = rms_daily(m, y);
        rep.v_rms.push_back({bp, rms, absolute});
    }
    double sum = 0;
    int n_rel = 0;
    for (const auto& e : rep.v_rms)
        if (!e.absolute) {
            sum += e.rms;
            rep.v_rms_max_pct = std::max(rep.v_rms_max_pct, e.rms);
            ++n_rel;
        }
    rep.v_rms_mean_pct = n_rel ? sum / n_rel : 0.0;

    for (int c = 0; c < iv::kNumCategories; ++c) {
        CategoryRow row;
        row.category = iv::category_name(static_cast<iv::Category>(c));
        for (int h = 0; h < 24; ++h) {
            row.p_kwh += net.pu_to_kw(est.powers[h].category_p[c]);
            row.q_kvarh += net.pu_to_kw(est.powers[h].category_q[c]);
            row.p_ref_kwh += net.pu_to_kw(ref.powers[h].category_p[c]);
            row.q_ref_kvarh += net.pu_to_kw(ref.powers[h].category_q[c]);
        }
        std::tie(row.p_err, row.p_abs) = rel_err(row.p_kwh, row.p_ref_kwh);
        std::tie(row.q_err, row.q_abs) = rel_err(row.q_kvarh, row.q_ref_kvarh);
        rep.categories.push_back(std::move(row));
    }

    for (int h = 0; h < 24; ++h) {
        HourRow hr;
        hr.hour = h;
        hr.gross_kw = net.pu_to_kw(est.inputs[h].load_p.sum());
        hr.net_kw = hr.gross_kw - net.pu_to_kw(est.inputs[h].pv_p.sum());
        hr.head_p_kw = net.pu_to_kw(-est.powers[h].category_p[int(iv::Category::Source)]);
        hr.head_q_kvar = net.pu_to_kw(-est.powers[h].category_q[int(iv::Category::Source)]);
        rep.hours.push_back(hr);
    }

    for (const auto& ld : net.loads) {
        LoadPfRow row;
        row.id = ld.id;
        for (int h = 0; h < 24; ++h)
            for (int bp : ld.bp) {
                row.p_kwh += net.pu_to_kw(est.inputs[h].load_p[bp]);
                row.q_kvarh += net.pu_to_kw(est.inputs[h].load_q[bp]);
            }
        double s = std::hypot(row.p_kwh, row.q_kvarh);
        row.pf = s > 1e-12 ? row.p_kwh / s : 1.0;
        rep.load_pf.push_back(std::move(row));
    }

    rep.distance = electrical_distance(net);
    return rep;
}

std::string format_summary(const PuNetwork& net, const MatchReport& rep) {
    std::ostringstream os;
    os << "feeder: " << net.n_bus << " buses, " << net.branches.size() << " branches, "
       << net.loads.size() << " loads, " << net.pvs.size() << " pv units, "
       << net.capacitors.size() << " capacitor banks\n";

    double e_day = 0, e_peak = 0, net_min = 1e30;
    for (const auto& h : rep.hours) {
        e_day += h.gross_kw;
        e_peak = std::max(e_peak, h.gross_kw);
        net_min = std::min(net_min, h.net_kw);
    }
    os << "daily gross load: " << e_day << " kWh, peak hour " << e_peak
       << " kW, minimum net load " << net_min << " kW\n\n";

    os << "voltage match vs reference (daily RMS of relative deviation):\n";
    os << "  mean " << rep.v_rms_mean_pct << " %, worst " << rep.v_rms_max_pct << " %\n";
    std::vector<RmsEntry> worst = rep.v_rms;
    std::sort(worst.begin(), worst.end(),
              [](const RmsEntry& a, const RmsEntry& b) { return a.rms > b.rms; });
    for (size_t i = 0; i < std::min<size_t>(5, worst.size()); ++i) {
        const auto& e = worst[i];
        os << "    " << net.bus_ids[net.bp_bus[e.bus_phase]] << ":"
           << phase_char(net.bp_phase[e.bus_phase]) << "  " << e.rms
           << (e.absolute ? " pu (absolute)" : " %") << "\n";
    }

    os << "\ncategory reconciliation (daily energy, kWh / kvarh):\n";
    for (const auto& c : rep.categories) {
        os << "  " << c.category << ": P " << c.p_kwh << " vs " << c.p_ref_kwh << " ("
           << c.p_err << (c.p_abs ? " kWh abs" : " %") << "), Q " << c.q_kvarh << " vs "
           << c.q_ref_kvarh << " (" << c.q_err << (c.q_abs ? " kvarh abs" : " %") << ")\n";
    }
    return os.str();
}

void write_report_files(const PuNetwork& net, const MatchReport& rep, const DaySolution& est,
                        const std::string& dir) {
    {
        std::vector<std::vector<std::string>> rows;
        for (const auto& e : rep.v_rms)
            rows.push_back({net.bus_ids[net.bp_bus[e.bus_phase]],
                            std::string(1, phase_char(net.bp_phase[e.bus_phase])),
                            csv::num(e.rms), e.absolute ? "1" : "0"});
        csv::write_csv(dir + "/v_rms.csv", {"bus", "phase", "rms", "absolute"}, rows);
    }
    {
        std::vector<std::vector<std::string>> rows;
        for (const auto& c : rep.categories)
            rows.push_back({c.category, csv::num(c.p_kwh), csv::num(c.p_ref_kwh),
                            csv::num(c.p_err), c.p_abs ? "1" : "0", csv::num(c.q_kvarh),
                            csv::num(c.q_ref_kvarh), csv::num(c.q_err), c.q_abs ? "1" : "0"});
        csv::write_csv(dir + "/category_table.csv",
                       {"category", "p_kwh", "p_ref_kwh", "p_err", "p_err_absolute", "q_kvarh",
                        "q_ref_kvarh", "q_err", "q_err_absolute"},
                       rows);
    }
    {
        // distance-ordered voltage profile of the estimated day
        std::vector<std::vector<std::string>> rows;
        std::vector<int> order(net.n_bus_phase);
        for (int bp = 0; bp < net.n_bus_phase; ++bp) order[bp] = bp;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            double da = rep.distance[net.bp_bus[a]], db = rep.distance[net.bp_bus[b]];
            return da != db ? da < db : a < b;
        });
        for (int bp : order) {
            double vmin = 1e30, vmax = -1e30, vsum = 0;
            for (int h = 0; h < 24; ++h) {
                double v = std::hypot(est.states[h].vr[bp], est.states[h].vi[bp]);
                vmin = std::min(vmin, v);
                vmax = std::max(vmax, v);
                vsum += v;
            }
            rows.push_back({net.bus_ids[net.bp_bus[bp]],
                            std::string(1, phase_char(net.bp_phase[bp])),
                            csv::num(rep.distance[net.bp_bus[bp]]), csv::num(vmin),
                            csv::num(vsum / 24.0), csv::num(vmax)});
        }
        csv::write_csv(dir + "/feeder_characteristics.csv",
                       {"bus", "phase", "distance_pu", "v_min_pu", "v_mean_pu", "v_max_pu"},
                       rows);
    }
    {
        nlohmann::ordered_json j;
        j["voltage_rms"] = {{"mean_pct", rep.v_rms_mean_pct}, {"max_pct", rep.v_rms_max_pct}};
        j["categories"] = nlohmann::ordered_json::array();
        for (const auto& c : rep.categories)
            j["categories"].push_back({{"category", c.category},
                                       {"p_kwh", c.p_kwh},
                                       {"p_ref_kwh", c.p_ref_kwh},
                                       {"p_err", c.p_err},
                                       {"p_err_absolute", c.p_abs},
                                       {"q_kvarh", c.q_kvarh},
                                       {"q_ref_kvarh", c.q_ref_kvarh},
                                       {"q_err", c.q_err},
                                       {"q_err_absolute", c.q_abs}});
        j["hours"] = nlohmann::ordered_json::array();
        for (const auto& h : rep.hours)
            j["hours"].push_back({{"hour", h.hour},
                                  {"gross_kw", h.gross_kw},
                                  {"net_kw", h.net_kw},
                                  {"head_p_kw", h.head_p_kw},
                                  {"head_q_kvar", h.head_q_kvar}});
        j["load_pf"] = nlohmann::ordered_json::array();
        for (const auto& l : rep.load_pf)
            j["load_pf"].push_back(
                {{"id", l.id}, {"p_kwh", l.p_kwh}, {"q_kvarh", l.q_kvarh}, {"pf", l.pf}});
        std::ofstream f(dir + "/report.json");
        if (!f) throw ModelError("cannot write " + dir + "/report.json");
        f << j.dump(1) << "\n";
    }
    {
        std::ofstream f(dir + "/summary.txt");
        if (!f) throw ModelError("cannot write " + dir + "/summary.txt");
        f << format_summary(net, rep);
    }
}

}  // namespace feedertk
