// Command-line front end: synthesize feeders, ingest measurements, estimate
// hourly profiles, resimulate them with the power-flow oracle, and emit match
// reports. Exit codes: 0 success, 2 input/validation error, 3 solver failure.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "feedertk/csv.hpp"
#include "feedertk/estimator.hpp"
#include "feedertk/ingest.hpp"
#include "feedertk/netmodel.hpp"
#include "feedertk/oracle.hpp"
#include "feedertk/report.hpp"
#include "feedertk/synth.hpp"

namespace fs = std::filesystem;
using namespace feedertk;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;

nlohmann::json load_options(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream f(path);
    if (!f) throw ModelError("cannot read options file '" + path + "'");
    return nlohmann::json::parse(f);
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

SynthConfig synth_config(const nlohmann::json& j) {
    SynthConfig c;
    maybe(j, "n_primary_buses", c.n_primary_buses);
    maybe(j, "n_transformers", c.n_transformers);
    maybe(j, "loads_per_transformer", c.loads_per_transformer);
    maybe(j, "n_primary_loads", c.n_primary_loads);
    maybe(j, "pv_fraction", c.pv_fraction);
    maybe(j, "metered_fraction", c.metered_fraction);
    maybe(j, "voltage_meter_fraction", c.voltage_meter_fraction);
    maybe(j, "quarter_hour_fraction", c.quarter_hour_fraction);
    maybe(j, "load_peak_kw_min", c.load_peak_kw_min);
    maybe(j, "load_peak_kw_max", c.load_peak_kw_max);
    maybe(j, "pf_min", c.pf_min);
    maybe(j, "pf_max", c.pf_max);
    maybe(j, "day_shape", c.day_shape);
    maybe(j, "noise_sigma_v_pu", c.noise_sigma_v_pu);
    maybe(j, "noise_sigma_e_kwh", c.noise_sigma_e_kwh);
    maybe(j, "seed", c.seed);
    return c;
}

EstimatorOptions estimator_options(const nlohmann::json& j) {
    EstimatorOptions o;
    maybe(j, "tol_kkt", o.tol_kkt);
    maybe(j, "tol_feas", o.tol_feas);
    maybe(j, "max_iter", o.max_iter);
    maybe(j, "warm_start", o.warm_start);
    maybe(j, "threads", o.threads);
    maybe(j, "p_cap_kw", o.p_cap_kw);
    maybe(j, "default_unmetered_p_kw", o.default_unmetered_p_kw);
    maybe(j, "init_pf", o.init_pf);
    maybe(j, "band_head", o.band_head);
    maybe(j, "band_src", o.band_src);
    maybe(j, "band_angle_deg", o.band_angle_deg);
    maybe(j, "verbose", o.verbose);
    return o;
}

void write_monitors(const PuNetwork& net, const std::vector<MonitorRecord>& mons,
                    const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& m : mons)
        rows.push_back({std::to_string(m.hour), m.bus, std::string(1, phase_char(m.phase)),
                        csv::num(m.v_mag_pu), csv::num(m.v_ang_deg), csv::num(m.p_kw),
                        csv::num(m.q_kvar)});
    csv::write_csv(path, {"hour", "bus", "phase", "v_mag_pu", "v_ang_deg", "p_kw", "q_kvar"},
                   rows);
}

TimeSeriesResult resimulate(const PuNetwork& net, const std::vector<SnapshotInputs>& inputs) {
    TimeSeriesResult res = solve_timeseries(net, inputs);
    if (!res.failed_hours.empty())
        throw SolverError("power flow failed for " + std::to_string(res.failed_hours.size()) +
                          " hour(s)");
    return res;
}

struct GlobalArgs {
    std::string topology, measurements, out, options;
    uint64_t seed = 0;
    bool seed_set = false;
    int hours = 24;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distribution feeder model enhancement toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand name

    GlobalArgs g;
    app.add_option("--topology", g.topology, "topology JSON document")->configurable(false);
    app.add_option("--measurements", g.measurements,
                   "directory with ami_energy.csv, ami_voltage.csv, das.csv");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--options", g.options, "JSON file with solver/generator options");
    auto* seed_opt = app.add_option("--seed", g.seed, "random seed (synth)");
    app.add_option("--hours", g.hours, "hours to process (pf)")->check(CLI::Range(1, 24));

    auto* c_synth = app.add_subcommand("synth", "generate a synthetic feeder + measurements");
    auto* c_ingest = app.add_subcommand("ingest", "validate and normalize measurement files");
    auto* c_estimate = app.add_subcommand("estimate", "estimate hourly profiles from measurements");
    auto* c_pf = app.add_subcommand("pf", "run the power-flow oracle on stored profiles");
    auto* c_compare = app.add_subcommand("compare", "compare estimated profiles against a truth");
    auto* c_report = app.add_subcommand("report", "estimate, re-verify, and emit a match report");

    std::string profiles, substation, truth;
    for (auto* c : {c_pf, c_compare})
        c->add_option("--profiles", profiles, "profiles.csv from a previous estimate");
    for (auto* c : {c_pf, c_compare})
        c->add_option("--substation", substation, "substation.csv with per-hour source angles");
    c_compare->add_option("--truth", truth, "ground_truth.json from synth");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!g.out.empty()) fs::create_directories(g.out);

        if (c_synth->parsed()) {
            if (g.out.empty()) throw ModelError("synth needs --out");
            SynthConfig cfg = synth_config(load_options(g.options));
            if (seed_opt->count()) cfg.seed = g.seed;
            SynthResult res = generate_feeder(cfg);
            write_synth_outputs(res, cfg, g.out);
            std::cout << "wrote " << res.net.n_bus << "-bus feeder with " << res.net.loads.size()
                      << " loads to " << g.out << "\n";
            return 0;
        }

        NetworkModel model = load_network_file(g.topology);
        PuNetwork net = to_per_unit(model);

        if (c_ingest->parsed()) {
            if (g.out.empty()) throw ModelError("ingest needs --out");
            MeasurementSet ms = load_measurements(net, g.measurements);
            std::vector<std::vector<std::string>> rows;
            for (int h = 0; h < 24; ++h)
                for (size_t li = 0; li < net.loads.size(); ++li)
                    if (ms.metered(h, static_cast<int>(li)))
                        rows.push_back({std::to_string(h), net.loads[li].id,
                                        csv::num(*ms.gross_kw[h][li])});
            csv::write_csv(g.out + "/gross_load.csv", {"hour", "load", "gross_kw"}, rows);
            std::vector<std::vector<std::string>> flagged;
            for (const auto& r : ms.flagged_voltages)
                flagged.push_back({r.meter_id, r.bus, std::string(1, phase_char(r.phase)),
                                   std::to_string(r.hour), csv::num(r.v_mag_pu)});
            csv::write_csv(g.out + "/flagged_voltages.csv",
                           {"meter_id", "bus", "phase", "hour", "v_mag_pu"}, flagged);
            std::cout << "ingested " << rows.size() << " metered load-hours, flagged "
                      << flagged.size() << " voltage records\n";
            return 0;
        }

        if (c_estimate->parsed() || c_report->parsed()) {
            if (g.out.empty()) throw ModelError("estimate needs --out");
            MeasurementSet ms = load_measurements(net, g.measurements);
            EstimatorOptions opts = estimator_options(load_options(g.options));
            DayEstimate day = estimate_day(net, ms, opts);
            write_profiles_csv(net, day, g.out + "/profiles.csv");
            write_substation_csv(net, day, g.out + "/substation.csv");
            if (!day.failed_hours.empty())
                throw SolverError("estimation failed for " +
                                  std::to_string(day.failed_hours.size()) + " hour(s)");
            if (c_report->parsed()) {
                // re-verify with the independent oracle and report the match
                auto inputs = read_profiles_csv(net, g.out + "/profiles.csv",
                                                g.out + "/substation.csv");
                DaySolution est = day_solution(net, day);
                DaySolution resim = day_solution(net, inputs, resimulate(net, inputs));
                MatchReport rep = build_match_report(net, est, resim);
                write_report_files(net, rep, est, g.out);
                std::cout << "voltage match vs oracle: mean " << rep.v_rms_mean_pct
                          << " %, worst " << rep.v_rms_max_pct << " %\n";
            } else {
                std::cout << "estimated 24 hours; profiles written to " << g.out << "\n";
            }
            return 0;
        }

        if (c_pf->parsed()) {
            if (g.out.empty() || profiles.empty()) throw ModelError("pf needs --profiles and --out");
            auto inputs = read_profiles_csv(net, profiles, substation);
            inputs.resize(g.hours, SnapshotInputs::zero(net));
            TimeSeriesResult res = resimulate(net, inputs);
            write_monitors(net, collect_monitors(net, inputs, res), g.out + "/monitors.csv");
            std::cout << "solved " << inputs.size() << " hour(s); monitors written to " << g.out
                      << "\n";
            return 0;
        }

        if (c_compare->parsed()) {
            if (g.out.empty() || profiles.empty() || truth.empty())
                throw ModelError("compare needs --profiles, --truth, and --out");
            auto est_in = read_profiles_csv(net, profiles, substation);
            auto truth_in = read_ground_truth(net, truth);
            DaySolution est = day_solution(net, est_in, resimulate(net, est_in));
            DaySolution ref = day_solution(net, truth_in, resimulate(net, truth_in));
            MatchReport rep = build_match_report(net, est, ref);
            write_report_files(net, rep, est, g.out);
            std::cout << "voltage match vs truth: mean " << rep.v_rms_mean_pct << " %, worst "
                      << rep.v_rms_max_pct << " %\n";
            return 0;
        }
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return 0;
}
