#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "feedertk/csv.hpp"
#include "feedertk/report.hpp"
#include "feedertk/synth.hpp"
#include "test_support.hpp"

using namespace feedertk;
using namespace feedertk::testing;
namespace fs = std::filesystem;

TEST_CASE("daily RMS of relative deviation, hand-computed") {
    // two samples, both off by 2% of the reference: rms = 2%
    auto [rms, absolute] = rms_daily({1.02, 0.98}, {1.0, 1.0});
    CHECK(!absolute);
    CHECK(rms == doctest::Approx(2.0));

    // one-sided error: sqrt((0.03^2 + 0)/2)*100
    auto [rms2, abs2] = rms_daily({1.03, 1.0}, {1.0, 1.0});
    CHECK(!abs2);
    CHECK(rms2 == doctest::Approx(100.0 * std::sqrt(0.0009 / 2.0)));

    CHECK_THROWS_AS(rms_daily({1.0}, {1.0, 2.0}), ModelError);
    CHECK_THROWS_AS(rms_daily({}, {}), ModelError);
}

TEST_CASE("relative RMS is scale invariant; zero reference flags absolute") {
    auto [a, fa] = rms_daily({1.02, 0.97, 1.01}, {1.0, 1.0, 0.99});
    auto [b, fb] = rms_daily({3.06, 2.91, 3.03}, {3.0, 3.0, 2.97});
    CHECK(!fa);
    CHECK(!fb);
    CHECK(a == doctest::Approx(b));

    auto [c, fc] = rms_daily({0.1, 1.0}, {0.0, 1.0});
    CHECK(fc);  // cannot divide by zero: falls back to absolute units
    CHECK(c == doctest::Approx(std::sqrt(0.01 / 2.0)));
}

TEST_CASE("electrical distance walks the shortest impedance path from the head") {
    PuNetwork net = to_per_unit(load_network(small_feeder_doc()));
    auto dist = electrical_distance(net);
    REQUIRE(static_cast<int>(dist.size()) == net.n_bus);
    CHECK(dist[net.feeder_head] == 0.0);

    // substation sits one source-segment away from the head
    const PuBranch& src = net.branches[net.source_branch];
    CHECK(dist[net.substation] ==
          doctest::Approx(std::hypot(src.R.diagonal().mean(), src.X.diagonal().mean())));

    // distance never decreases moving away from the head along the radial tree
    for (const auto& b : net.branches) {
        if (b.is_source) continue;
        double step = std::hypot(b.R.diagonal().mean(), b.X.diagonal().mean());
        CHECK(std::abs(dist[b.to_bus] - dist[b.from_bus]) == doctest::Approx(step).epsilon(1e-12));
        CHECK(dist[b.to_bus] > dist[b.from_bus]);
    }
}

TEST_CASE("a day compared against itself reconciles exactly") {
    SynthConfig cfg;
    cfg.n_primary_buses = 8;
    cfg.n_transformers = 3;
    cfg.loads_per_transformer = 2;
    cfg.n_primary_loads = 1;
    cfg.seed = 11;
    SynthResult res = generate_feeder(cfg);

    DaySolution truth = day_solution(res.net, res.truth_inputs, res.truth);
    MatchReport rep = build_match_report(res.net, truth, truth);

    CHECK(rep.v_rms_mean_pct == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rep.v_rms_max_pct == doctest::Approx(0.0).epsilon(1e-12));
    for (const auto& c : rep.categories) {
        CHECK(c.p_err == doctest::Approx(0.0));
        CHECK(c.q_err == doctest::Approx(0.0));
    }
    REQUIRE(rep.hours.size() == 24);
    // gross load equals the sum of the drawn consumption; net subtracts PV
    double gross = res.net.pu_to_kw(res.truth_inputs[18].load_p.sum());
    double pv = res.net.pu_to_kw(res.truth_inputs[18].pv_p.sum());
    CHECK(rep.hours[18].gross_kw == doctest::Approx(gross));
    CHECK(rep.hours[18].net_kw == doctest::Approx(gross - pv));
    // head totals agree with the solved source output
    double head_p =
        res.net.pu_to_kw(-res.truth.hours[18].powers.category_p[int(iv::Category::Source)]);
    CHECK(rep.hours[18].head_p_kw == doctest::Approx(head_p));

    // load power factors land inside the drawn band
    REQUIRE(rep.load_pf.size() == res.net.loads.size());
    for (const auto& l : rep.load_pf) {
        CHECK(l.pf >= 0.87);
        CHECK(l.pf <= 0.99);
    }
}

TEST_CASE("perturbed voltages show up in the report at the right magnitude") {
    SynthConfig cfg;
    cfg.n_primary_buses = 6;
    cfg.n_transformers = 2;
    cfg.loads_per_transformer = 1;
    cfg.n_primary_loads = 0;
    cfg.seed = 3;
    SynthResult res = generate_feeder(cfg);

    DaySolution truth = day_solution(res.net, res.truth_inputs, res.truth);
    DaySolution bent = truth;
    for (int h = 0; h < 24; ++h) {
        bent.states[h].vr *= 1.01;  // +1% magnitude everywhere
        bent.states[h].vi *= 1.01;
    }
    MatchReport rep = build_match_report(res.net, bent, truth);
    CHECK(rep.v_rms_mean_pct == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rep.v_rms_max_pct == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("report files are written with the agreed schemas") {
    SynthConfig cfg;
    cfg.n_primary_buses = 6;
    cfg.n_transformers = 2;
    cfg.loads_per_transformer = 1;
    cfg.n_primary_loads = 0;
    cfg.seed = 5;
    SynthResult res = generate_feeder(cfg);
    DaySolution truth = day_solution(res.net, res.truth_inputs, res.truth);
    MatchReport rep = build_match_report(res.net, truth, truth);

    fs::path dir = fs::temp_directory_path() / "feedertk_report";
    fs::create_directories(dir);
    write_report_files(res.net, rep, truth, dir.string());

    auto vt = csv::read_csv((dir / "v_rms.csv").string());
    CHECK(vt.header == std::vector<std::string>{"bus", "phase", "rms", "absolute"});
    CHECK(static_cast<int>(vt.rows.size()) == res.net.n_bus_phase);

    auto ct = csv::read_csv((dir / "category_table.csv").string());
    CHECK(ct.rows.size() == 6);
    CHECK(ct.rows[0][ct.column("category")] == "source");

    auto ft = csv::read_csv((dir / "feeder_characteristics.csv").string());
    CHECK(static_cast<int>(ft.rows.size()) == res.net.n_bus_phase);
    // rows come out ordered by distance from the head
    int c_dist = ft.column("distance_pu");
    double prev = -1;
    for (const auto& row : ft.rows) {
        double d = std::stod(row[c_dist]);
        CHECK(d >= prev);
        prev = d;
    }

    std::ifstream jf(dir / "report.json");
    REQUIRE(jf.good());
    std::string text((std::istreambuf_iterator<char>(jf)), std::istreambuf_iterator<char>());
    CHECK(text.find("voltage_rms") != std::string::npos);
    CHECK(text.find("load_pf") != std::string::npos);

    std::ifstream sf(dir / "summary.txt");
    REQUIRE(sf.good());
    std::string summary((std::istreambuf_iterator<char>(sf)), std::istreambuf_iterator<char>());
    CHECK(summary.find("category reconciliation") != std::string::npos);
    CHECK(summary.find("voltage match") != std::string::npos);
}
