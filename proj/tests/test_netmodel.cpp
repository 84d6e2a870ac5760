#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "feedertk/netmodel.hpp"
#include "test_support.hpp"

using namespace feedertk;

TEST_CASE("minimal two-bus document loads") {
    NetworkModel net = load_network(testing::minimal_two_bus_doc());
    CHECK(net.buses.size() == 2);
    CHECK(net.lines.size() == 1);
    CHECK(net.substation_index == 0);
    CHECK(net.feeder_head_index == 1);
    CHECK(net.source_line_index == 0);
}

TEST_CASE("dangling bus reference is reported with the missing id") {
    std::string doc = testing::minimal_two_bus_doc();
    auto pos = doc.find("\"to\": \"head\"");
    doc.replace(pos, 12, "\"to\": \"b99\"");
    CHECK_THROWS_WITH_AS(load_network(doc), doctest::Contains("b99"), ModelError);
}

TEST_CASE("duplicate bus id rejected") {
    std::string doc = testing::minimal_two_bus_doc();
    auto pos = doc.find("\"head\"");
    doc.replace(pos, 6, "\"sub\"");
    CHECK_THROWS_WITH_AS(load_network(doc), doctest::Contains("duplicate"), ModelError);
}

TEST_CASE("disconnected bus rejected") {
    std::string doc = R"({
      "base_mva": 1.0,
      "buses": [
        {"id": "sub", "kind": "substation", "phases": "abc", "base_kv": 7.2},
        {"id": "head", "kind": "feeder_head", "phases": "abc", "base_kv": 7.2},
        {"id": "orphan", "kind": "primary", "phases": "abc", "base_kv": 7.2}
      ],
      "lines": [
        {"id": "src", "from": "sub", "to": "head", "phases": "abc",
         "r_ohm": [[0.05,0,0],[0,0.05,0],[0,0,0.05]],
         "x_ohm": [[0.3,0,0],[0,0.3,0],[0,0,0.3]],
         "ysh_us": [[0,0,0],[0,0,0],[0,0,0]]}
      ]
    })";
    CHECK_THROWS_WITH_AS(load_network(doc), doctest::Contains("orphan"), ModelError);
}

TEST_CASE("singular series impedance rejected") {
    std::string doc = testing::minimal_two_bus_doc();
    auto pos = doc.find("\"r_ohm\"");
    auto end = doc.find("\"ysh_us\"");
    doc.replace(pos, end - pos,
                "\"r_ohm\": [[0,0,0],[0,0,0],[0,0,0]],\n"
                "\"x_ohm\": [[0,0,0],[0,0,0],[0,0,0]],\n");
    CHECK_THROWS_WITH_AS(load_network(doc), doctest::Contains("singular"), ModelError);
}

TEST_CASE("phase mismatch between element and bus rejected") {
    std::string doc = R"({
      "base_mva": 1.0,
      "buses": [
        {"id": "sub", "kind": "substation", "phases": "abc", "base_kv": 7.2},
        {"id": "head", "kind": "feeder_head", "phases": "ab", "base_kv": 7.2}
      ],
      "lines": [
        {"id": "src", "from": "sub", "to": "head", "phases": "abc",
         "r_ohm": [[0.05,0,0],[0,0.05,0],[0,0,0.05]],
         "x_ohm": [[0.3,0,0],[0,0.3,0],[0,0,0.3]],
         "ysh_us": [[0,0,0],[0,0,0],[0,0,0]]}
      ]
    })";
    CHECK_THROWS_WITH_AS(load_network(doc), doctest::Contains("phase mismatch"), ModelError);
}

TEST_CASE("source segment must have zero shunt") {
    std::string doc = testing::minimal_two_bus_doc();
    const std::string zero = "\"ysh_us\": [[0,0,0],[0,0,0],[0,0,0]]";
    auto pos = doc.find(zero);
    doc.replace(pos, zero.size(), "\"ysh_us\": [[1,0,0],[0,1,0],[0,0,1]]");
    CHECK_THROWS_WITH_AS(load_network(doc), doctest::Contains("shunt"), ModelError);
}

TEST_CASE("per-unit conversion: 1.555 ohm on 7.2 kV L-N, 1 MVA base") {
    // Z_base = kV_LN^2 / MVA = 51.84 ohm
    std::string doc = R"({
      "base_mva": 1.0,
      "buses": [
        {"id": "sub", "kind": "substation", "phases": "a", "base_kv": 7.2},
        {"id": "head", "kind": "feeder_head", "phases": "a", "base_kv": 7.2}
      ],
      "lines": [
        {"id": "src", "from": "sub", "to": "head", "phases": "a",
         "r_ohm": [[1.555]], "x_ohm": [[2.0]], "ysh_us": [[0]]}
      ]
    })";
    PuNetwork pu = to_per_unit(load_network(doc));
    CHECK(pu.branches[0].R(0, 0) == doctest::Approx(1.555 / 51.84).epsilon(1e-12));
    CHECK(pu.branches[0].R(0, 0) == doctest::Approx(0.02999).epsilon(1e-3));
}

TEST_CASE("per-unit identity when Z_base is 1 ohm") {
    std::string doc = R"({
      "base_mva": 1.0,
      "buses": [
        {"id": "sub", "kind": "substation", "phases": "a", "base_kv": 1.0},
        {"id": "head", "kind": "feeder_head", "phases": "a", "base_kv": 1.0}
      ],
      "lines": [
        {"id": "src", "from": "sub", "to": "head", "phases": "a",
         "r_ohm": [[0.37]], "x_ohm": [[0.81]], "ysh_us": [[0]]}
      ]
    })";
    PuNetwork pu = to_per_unit(load_network(doc));
    CHECK(pu.branches[0].R(0, 0) == 0.37);
    CHECK(pu.branches[0].X(0, 0) == 0.81);
}

TEST_CASE("per-unit then back to physical is the identity") {
    NetworkModel net = load_network(testing::small_feeder_doc());
    PuNetwork pu = to_per_unit(net);
    for (size_t i = 0; i < net.lines.size(); ++i) {
        double zb = net.buses[net.bus_index(net.lines[i].from)].base_kv;
        zb = zb * zb / net.base_mva;
        Eigen::MatrixXd back = pu.branches[i].R * zb;
        CHECK((back - net.lines[i].r_ohm).cwiseAbs().maxCoeff() <=
              1e-12 * net.lines[i].r_ohm.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("export then load round-trips exactly") {
    NetworkModel net = load_network(testing::small_feeder_doc());
    std::string once = export_network(net);
    NetworkModel net2 = load_network(once);
    CHECK(export_network(net2) == once);
}

TEST_CASE("transformer per-unit ratio folds against the voltage bases") {
    NetworkModel net = load_network(testing::small_feeder_doc());
    PuNetwork pu = to_per_unit(net);
    // turns_ratio 30 equals 7.2/0.24, so the per-unit tap is nominal.
    const PuBranch* t1 = nullptr;
    for (const auto& b : pu.branches)
        if (b.id == "t1") t1 = &b;
    REQUIRE(t1 != nullptr);
    CHECK(t1->tap == doctest::Approx(1.0).epsilon(1e-12));
    // 20.7 ohm on the 7.2 kV side -> /30^2 on the 0.24 kV side, base 0.0576 ohm.
    CHECK(t1->R(0, 0) == doctest::Approx(20.7 / 900.0 / (0.24 * 0.24)).epsilon(1e-12));
    CHECK(t1->no_load_loss_pu == doctest::Approx(0.08 / 1000.0).epsilon(1e-12));
}

TEST_CASE("bus-phase indexing is dense and phase-ordered") {
    PuNetwork pu = to_per_unit(load_network(testing::small_feeder_doc()));
    CHECK(pu.n_bus_phase == 3 + 3 + 3 + 3 + 1 + 1 + 3);
    CHECK(pu.bus_phase_index(0, Phase::A) == 0);
    CHECK(pu.bus_phase_index(0, Phase::C) == 2);
    CHECK_THROWS_AS(pu.bus_phase_index(4, Phase::A), ModelError);  // s1 carries only b
}
