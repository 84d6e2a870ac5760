#ifndef FEEDERTK_NETMODEL_HPP
#define FEEDERTK_NETMODEL_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace feedertk {

/// Raised for any topology-document validation failure. The message names
/// the offending element id.
class ModelError : public std::runtime_error {
public:
    explicit ModelError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Phase : int { A = 0, B = 1, C = 2 };

/// Subset of {a,b,c} as a bitmask. Order of phase_list() is always a,b,c.
class PhaseSet {
public:
    PhaseSet() = default;
    explicit PhaseSet(uint8_t mask) : mask_(mask) {}
    static PhaseSet parse(const std::string& s);  // e.g. "abc", "b"

    bool has(Phase p) const { return mask_ & (1u << static_cast<int>(p)); }
    bool contains(PhaseSet other) const { return (other.mask_ & ~mask_) == 0; }
    int count() const;
    bool empty() const { return mask_ == 0; }
    std::vector<Phase> list() const;
    std::string str() const;
    bool operator==(const PhaseSet&) const = default;

private:
    uint8_t mask_ = 0;
};

char phase_char(Phase p);

enum class BusKind { Substation, FeederHead, Primary, Secondary, Load };

struct Bus {
    std::string id;
    BusKind kind = BusKind::Primary;
    PhaseSet phases;
    double base_kv = 0.0;  // line-to-neutral kV
};

struct LineSegment {
    std::string id;
    std::string from, to;
    PhaseSet phases;
    Eigen::MatrixXd r_ohm;   // series resistance, |phases| x |phases|
    Eigen::MatrixXd x_ohm;   // series reactance
    Eigen::MatrixXd ysh_us;  // total shunt susceptance, microsiemens
};

struct TransformerBranch {
    std::string id;
    std::string from, to;  // from = primary side; R/X referred to it
    PhaseSet phases;
    Eigen::MatrixXd r_ohm;
    Eigen::MatrixXd x_ohm;
    double no_load_loss_kw = 0.0;  // per phase
    double turns_ratio = 1.0;      // physical winding ratio (L-N)
};

struct CapacitorBank {
    std::string id;
    std::string bus;
    PhaseSet phases;
    std::vector<double> b_us_per_phase;  // susceptance, microsiemens, >= 0
};

struct LoadPoint {
    std::string id;
    std::string bus;
    PhaseSet phases;
    bool metered = false;            // member of AMI-power set
    bool has_voltage_meter = false;  // member of AMI-voltage set
    double pf_min = 0.85;
    double pf_max = 1.0;
};

struct PvUnit {
    std::string id;
    std::string bus;
    PhaseSet phases;
    double rated_kw = 0.0;
};

/// Immutable feeder model in physical units, as loaded from a topology
/// document. Safe to share across concurrent snapshot solves.
struct NetworkModel {
    double base_mva = 1.0;  // per-phase MVA base
    std::vector<Bus> buses;
    std::vector<LineSegment> lines;
    std::vector<TransformerBranch> transformers;
    std::vector<CapacitorBank> capacitors;
    std::vector<LoadPoint> loads;
    std::vector<PvUnit> pvs;

    int substation_index = -1;
    int feeder_head_index = -1;
    int source_line_index = -1;  // index into lines: substation -> feeder-head

    int bus_index(const std::string& id) const;
    const Bus& bus(const std::string& id) const { return buses[bus_index(id)]; }
};

NetworkModel load_network(const std::string& json_text);
NetworkModel load_network_file(const std::string& path);
std::string export_network(const NetworkModel& net);

// ---------------------------------------------------------------------------
// Flattened per-unit view consumed by the solvers.

/// One series branch (line, transformer, or the source-impedance segment)
/// in per-unit on its buses' voltage bases.
struct PuBranch {
    int from_bus = -1, to_bus = -1;
    PhaseSet phases;
    Eigen::MatrixXd R, X;  // series, per-unit, referred to the to-side
    Eigen::MatrixXd Bsh;   // total charging susceptance, per-unit (lines only)
    double tap = 1.0;      // per-unit off-nominal ratio; V_from/tap - V_to = Z*I
    bool is_transformer = false;
    bool is_source = false;
    double no_load_loss_pu = 0.0;  // per phase, charged at the from bus
    std::vector<int> from_bp;      // global bus-phase index at each end,
    std::vector<int> to_bp;        // one entry per branch phase
    std::string id;
};

struct PuCapacitor {
    int bus = -1;
    std::vector<int> bp;       // bus-phase indices
    std::vector<double> b_pu;  // per phase
    std::string id;
};

struct PuLoad {
    int bus = -1;
    std::vector<int> bp;
    bool metered = false;
    bool has_voltage_meter = false;
    double pf_min = 0.85, pf_max = 1.0;
    std::string id;
};

struct PuPv {
    int bus = -1;
    std::vector<int> bp;
    std::string id;
};

/// Per-unit network: every electrical quantity normalized, bus-phase pairs
/// flattened to one global index space.
struct PuNetwork {
    double base_mva = 1.0;
    int n_bus = 0;
    int n_bus_phase = 0;

    std::vector<std::string> bus_ids;
    std::vector<BusKind> bus_kinds;
    std::vector<PhaseSet> bus_phases;
    std::vector<double> bus_base_kv;
    std::vector<int> bp_offset;  // per bus, first bus-phase index
    std::vector<Phase> bp_phase; // per bus-phase, which phase
    std::vector<int> bp_bus;     // per bus-phase, owning bus

    std::vector<PuBranch> branches;  // lines first, then transformers
    std::vector<PuCapacitor> capacitors;
    std::vector<PuLoad> loads;
    std::vector<PuPv> pvs;

    int substation = -1;
    int feeder_head = -1;
    int source_branch = -1;

    // adjacency: per bus, (branch index, true if this bus is the from end)
    std::vector<std::vector<std::pair<int, bool>>> incident;

    int bus_phase_index(int bus, Phase p) const;
    double s_base_kw() const { return base_mva * 1000.0; }
    double kw_to_pu(double kw) const { return kw / s_base_kw(); }
    double pu_to_kw(double pu) const { return pu * s_base_kw(); }
};

/// Builds the normalized per-unit view; Z_pu = Z_ohm / (kV_LN^2 / MVA_base).
PuNetwork to_per_unit(const NetworkModel& net);

}  // namespace feedertk

#endif
