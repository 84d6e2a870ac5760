#include "feedertk/netmodel.hpp"

#include <fstream>
#include <queue>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace feedertk {

using json = nlohmann::ordered_json;

char phase_char(Phase p) { return "abc"[static_cast<int>(p)]; }

PhaseSet PhaseSet::parse(const std::string& s) {
    uint8_t mask = 0;
    for (char c : s) {
        switch (c) {
            case 'a': mask |= 1; break;
            case 'b': mask |= 2; break;
            case 'c': mask |= 4; break;
            default: throw ModelError("invalid phase character '" + std::string(1, c) + "'");
        }
    }
    if (mask == 0) throw ModelError("empty phase set");
    return PhaseSet(mask);
}

int PhaseSet::count() const {
    int n = 0;
    for (int i = 0; i < 3; ++i) n += (mask_ >> i) & 1;
    return n;
}

std::vector<Phase> PhaseSet::list() const {
    std::vector<Phase> out;
    for (int i = 0; i < 3; ++i)
        if (mask_ & (1u << i)) out.push_back(static_cast<Phase>(i));
    return out;
}

std::string PhaseSet::str() const {
    std::string s;
    for (Phase p : list()) s += phase_char(p);
    return s;
}

int NetworkModel::bus_index(const std::string& id) const {
    for (size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == id) return static_cast<int>(i);
    throw ModelError("unknown bus id '" + id + "'");
}

namespace {

BusKind parse_kind(const std::string& s) {
    if (s == "substation") return BusKind::Substation;
    if (s == "feeder_head") return BusKind::FeederHead;
    if (s == "primary") return BusKind::Primary;
    if (s == "secondary") return BusKind::Secondary;
    if (s == "load") return BusKind::Load;
    throw ModelError("unknown bus kind '" + s + "'");
}

std::string kind_str(BusKind k) {
    switch (k) {
        case BusKind::Substation: return "substation";
        case BusKind::FeederHead: return "feeder_head";
        case BusKind::Primary: return "primary";
        case BusKind::Secondary: return "secondary";
        case BusKind::Load: return "load";
    }
    return "?";
}

Eigen::MatrixXd parse_matrix(const json& j, int n, const std::string& elem) {
    if (!j.is_array() || static_cast<int>(j.size()) != n)
        throw ModelError("element '" + elem + "': matrix must be " + std::to_string(n) + "x" +
                         std::to_string(n));
    Eigen::MatrixXd m(n, n);
    for (int r = 0; r < n; ++r) {
        const auto& row = j[r];
        if (!row.is_array() || static_cast<int>(row.size()) != n)
            throw ModelError("element '" + elem + "': ragged matrix row");
        for (int c = 0; c < n; ++c) m(r, c) = row[c].get<double>();
    }
    if (!m.isApprox(m.transpose(), 1e-9))
        throw ModelError("element '" + elem + "': matrix not symmetric");
    return m;
}

json dump_matrix(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

void check_series_invertible(const Eigen::MatrixXd& R, const Eigen::MatrixXd& X,
                             const std::string& elem) {
    Eigen::MatrixXcd Z = R.cast<std::complex<double>>();
    Z += std::complex<double>(0, 1) * X.cast<std::complex<double>>();
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(Z);
    lu.setThreshold(1e-12);
    if (lu.rank() < Z.rows())
        throw ModelError("element '" + elem + "': singular series impedance matrix");
}

struct IdChecker {
    std::unordered_set<std::string> seen;
    void add(const std::string& id, const char* what) {
        if (!seen.insert(id).second)
            throw ModelError(std::string("duplicate ") + what + " id '" + id + "'");
    }
};

}  // namespace

NetworkModel load_network(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ModelError(std::string("topology JSON parse error: ") + e.what());
    }

    NetworkModel net;
    net.base_mva = doc.at("base_mva").get<double>();
    if (net.base_mva <= 0) throw ModelError("base_mva must be > 0");

    IdChecker bus_ids;
    std::unordered_map<std::string, int> bus_of;
    for (const auto& jb : doc.at("buses")) {
        Bus b;
        b.id = jb.at("id").get<std::string>();
        bus_ids.add(b.id, "bus");
        b.kind = parse_kind(jb.at("kind").get<std::string>());
        b.phases = PhaseSet::parse(jb.at("phases").get<std::string>());
        b.base_kv = jb.at("base_kv").get<double>();
        if (b.base_kv <= 0) throw ModelError("bus '" + b.id + "': base_kv must be > 0");
        bus_of[b.id] = static_cast<int>(net.buses.size());
        net.buses.push_back(std::move(b));
    }

    auto require_bus = [&](const std::string& id, const std::string& elem) -> int {
        auto it = bus_of.find(id);
        if (it == bus_of.end())
            throw ModelError("element '" + elem + "': dangling reference to bus '" + id + "'");
        return it->second;
    };
    auto require_phases = [&](PhaseSet ep, int bus, const std::string& elem) {
        if (!net.buses[bus].phases.contains(ep))
            throw ModelError("element '" + elem + "': phase mismatch with bus '" +
                             net.buses[bus].id + "'");
    };

    IdChecker elem_ids;
    if (doc.contains("lines"))
        for (const auto& jl : doc["lines"]) {
            LineSegment l;
            l.id = jl.at("id").get<std::string>();
            elem_ids.add(l.id, "element");
            l.from = jl.at("from").get<std::string>();
            l.to = jl.at("to").get<std::string>();
            l.phases = PhaseSet::parse(jl.at("phases").get<std::string>());
            int n = l.phases.count();
            l.r_ohm = parse_matrix(jl.at("r_ohm"), n, l.id);
            l.x_ohm = parse_matrix(jl.at("x_ohm"), n, l.id);
            l.ysh_us = parse_matrix(jl.at("ysh_us"), n, l.id);
            int fi = require_bus(l.from, l.id), ti = require_bus(l.to, l.id);
            require_phases(l.phases, fi, l.id);
            require_phases(l.phases, ti, l.id);
            if (std::abs(net.buses[fi].base_kv - net.buses[ti].base_kv) > 1e-9)
                throw ModelError("line '" + l.id + "': endpoint voltage bases differ");
            check_series_invertible(l.r_ohm, l.x_ohm, l.id);
            net.lines.push_back(std::move(l));
        }

    if (doc.contains("transformers"))
        for (const auto& jt : doc["transformers"]) {
            TransformerBranch t;
            t.id = jt.at("id").get<std::string>();
            elem_ids.add(t.id, "element");
            t.from = jt.at("from").get<std::string>();
            t.to = jt.at("to").get<std::string>();
            t.phases = PhaseSet::parse(jt.at("phases").get<std::string>());
            int n = t.phases.count();
            t.r_ohm = parse_matrix(jt.at("r_ohm"), n, t.id);
            t.x_ohm = parse_matrix(jt.at("x_ohm"), n, t.id);
            t.no_load_loss_kw = jt.at("no_load_loss_kw").get<double>();
            t.turns_ratio = jt.at("turns_ratio").get<double>();
            if (t.no_load_loss_kw < 0)
                throw ModelError("transformer '" + t.id + "': negative no-load loss");
            if (t.turns_ratio <= 0)
                throw ModelError("transformer '" + t.id + "': turns_ratio must be > 0");
            int fi = require_bus(t.from, t.id), ti = require_bus(t.to, t.id);
            require_phases(t.phases, fi, t.id);
            require_phases(t.phases, ti, t.id);
            check_series_invertible(t.r_ohm, t.x_ohm, t.id);
            net.transformers.push_back(std::move(t));
        }

    if (doc.contains("capacitors"))
        for (const auto& jc : doc["capacitors"]) {
            CapacitorBank c;
            c.id = jc.at("id").get<std::string>();
            elem_ids.add(c.id, "element");
            c.bus = jc.at("bus").get<std::string>();
            c.phases = PhaseSet::parse(jc.at("phases").get<std::string>());
            for (const auto& v : jc.at("b_us_per_phase")) c.b_us_per_phase.push_back(v.get<double>());
            if (static_cast<int>(c.b_us_per_phase.size()) != c.phases.count())
                throw ModelError("capacitor '" + c.id + "': b_us_per_phase length mismatch");
            for (double b : c.b_us_per_phase)
                if (b < 0) throw ModelError("capacitor '" + c.id + "': negative susceptance");
            int bi = require_bus(c.bus, c.id);
            require_phases(c.phases, bi, c.id);
            net.capacitors.push_back(std::move(c));
        }

    if (doc.contains("loads"))
        for (const auto& jl : doc["loads"]) {
            LoadPoint l;
            l.id = jl.at("id").get<std::string>();
            elem_ids.add(l.id, "element");
            l.bus = jl.at("bus").get<std::string>();
            l.phases = PhaseSet::parse(jl.at("phases").get<std::string>());
            l.metered = jl.at("metered").get<bool>();
            l.has_voltage_meter = jl.at("has_voltage_meter").get<bool>();
            l.pf_min = jl.value("pf_min", 0.85);
            l.pf_max = jl.value("pf_max", 1.0);
            if (l.pf_min <= 0 || l.pf_min > l.pf_max || l.pf_max > 1.0)
                throw ModelError("load '" + l.id + "': invalid power factor bounds");
            int bi = require_bus(l.bus, l.id);
            require_phases(l.phases, bi, l.id);
            net.loads.push_back(std::move(l));
        }

    if (doc.contains("pvs"))
        for (const auto& jp : doc["pvs"]) {
            PvUnit p;
            p.id = jp.at("id").get<std::string>();
            elem_ids.add(p.id, "element");
            p.bus = jp.at("bus").get<std::string>();
            p.phases = PhaseSet::parse(jp.at("phases").get<std::string>());
            p.rated_kw = jp.at("rated_kw").get<double>();
            if (p.rated_kw <= 0) throw ModelError("pv '" + p.id + "': rated_kw must be > 0");
            int bi = require_bus(p.bus, p.id);
            require_phases(p.phases, bi, p.id);
            net.pvs.push_back(std::move(p));
        }

    // Exactly one substation and one feeder-head.
    for (size_t i = 0; i < net.buses.size(); ++i) {
        if (net.buses[i].kind == BusKind::Substation) {
            if (net.substation_index >= 0) throw ModelError("multiple substation buses");
            net.substation_index = static_cast<int>(i);
        }
        if (net.buses[i].kind == BusKind::FeederHead) {
            if (net.feeder_head_index >= 0) throw ModelError("multiple feeder-head buses");
            net.feeder_head_index = static_cast<int>(i);
        }
    }
    if (net.substation_index < 0) throw ModelError("no substation bus");
    if (net.feeder_head_index < 0) throw ModelError("no feeder-head bus");

    // Source impedance segment: the line joining substation and feeder-head.
    const std::string& sub_id = net.buses[net.substation_index].id;
    const std::string& head_id = net.buses[net.feeder_head_index].id;
    for (size_t i = 0; i < net.lines.size(); ++i) {
        const auto& l = net.lines[i];
        if (l.from == sub_id && l.to == head_id) {
            if (net.source_line_index >= 0)
                throw ModelError("multiple substation/feeder-head segments");
            net.source_line_index = static_cast<int>(i);
        }
    }
    if (net.source_line_index < 0)
        throw ModelError("no source-impedance line from substation to feeder-head");
    if (net.lines[net.source_line_index].ysh_us.cwiseAbs().maxCoeff() > 0)
        throw ModelError("source-impedance line '" + net.lines[net.source_line_index].id +
                         "' must have zero shunt admittance");

    // Connectivity over lines + transformers.
    std::vector<std::vector<int>> adj(net.buses.size());
    auto link = [&](const std::string& a, const std::string& b) {
        int ia = bus_of[a], ib = bus_of[b];
        adj[ia].push_back(ib);
        adj[ib].push_back(ia);
    };
    for (const auto& l : net.lines) link(l.from, l.to);
    for (const auto& t : net.transformers) link(t.from, t.to);
    std::vector<char> seen(net.buses.size(), 0);
    std::queue<int> q;
    q.push(net.substation_index);
    seen[net.substation_index] = 1;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = 1;
                q.push(v);
            }
    }
    for (size_t i = 0; i < net.buses.size(); ++i)
        if (!seen[i])
            throw ModelError("bus '" + net.buses[i].id + "' is disconnected from the substation");

    return net;
}

NetworkModel load_network_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open topology file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_network(ss.str());
}

std::string export_network(const NetworkModel& net) {
    json doc;
    doc["base_mva"] = net.base_mva;
    doc["buses"] = json::array();
    for (const auto& b : net.buses)
        doc["buses"].push_back(
            {{"id", b.id}, {"kind", kind_str(b.kind)}, {"phases", b.phases.str()}, {"base_kv", b.base_kv}});
    doc["lines"] = json::array();
    for (const auto& l : net.lines)
        doc["lines"].push_back({{"id", l.id},
                                {"from", l.from},
                                {"to", l.to},
                                {"phases", l.phases.str()},
                                {"r_ohm", dump_matrix(l.r_ohm)},
                                {"x_ohm", dump_matrix(l.x_ohm)},
                                {"ysh_us", dump_matrix(l.ysh_us)}});
    doc["transformers"] = json::array();
    for (const auto& t : net.transformers)
        doc["transformers"].push_back({{"id", t.id},
                                       {"from", t.from},
                                       {"to", t.to},
                                       {"phases", t.phases.str()},
                                       {"r_ohm", dump_matrix(t.r_ohm)},
                                       {"x_ohm", dump_matrix(t.x_ohm)},
                                       {"no_load_loss_kw", t.no_load_loss_kw},
                                       {"turns_ratio", t.turns_ratio}});
    doc["capacitors"] = json::array();
    for (const auto& c : net.capacitors)
        doc["capacitors"].push_back({{"id", c.id},
                                     {"bus", c.bus},
                                     {"phases", c.phases.str()},
                                     {"b_us_per_phase", c.b_us_per_phase}});
    doc["loads"] = json::array();
    for (const auto& l : net.loads)
        doc["loads"].push_back({{"id", l.id},
                                {"bus", l.bus},
                                {"phases", l.phases.str()},
                                {"metered", l.metered},
                                {"has_voltage_meter", l.has_voltage_meter},
                                {"pf_min", l.pf_min},
                                {"pf_max", l.pf_max}});
    doc["pvs"] = json::array();
    for (const auto& p : net.pvs)
        doc["pvs"].push_back(
            {{"id", p.id}, {"bus", p.bus}, {"phases", p.phases.str()}, {"rated_kw", p.rated_kw}});
    return doc.dump(2) + "\n";
}

int PuNetwork::bus_phase_index(int bus, Phase p) const {
    const auto ph = bus_phases[bus].list();
    for (size_t k = 0; k < ph.size(); ++k)
        if (ph[k] == p) return bp_offset[bus] + static_cast<int>(k);
    throw ModelError("bus '" + bus_ids[bus] + "' does not carry phase " +
                     std::string(1, phase_char(p)));
}

PuNetwork to_per_unit(const NetworkModel& net) {
    PuNetwork pu;
    pu.base_mva = net.base_mva;
    pu.n_bus = static_cast<int>(net.buses.size());
    pu.substation = net.substation_index;
    pu.feeder_head = net.feeder_head_index;

    std::unordered_map<std::string, int> bus_of;
    for (int i = 0; i < pu.n_bus; ++i) {
        const Bus& b = net.buses[i];
        bus_of[b.id] = i;
        pu.bus_ids.push_back(b.id);
        pu.bus_kinds.push_back(b.kind);
        pu.bus_phases.push_back(b.phases);
        pu.bus_base_kv.push_back(b.base_kv);
        pu.bp_offset.push_back(pu.n_bus_phase);
        for (Phase p : b.phases.list()) {
            pu.bp_phase.push_back(p);
            pu.bp_bus.push_back(i);
            ++pu.n_bus_phase;
        }
    }

    auto z_base = [&](int bus) {
        double kv = net.buses[bus].base_kv;
        return kv * kv / net.base_mva;
    };
    auto bp_indices = [&](int bus, PhaseSet ps) {
        std::vector<int> out;
        for (Phase p : ps.list()) out.push_back(pu.bus_phase_index(bus, p));
        return out;
    };

    for (size_t i = 0; i < net.lines.size(); ++i) {
        const LineSegment& l = net.lines[i];
        PuBranch b;
        b.id = l.id;
        b.from_bus = bus_of[l.from];
        b.to_bus = bus_of[l.to];
        b.phases = l.phases;
        double zb = z_base(b.from_bus);
        b.R = l.r_ohm / zb;
        b.X = l.x_ohm / zb;
        b.Bsh = l.ysh_us * 1e-6 * zb;  // Y_pu = Y_siemens * Z_base
        b.is_source = (static_cast<int>(i) == net.source_line_index);
        b.from_bp = bp_indices(b.from_bus, b.phases);
        b.to_bp = bp_indices(b.to_bus, b.phases);
        if (b.is_source) pu.source_branch = static_cast<int>(pu.branches.size());
        pu.branches.push_back(std::move(b));
    }

    for (const TransformerBranch& t : net.transformers) {
        PuBranch b;
        b.id = t.id;
        b.from_bus = bus_of[t.from];
        b.to_bus = bus_of[t.to];
        b.phases = t.phases;
        b.is_transformer = true;
        double kv_f = net.buses[b.from_bus].base_kv;
        double kv_t = net.buses[b.to_bus].base_kv;
        // Impedance is given referred to the from side; refer it to the to
        // side through the winding ratio, then normalize on the to-side base.
        double zb_to = z_base(b.to_bus);
        double n2 = t.turns_ratio * t.turns_ratio;
        b.R = t.r_ohm / n2 / zb_to;
        b.X = t.x_ohm / n2 / zb_to;
        b.Bsh = Eigen::MatrixXd::Zero(t.phases.count(), t.phases.count());
        b.tap = t.turns_ratio / (kv_f / kv_t);
        b.no_load_loss_pu = t.no_load_loss_kw / pu.s_base_kw();
        b.from_bp = bp_indices(b.from_bus, b.phases);
        b.to_bp = bp_indices(b.to_bus, b.phases);
        pu.branches.push_back(std::move(b));
    }

    for (const CapacitorBank& c : net.capacitors) {
        PuCapacitor pc;
        pc.id = c.id;
        pc.bus = bus_of[c.bus];
        pc.bp = bp_indices(pc.bus, c.phases);
        double zb = z_base(pc.bus);
        for (double b_us : c.b_us_per_phase) pc.b_pu.push_back(b_us * 1e-6 * zb);
        pu.capacitors.push_back(std::move(pc));
    }

    for (const LoadPoint& l : net.loads) {
        PuLoad pl;
        pl.id = l.id;
        pl.bus = bus_of[l.bus];
        pl.bp = bp_indices(pl.bus, l.phases);
        pl.metered = l.metered;
        pl.has_voltage_meter = l.has_voltage_meter;
        pl.pf_min = l.pf_min;
        pl.pf_max = l.pf_max;
        pu.loads.push_back(std::move(pl));
    }

    for (const PvUnit& p : net.pvs) {
        PuPv pp;
        pp.id = p.id;
        pp.bus = bus_of[p.bus];
        pp.bp = bp_indices(pp.bus, p.phases);
        pu.pvs.push_back(std::move(pp));
    }

    pu.incident.resize(pu.n_bus);
    for (size_t bi = 0; bi < pu.branches.size(); ++bi) {
        pu.incident[pu.branches[bi].from_bus].emplace_back(static_cast<int>(bi), true);
        pu.incident[pu.branches[bi].to_bus].emplace_back(static_cast<int>(bi), false);
    }
    return pu;
}

}  // namespace feedertk
