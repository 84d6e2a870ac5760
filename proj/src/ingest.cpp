#include "feedertk/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

namespace feedertk {

namespace {

MeterChannel parse_channel(const std::string& s) {
    if (s == "delivered") return MeterChannel::Delivered;
    if (s == "received") return MeterChannel::Received;
    if (s == "pv_production") return MeterChannel::PvProduction;
    throw IngestError("unknown meter channel '" + s + "'");
}

double parse_num(const std::string& s, const char* what) {
    try {
        size_t pos;
        double v = std::stod(s, &pos);
        if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw IngestError(std::string("invalid ") + what + " value '" + s + "'");
    }
}

int parse_hour(const std::string& s) {
    int h = static_cast<int>(parse_num(s, "hour"));
    if (h < 0 || h > 23) throw IngestError("hour out of range: '" + s + "'");
    return h;
}

}  // namespace

std::optional<double> derive_hourly_power(const std::vector<MeterEnergyRecord>& records) {
    if (records.empty()) return std::nullopt;
    int iv = records.front().interval_minutes;
    for (const auto& r : records)
        if (r.interval_minutes != iv)
            throw IngestError("meter '" + records.front().meter_id +
                              "': mixed interval lengths within one hour");
    if (iv == 60) {
        if (records.size() != 1)
            throw IngestError("meter '" + records.front().meter_id +
                              "': duplicate 60-minute record in one hour");
        return records.front().energy_kwh;  // kWh over 1 h == kW
    }
    if (iv != 15)
        throw IngestError("meter '" + records.front().meter_id + "': interval_minutes must be 15 or 60");
    std::set<int> minutes;
    double total = 0;
    for (const auto& r : records) {
        if (!minutes.insert(r.minute).second)
            throw IngestError("meter '" + records.front().meter_id + "': duplicate 15-minute interval");
        total += r.energy_kwh;
    }
    if (minutes != std::set<int>{0, 15, 30, 45}) return std::nullopt;  // gap: flag, don't zero-fill
    return total;
}

double gross_load(double p_delivered_kw, double p_received_kw, double p_pv_kw) {
    if (!std::isfinite(p_delivered_kw) || !std::isfinite(p_received_kw) || !std::isfinite(p_pv_kw))
        throw IngestError("non-finite gross-load input");
    return p_delivered_kw - p_received_kw + p_pv_kw;
}

std::vector<MeterEnergyRecord> parse_ami_energy(const csv::Table& t) {
    int c_meter = t.column("meter_id"), c_bus = t.column("bus"), c_ch = t.column("channel");
    int c_start = t.column("interval_start"), c_iv = t.column("interval_minutes");
    int c_kwh = t.column("energy_kwh");
    std::vector<MeterEnergyRecord> out;
    for (const auto& row : t.rows) {
        MeterEnergyRecord r;
        r.meter_id = row[c_meter];
        r.bus = row[c_bus];
        r.channel = parse_channel(row[c_ch]);
        int y, mo, d, hh, mi;
        if (sscanf(row[c_start].c_str(), "%d-%d-%dT%d:%d", &y, &mo, &d, &hh, &mi) != 5 || hh < 0 ||
            hh > 23 || mi < 0 || mi > 59)
            throw IngestError("invalid interval_start '" + row[c_start] + "'");
        r.hour = hh;
        r.minute = mi;
        r.interval_minutes = static_cast<int>(parse_num(row[c_iv], "interval_minutes"));
        if (r.interval_minutes != 15 && r.interval_minutes != 60)
            throw IngestError("interval_minutes must be 15 or 60 (meter '" + r.meter_id + "')");
        r.energy_kwh = parse_num(row[c_kwh], "energy_kwh");
        if (r.energy_kwh < 0)
            throw IngestError("negative energy_kwh for meter '" + r.meter_id + "'");
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<VoltageRecord> parse_ami_voltage(const csv::Table& t) {
    int c_meter = t.column("meter_id"), c_bus = t.column("bus"), c_ph = t.column("phase");
    int c_hour = t.column("hour"), c_v = t.column("v_mag_pu");
    std::vector<VoltageRecord> out;
    for (const auto& row : t.rows) {
        VoltageRecord r;
        r.meter_id = row[c_meter];
        r.bus = row[c_bus];
        PhaseSet ps = PhaseSet::parse(row[c_ph]);
        if (ps.count() != 1) throw IngestError("voltage record must name one phase");
        r.phase = ps.list()[0];
        r.hour = parse_hour(row[c_hour]);
        r.v_mag_pu = parse_num(row[c_v], "v_mag_pu");
        if (r.v_mag_pu <= 0) throw IngestError("non-positive v_mag_pu for meter '" + r.meter_id + "'");
        r.out_of_band = (r.v_mag_pu <= 0.5 || r.v_mag_pu >= 1.5);
        out.push_back(std::move(r));
    }
    return out;
}

std::array<FeederHeadRecord, 24> parse_das(const csv::Table& t) {
    int c_hour = t.column("hour"), c_p = t.column("p_total_kw"), c_q = t.column("q_total_kvar");
    int c_v = t.column("v_mag_phase_a_pu");
    std::array<FeederHeadRecord, 24> out{};
    std::array<bool, 24> seen{};
    for (const auto& row : t.rows) {
        int h = parse_hour(row[c_hour]);
        if (seen[h]) throw IngestError("duplicate DAS record for hour " + std::to_string(h));
        seen[h] = true;
        out[h] = {h, parse_num(row[c_p], "p_total_kw"), parse_num(row[c_q], "q_total_kvar"),
                  parse_num(row[c_v], "v_mag_phase_a_pu")};
        if (out[h].v_mag_phase_a_pu <= 0)
            throw IngestError("non-positive feeder-head voltage at hour " + std::to_string(h));
    }
    for (int h = 0; h < 24; ++h)
        if (!seen[h]) throw IngestError("no DAS record for hour " + std::to_string(h));
    return out;
}

MeasurementSet build_measurement_set(const PuNetwork& net,
                                     const std::vector<MeterEnergyRecord>& ami_energy,
                                     const std::vector<VoltageRecord>& ami_voltage,
                                     const std::array<FeederHeadRecord, 24>& das) {
    MeasurementSet ms;
    ms.gross_kw.assign(24, std::vector<std::optional<double>>(net.loads.size()));
    ms.pv_kw.assign(24, std::vector<double>(net.pvs.size(), 0.0));
    ms.volts.assign(24, {});
    ms.feeder_head = das;

    std::unordered_map<std::string, int> bus_of;
    for (int i = 0; i < net.n_bus; ++i) bus_of[net.bus_ids[i]] = i;

    // Group energy records per (meter, channel, hour).
    std::map<std::tuple<std::string, int, int>, std::vector<MeterEnergyRecord>> groups;
    std::unordered_map<std::string, int> meter_bus;
    for (const auto& r : ami_energy) {
        auto it = bus_of.find(r.bus);
        if (it == bus_of.end())
            throw IngestError("meter '" + r.meter_id + "' references unknown bus '" + r.bus + "'");
        auto [mit, inserted] = meter_bus.try_emplace(r.meter_id, it->second);
        if (!inserted && mit->second != it->second)
            throw IngestError("meter '" + r.meter_id + "' bound to more than one bus");
        groups[{r.meter_id, static_cast<int>(r.channel), r.hour}].push_back(r);
    }

    // Hourly kW per (bus, channel, hour); a gap in any needed channel
    // demotes the load for that hour.
    std::map<std::pair<int, int>, std::array<std::optional<double>, 3>> bus_power;  // (bus,hour)
    std::map<std::pair<int, int>, bool> bus_gap;
    for (auto& [key, recs] : groups) {
        const auto& [meter, ch, hour] = key;
        int bus = meter_bus[meter];
        auto kw = derive_hourly_power(recs);
        auto& slot = bus_power[{bus, hour}][ch];
        if (slot.has_value())
            throw IngestError("duplicate records for meter '" + meter + "' hour " +
                              std::to_string(hour));
        if (kw.has_value())
            slot = *kw;
        else
            bus_gap[{bus, hour}] = true;
    }

    for (int h = 0; h < 24; ++h) {
        for (size_t li = 0; li < net.loads.size(); ++li) {
            int bus = net.loads[li].bus;
            auto it = bus_power.find({bus, h});
            if (it == bus_power.end() || bus_gap.count({bus, h})) continue;
            const auto& ch = it->second;
            if (!ch[int(MeterChannel::Delivered)].has_value()) continue;
            double pd = *ch[int(MeterChannel::Delivered)];
            double pr = ch[int(MeterChannel::Received)].value_or(0.0);
            double ppv = ch[int(MeterChannel::PvProduction)].value_or(0.0);
            ms.gross_kw[h][li] = gross_load(pd, pr, ppv);
        }
        for (size_t pi = 0; pi < net.pvs.size(); ++pi) {
            int bus = net.pvs[pi].bus;
            auto it = bus_power.find({bus, h});
            std::optional<double> p;
            if (it != bus_power.end()) p = it->second[int(MeterChannel::PvProduction)];
            if (!p.has_value())
                throw IngestError("no PV production data for pv '" + net.pvs[pi].id + "' at hour " +
                                  std::to_string(h));
            ms.pv_kw[h][pi] = *p;
        }
    }

    std::set<std::tuple<std::string, int, int>> volt_seen;  // (meter, phase, hour)
    for (const auto& r : ami_voltage) {
        auto it = bus_of.find(r.bus);
        if (it == bus_of.end())
            throw IngestError("voltage meter '" + r.meter_id + "' references unknown bus '" + r.bus +
                              "'");
        if (!volt_seen.insert({r.meter_id, static_cast<int>(r.phase), r.hour}).second)
            throw IngestError("duplicate voltage record for meter '" + r.meter_id + "' hour " +
                              std::to_string(r.hour));
        if (r.out_of_band) {
            ms.flagged_voltages.push_back(r);
            continue;
        }
        ms.volts[r.hour].push_back({net.bus_phase_index(it->second, r.phase), r.v_mag_pu});
    }
    for (auto& hv : ms.volts)
        std::sort(hv.begin(), hv.end(),
                  [](const VoltMeasurement& a, const VoltMeasurement& b) { return a.bus_phase < b.bus_phase; });
    return ms;
}

MeasurementSet load_measurements(const PuNetwork& net, const std::string& dir) {
    auto energy = parse_ami_energy(csv::read_csv(dir + "/ami_energy.csv"));
    auto volts = parse_ami_voltage(csv::read_csv(dir + "/ami_voltage.csv"));
    auto das = parse_das(csv::read_csv(dir + "/das.csv"));
    return build_measurement_set(net, energy, volts, das);
}

}  // namespace feedertk
