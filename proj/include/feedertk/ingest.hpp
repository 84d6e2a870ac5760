#ifndef FEEDERTK_INGEST_HPP
#define FEEDERTK_INGEST_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "feedertk/csv.hpp"
#include "feedertk/netmodel.hpp"

namespace feedertk {

class IngestError : public std::runtime_error {
public:
    explicit IngestError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class MeterChannel { Delivered, Received, PvProduction };

struct MeterEnergyRecord {
    std::string meter_id;
    std::string bus;
    MeterChannel channel = MeterChannel::Delivered;
    int hour = 0;             // 0-23, start of the interval
    int minute = 0;           // within the hour
    int interval_minutes = 60;  // 15 or 60
    double energy_kwh = 0.0;
};

struct VoltageRecord {
    std::string meter_id;
    std::string bus;
    Phase phase = Phase::A;
    int hour = 0;
    double v_mag_pu = 0.0;
    bool out_of_band = false;  // outside the (0.5, 1.5) sanity band
};

struct FeederHeadRecord {
    int hour = 0;
    double p_total_kw = 0.0;
    double q_total_kvar = 0.0;
    double v_mag_phase_a_pu = 0.0;
};

struct VoltMeasurement {
    int bus_phase;  // PuNetwork bus-phase index
    double v_pu;
};

/// Per-hour measurement bindings resolved against the network. Immutable
/// after build.
struct MeasurementSet {
    // [hour][load index]: gross kW, absent when the meter had a gap that
    // hour (the load is then treated as unmetered for that hour).
    std::vector<std::vector<std::optional<double>>> gross_kw;
    // [hour][pv index]: production kW.
    std::vector<std::vector<double>> pv_kw;
    // [hour]: AMI voltage magnitudes at voltage-metered bus-phases.
    std::vector<std::vector<VoltMeasurement>> volts;
    std::array<FeederHeadRecord, 24> feeder_head{};
    std::vector<VoltageRecord> flagged_voltages;  // out-of-band, excluded

    bool metered(int hour, int load) const { return gross_kw[hour][load].has_value(); }
};

/// Hourly kW from the energy records of one meter channel: the kWh total
/// over the hour divided by one hour. A 15-minute channel needs all four
/// intervals; a gap yields an empty optional, never a zero fill.
std::optional<double> derive_hourly_power(const std::vector<MeterEnergyRecord>& records);

/// Gross household demand: delivered - received + PV production.
double gross_load(double p_delivered_kw, double p_received_kw, double p_pv_kw);

/// Parsers for the three measurement CSV schemas.
std::vector<MeterEnergyRecord> parse_ami_energy(const csv::Table& t);
std::vector<VoltageRecord> parse_ami_voltage(const csv::Table& t);
std::array<FeederHeadRecord, 24> parse_das(const csv::Table& t);

MeasurementSet build_measurement_set(const PuNetwork& net,
                                     const std::vector<MeterEnergyRecord>& ami_energy,
                                     const std::vector<VoltageRecord>& ami_voltage,
                                     const std::array<FeederHeadRecord, 24>& das);

/// Convenience: read the three files from a directory (ami_energy.csv,
/// ami_voltage.csv, das.csv) and bind them.
MeasurementSet load_measurements(const PuNetwork& net, const std::string& dir);

}  // namespace feedertk

#endif
