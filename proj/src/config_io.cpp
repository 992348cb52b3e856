#include "hybridtrap/config_io.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>

#include "hybridtrap/errors.hpp"
#include "hybridtrap/fields.hpp"
#include "hybridtrap/units.hpp"

namespace hybridtrap {

using nlohmann::json;

namespace {

// One section of the schema: key -> (reader, writer) pairs with unit scale factors.
class Section {
public:
    explicit Section(std::string name) : name_(std::move(name)) {}

    Section& number(const std::string& key, double& target, double scale = 1.0) {
        readers_[key] = [&target, scale, where = name_ + "." + key](const json& v) { target = as_number(v, where) * scale; };
        writers_.emplace_back(key, [&target, scale] { return json(target / scale); });
        return *this;
    }
    Section& vec(const std::string& key, Vec3& target, double scale = 1.0) {
        readers_[key] = [&target, scale, where = name_ + "." + key](const json& v) {
            if (!v.is_array() || v.size() != 3) fail(where, "expected an array of 3 numbers");
            target = Vec3{as_number(v[0], where), as_number(v[1], where), as_number(v[2], where)} * scale;
        };
        writers_.emplace_back(key, [&target, scale] { return json::array({target.x / scale, target.y / scale, target.z / scale}); });
        return *this;
    }
    Section& boolean(const std::string& key, bool& target) {
        readers_[key] = [&target, where = name_ + "." + key](const json& v) {
            if (!v.is_boolean()) fail(where, "expected true or false");
            target = v.get<bool>();
        };
        writers_.emplace_back(key, [&target] { return json(target); });
        return *this;
    }
    Section& integer(const std::string& key, int& target) {
        readers_[key] = [&target, where = name_ + "." + key](const json& v) {
            if (!v.is_number_integer()) fail(where, "expected an integer");
            target = v.get<int>();
        };
        writers_.emplace_back(key, [&target] { return json(target); });
        return *this;
    }
    Section& custom(const std::string& key, std::function<void(const json&)> read, std::function<json()> write) {
        readers_[key] = std::move(read);
        if (write) writers_.emplace_back(key, std::move(write));
        return *this;
    }

    void read(const json& j, std::vector<std::string>& problems) const {
        if (!j.contains(name_)) return;
        const json& s = j.at(name_);
        if (!s.is_object()) {
            problems.push_back(name_ + ": expected an object");
            return;
        }
        for (const auto& [key, value] : s.items()) {
            const auto it = readers_.find(key);
            if (it == readers_.end()) {
                problems.push_back(name_ + "." + key + ": unknown key");
                continue;
            }
            try {
                it->second(value);
            } catch (const ValidationError& e) {
                problems.push_back(e.problems().front());
            }
        }
    }

    void write(json& j) const {
        json s = json::object();
        for (const auto& [key, w] : writers_) s[key] = w();
        j[name_] = s;
    }

    [[nodiscard]] const std::string& name() const { return name_; }

private:
    [[noreturn]] static void fail(const std::string& where, const std::string& why) {
        throw ValidationError(where + ": " + why);
    }
    static double as_number(const json& v, const std::string& where) {
        if (!v.is_number()) fail(where, "expected a number");
        return v.get<double>();
    }

    std::string name_;
    std::map<std::string, std::function<void(const json&)>> readers_;
    std::vector<std::pair<std::string, std::function<json()>>> writers_;
};

constexpr double nm = 1e-9;
constexpr double um = 1e-6;
constexpr double mm = 1e-3;
constexpr double khz = 1e3;
constexpr double mev = 1e-3 * units::elementary_charge;

std::vector<Section> schema(ExperimentConfig& c, std::optional<Vec3>& optical_frequencies) {
    auto& s = c.sim;
    auto& p = c.protocol;
    std::vector<Section> out;
    out.emplace_back("particle");
    out.back()
        .number("radius_nm", s.particle.radius, nm)
        .number("density_kg_m3", s.particle.density)
        .number("charge_to_mass_C_kg", s.particle.charge_to_mass);
    out.emplace_back("environment");
    out.back()
        .number("pressure_mbar", s.environment.pressure, units::mbar(1.0))
        .number("gas_temperature_K", s.environment.gas_temperature)
        .number("gas_viscosity_uPa_s", s.environment.gas_viscosity, 1e-6)
        .number("gas_molecule_diameter_nm", s.environment.gas_molecule_diameter, nm)
        .vec("gravity_m_s2", s.environment.gravity);
    out.emplace_back("optical");
    out.back()
        .boolean("enabled", s.optical.enabled)
        .number("depth_meV", s.optical.depth, mev)
        .number("waist_x_nm", s.optical.waist_x, nm)
        .number("waist_y_nm", s.optical.waist_y, nm)
        .number("rayleigh_range_nm", s.optical.rayleigh_range, nm)
        .number("scattering_force_fN", s.optical.scattering_force, 1e-15)
        .boolean("duffing_enabled", s.optical.duffing_enabled)
        .custom(
            "frequencies_kHz",
            [&optical_frequencies](const json& v) {
                if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number()) {
                    throw ValidationError("optical.frequencies_kHz: expected an array of 3 numbers");
                }
                optical_frequencies = Vec3{v[0].get<double>(), v[1].get<double>(), v[2].get<double>()} * (units::two_pi * khz);
            },
            {});
    out.emplace_back("paul");
    out.back()
        .boolean("enabled", s.paul.enabled)
        .number("drive_frequency_kHz", s.paul.drive_frequency, units::two_pi * khz)
        .number("rf_amplitude_V", s.paul.rf_amplitude)
        .number("dc_offset_mV", s.paul.dc_offset, 1e-3)
        .number("endcap_voltage_V", s.paul.endcap_voltage)
        .vec("shim_voltage_V", s.paul.shim_voltage)
        .number("tip_distance_um", s.paul.tip_distance, um)
        .number("endcap_distance_mm", s.paul.endcap_distance, mm)
        .number("rf_efficiency", s.paul.rf_efficiency)
        .number("endcap_efficiency", s.paul.endcap_efficiency)
        .number("dc_offset_gain", s.paul.dc_offset_gain)
        .vec("shim_gain_V_m_per_V", s.paul.shim_gain)
        .vec("stray_field_V_m", s.paul.stray_field)
        .vec("trap_offset_nm", s.paul.trap_offset, nm);
    out.emplace_back("feedback");
    out.back()
        .custom(
            "schedule", [&s](const json& v) {
                if (!v.is_string()) throw ValidationError("feedback.schedule: expected a string");
                s.feedback.schedule = schedule_from_string(v.get<std::string>());
            },
            [&s] { return json(to_string(s.feedback.schedule)); })
        .vec("paul_frequencies_kHz", s.feedback.paul_frequencies, khz)
        .vec("optical_frequencies_kHz", s.feedback.optical_frequencies, khz)
        .number("quality_factor", s.feedback.quality_factor)
        .vec("paul_gain_N_s_m", s.feedback.paul_gain)
        .vec("optical_gain_N_s_m", s.feedback.optical_gain)
        .integer("loop_delay_samples", s.feedback.loop_delay)
        .number("voltage_clamp_V", s.feedback.voltage_clamp);
    out.emplace_back("detector");
    out.back()
        .vec("gain_V_m", s.detector.gain)
        .number("measurement_waist_um", s.detector.measurement_waist, um)
        .number("inversion_length_um", s.detector.inversion_length, um)
        .number("noise_floor_V_rtHz", s.detector.noise_floor)
        .vec("focus_nm", s.detector.focus, nm);
    out.emplace_back("run");
    out.back()
        .number("dt_ns", s.dt, nm)
        .number("sample_rate_kHz", s.sample_rate, khz)
        .custom(
            "seed", [&s](const json& v) {
                if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
                    throw ValidationError("run.seed: expected a non-negative integer");
                }
                s.seed = v.get<std::uint64_t>();
            },
            [&s] { return json(s.seed); });
    out.emplace_back("protocol");
    out.back()
        .number("pre_duration_s", p.pre_duration)
        .number("feedback_delay_s", p.feedback_delay)
        .number("evaluation_delay_s", p.evaluation_delay)
        .number("evaluation_window_s", p.evaluation_window)
        .number("paul_band_lo_kHz", p.paul_band.lo, khz)
        .number("paul_band_hi_kHz", p.paul_band.hi, khz)
        .number("optical_band_lo_kHz", p.optical_band.lo, khz)
        .number("optical_band_hi_kHz", p.optical_band.hi, khz)
        .number("optical_peak_threshold", p.optical_peak_threshold)
        .number("paul_peak_threshold", p.paul_peak_threshold)
        .number("segment_duration_ms", p.segment_duration, 1e-3)
        .number("tone_frequency_kHz", p.tone_frequency, khz)
        .number("tone_amplitude_mV", p.tone_amplitude, 1e-3)
        .number("demod_bandwidth_Hz", p.demod_bandwidth)
        .number("stage_range_um", p.stage_range, um)
        .number("stage_ramp_ms", p.stage_ramp, 1e-3)
        .number("map_rf_amplitude_V", p.map_rf_amplitude)
        .number("recovery_chunk_s", p.recovery_chunk)
        .number("recovery_linear_fraction", p.recovery_linear_fraction)
        .number("recovery_timeout_damping_times", p.recovery_timeout)
        .integer("compensation_iterations", p.compensation_iterations)
        .number("compensation_step_V", p.compensation_step)
        .number("compensation_measure_s", p.compensation_measure)
        .number("endcap_tone_amplitude_V", p.endcap_tone_amplitude);
    return out;
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("config: top level must be an object");
    ExperimentConfig cfg{default_config(), ProtocolConfig{}};
    std::optional<Vec3> optical_frequencies;
    const auto sections = schema(cfg, optical_frequencies);
    std::vector<std::string> problems;
    std::set<std::string> known;
    for (const auto& s : sections) known.insert(s.name());
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) problems.push_back(key + ": unknown section");
    }
    for (const auto& s : sections) s.read(j, problems);
    if (!problems.empty()) throw ValidationError(problems);
    if (optical_frequencies) {
        const auto particle = derive_particle_properties(cfg.sim.particle);
        const bool enabled = cfg.sim.optical.enabled;
        const double scatter = cfg.sim.optical.scattering_force;
        const bool duffing = cfg.sim.optical.duffing_enabled;
        cfg.sim.optical = derive_optical_geometry(*optical_frequencies, cfg.sim.optical.depth, particle.mass);
        cfg.sim.optical.enabled = enabled;
        cfg.sim.optical.scattering_force = scatter;
        cfg.sim.optical.duffing_enabled = duffing;
    }
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    ExperimentConfig copy = cfg;
    std::optional<Vec3> unused;
    json j = json::object();
    for (const auto& s : schema(copy, unused)) s.write(j);
    return j;
}

ExperimentConfig load_config(const std::string& path) {
    if (path == "default") return ExperimentConfig{default_config(), ProtocolConfig{}};
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open config '" + path + "'");
    json j;
    try {
        f >> j;
    } catch (const json::parse_error& e) {
        throw ValidationError("config '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << config_to_json(cfg).dump(2) << '\n';
}

}  // namespace hybridtrap
