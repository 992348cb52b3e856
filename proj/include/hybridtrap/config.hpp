#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hybridtrap/vec3.hpp"

namespace hybridtrap {

struct ParticleSpec {
    double radius = 88.5e-9;       // m (177 nm silica sphere)
    double density = 1850.0;       // kg/m^3
    double charge_to_mass = 4.5;   // C/kg
};

struct ParticleProperties {
    double mass = 0.0;                // kg
    double charge = 0.0;              // C
    double elementary_charges = 0.0;  // charge / e
};

struct Environment {
    double pressure = 1e-3;                   // Pa (1e-5 mbar)
    double gas_temperature = 300.0;           // K
    double gas_viscosity = 18.27e-6;          // Pa s
    double gas_molecule_diameter = 0.372e-9;  // m
    Vec3 gravity{0.0, -9.80665, 0.0};         // m/s^2
};

struct OpticalTrapConfig {
    bool enabled = false;
    double depth = 0.0;            // J, U0 > 0
    double waist_x = 0.0;          // m
    double waist_y = 0.0;          // m
    double rayleigh_range = 0.0;   // m
    /// Peak radiation-pressure force along +z at the focus; scales with local intensity.
    double scattering_force = 0.0;  // N
    /// When false the trap is replaced by its harmonic expansion about the focus.
    bool duffing_enabled = true;
};

struct PaulTrapConfig {
    bool enabled = true;
    double drive_frequency = 0.0;   // rad/s
    double rf_amplitude = 200.0;    // V
    double dc_offset = 5e-3;        // V
    double endcap_voltage = 70.0;   // V
    Vec3 shim_voltage{};            // V
    double tip_distance = 250e-6;   // m, r0
    double endcap_distance = 1.6e-3;  // m, z0
    double rf_efficiency = 0.7494;      // eta
    double endcap_efficiency = 1.4438;  // kappa
    /// Quadrupole strength of the DC offset relative to an ideal electrode pair.
    double dc_offset_gain = 270.56;
    Vec3 shim_gain{1000.0, 1000.0, 300.0};  // (V/m) per V
    Vec3 stray_field{};                     // V/m, uniform
    /// Paul trap centre (RF null) relative to the optical focus.
    Vec3 trap_offset{};                     // m
};

struct DetectorConfig {
    Vec3 gain{1e6, 1e6, 1e6};         // V/m
    double measurement_waist = 5e-6;  // m
    double inversion_length = 1.5e-6; // m
    double noise_floor = 1e-6;        // V/sqrt(Hz)
    Vec3 focus{};                     // m
};

enum class Schedule { off, paul, optical };

struct FeedbackConfig {
    Schedule schedule = Schedule::paul;
    Vec3 paul_frequencies{5.5e3, 6.0e3, 3.0e3};     // Hz, filter centres
    Vec3 optical_frequencies{69e3, 74e3, 15e3};     // Hz
    double quality_factor = 5.0;
    Vec3 paul_gain{2.9e-17, 2.9e-17, 2.2e-17};      // N s/m
    Vec3 optical_gain{1.1e-16, 1.1e-16, 1.1e-16};   // N s/m
    int loop_delay = 1;                             // control samples
    double voltage_clamp = 10.0;                    // V, per shim output
};

struct FrequencyBand {
    double lo = 0.0;  // Hz
    double hi = 0.0;  // Hz
};

struct ProtocolConfig {
    // Transfer timing, all in seconds.
    double pre_duration = 0.1;
    double feedback_delay = 0.1;
    double evaluation_delay = 0.25;
    double evaluation_window = 0.5;

    FrequencyBand paul_band{4.5e3, 6.5e3};
    FrequencyBand optical_band{62e3, 76e3};
    double optical_peak_threshold = 10.0;  // peak / band median
    double paul_peak_threshold = 3.0;
    double segment_duration = 17.5e-3;     // s, Welch segment

    // Characterisation scans (drive tone on a shim electrode + lock-in).
    double tone_frequency = 1.27e3;    // Hz, clear of 2 f_secular / n for small n
    double tone_amplitude = 5e-3;      // V
    double demod_bandwidth = 100.0;    // Hz
    double stage_range = 150e-6;       // m, per axis
    double stage_ramp = 5e-3;          // s
    double map_rf_amplitude = 1.0;     // V, RF amplitude while mapping the field

    // Recovery after a failed transfer.
    double recovery_chunk = 0.05;          // s
    double recovery_linear_fraction = 0.7; // in-band fraction of detected power
    double recovery_timeout = 20.0;        // multiples of 1/gamma

    // Stray-field compensation.
    int compensation_iterations = 4;
    double compensation_step = 0.02;       // V, initial probe step
    double compensation_measure = 0.06;    // s per probe
    double endcap_tone_amplitude = 5.0;    // V, endcap modulation for the axial null
};

struct SimConfig {
    ParticleSpec particle;
    Environment environment;
    OpticalTrapConfig optical;
    PaulTrapConfig paul;
    FeedbackConfig feedback;
    DetectorConfig detector;
    double dt = 250e-9;            // s, nominal; normalised to an integer number of steps per sample
    double sample_rate = 234e3;    // Hz
    std::uint64_t seed = 1;
};

/// Reference configuration: 177 nm silica, Paul trap at typical drive, optical trap
/// geometry from (69, 74, 15) kHz at 550 meV depth, Paul-schedule feedback, 1e-5 mbar.
SimConfig default_config();

struct ExperimentConfig {
    SimConfig sim = default_config();
    ProtocolConfig protocol;
};

ParticleProperties derive_particle_properties(const ParticleSpec& spec);

struct ValidationReport {
    SimConfig config;
    std::vector<std::string> warnings;
};

/// Checks ranges and cross-references; normalises dt. Throws ValidationError listing every problem.
ValidationReport validate_config(const SimConfig& cfg);

/// Number of integrator steps per recorded sample.
int steps_per_sample(const SimConfig& cfg);

std::string to_string(Schedule s);
Schedule schedule_from_string(const std::string& name);

}  // namespace hybridtrap
