#pragma once

#include "esl/exotic_fields.hpp"
#include "esl/signal_pipeline.hpp"
#include "esl/spin_amplifier.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace esl {

struct AnalysisConfig {
  Interaction tag = Interaction::v45;
  double lambda_ref = 1.0;  // m
  double lambda_min = 0.03;
  double lambda_max = 100.0;
  int lambda_per_decade = 60;
  int n_harmonics = 6;
  double f_true = 0.0;
  double noise_asd = 22e-15;  // T/√Hz
  double duration = 3600.0;   // s per direction
  double window = 0.0;        // s; 0 means one rotation period
  std::size_t trace_samples_per_period = 72;
  double common_mode = 0.0;   // T
  std::uint64_t seed = 1;
  std::string trace_cw;   // measured traces (CSV t_s,signal_V); empty: synthesize
  std::string trace_ccw;
  ConfidencePolicy policy = ConfidencePolicy::two_sided_95;
  CombineMode combine = CombineMode::pooled;
};

enum class EstimateSource { config, lockin };

/// Coupling estimate fed to `constrain` when not taken from a lock-in run.
struct EstimateConfig {
  EstimateSource source = EstimateSource::config;
  Interaction tag = Interaction::v1213;
  double mean = 1.64e-34;
  double sigma_stat = 0.57e-34;
  double sigma_syst = 0.27e-34;
};

struct SystematicsConfig {
  Interaction tag = Interaction::v45;
  double lambda = 1.0;  // m
  double f_nominal = 2.79e-19;
  std::vector<PerturbationRow> rows;
};

struct BlochConfig {
  double drive = 100e-12;    // T
  double detuning = 0.0;     // Hz from ν₀
  double duration = 300.0;   // s
  double dt = 0.0;           // s; 0 selects max_bloch_step
  double record_interval = 0.01;
  int tail_periods = 20;
};

struct RunConfig {
  FieldModel bgo;
  FieldModel rod;
  double gamma_over_2pi = kXeGammaOver2PiStandard;  // Hz/T
  AmplifierParams amplifier;
  double fwhm = kDefaultFwhmHz;  // Hz
  double eta_target = kDefaultEta;
  bool tune_to_rotation = true;
  CalibrationSet calib;
  AnalysisConfig analysis;
  EstimateConfig estimate;
  SystematicsConfig systematics;
  BlochConfig bloch;
  std::string output_dir = "out";
  bool write_traces = false;

  std::vector<std::string> defaults_applied;  // "section.key"
  std::string source_path;
};

/// Parses the sectioned `key: value unit` format. Every physical value
/// needs a unit; unknown sections and keys are rejected with the line.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<text>");

/// Resolved configuration as JSON (SI units), used for hashing and reports.
nlohmann::json config_to_json(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);
std::uint64_t geometry_hash(const RunConfig& cfg);

/// Amplifier parameters after calibration (T₂ₙ from FWHM, M₀ⁿ from η) and
/// optional tuning of B_z⁰ to the rotation frequency.
AmplifierParams resolved_amplifier(const RunConfig& cfg);

}  // namespace esl
