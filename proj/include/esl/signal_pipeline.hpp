#pragma once

#include "esl/exotic_fields.hpp"
#include "esl/source_geometry.hpp"
#include "esl/spin_amplifier.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace esl {

struct SignalTrace {
  double dt = 0.0;  // s
  double nu = 0.0;  // Hz
  Direction direction = Direction::cw;
  std::vector<double> samples;  // V
  std::uint64_t seed = 0;

  double duration() const { return dt * static_cast<double>(samples.size()); }
  std::size_t samples_per_period() const;
  double time(std::size_t i) const { return dt * static_cast<double>(i); }
};

/// α is input-referred: volts per tesla of pseudo-field at the amplifier
/// input on resonance. φ is the phase of the readout relative to the first
/// harmonic of the simulated field.
struct CalibrationSet {
  double alpha = 6.36e9;  // V/T (6.36 V/nT)
  double phi = 68.0 * 3.14159265358979323846 / 180.0;  // rad
  double b1_ref = 0.0;    // T, first harmonic at λ_ref for f = 1

  void validate() const;
};

struct SynthesisOptions {
  Direction direction = Direction::cw;
  std::size_t n_periods = 1;
  std::size_t samples_per_period = 72;  // must divide the field series rate
  double readout_angle = 0.0;           // rad, readout axis in the xy plane
  double common_mode = 0.0;             // T, input-referred tone at ν
  double common_mode_phase = 0.0;       // rad
};

/// Readout axis that puts the first harmonic of the amplified signal at
/// phase φ when the field's primary-axis first harmonic has phase zero.
double readout_angle_for_phase(const AmplifierParams& params, Interaction tag,
                               double nu, double phi);

/// S(t) = (α/η)·(readout projection of the amplifier output)
///        + α·(white noise of amplitude spectral density noise_asd)
///        + α·(common-mode tone).
/// The field series is tiled to n_periods and decimated to the trace rate.
SignalTrace synthesize_signal(const FieldTimeSeries& field, const AmplifierParams& params,
                              const CalibrationSet& calib, double noise_asd,
                              std::uint64_t seed, const SynthesisOptions& options = {});

/// Per-window coupling estimates: projection onto cos(2πνt+φ) normalised
/// by α·B⁽¹⁾ and the reference autocorrelation. `window` must be an
/// integer number of rotation periods.
std::vector<double> lockin_estimate(const SignalTrace& trace, double nu,
                                    const CalibrationSet& calib, double window);

struct GaussianFit {
  double mean = 0.0;
  double sigma = 0.0;
  double amplitude = 0.0;  // counts at the peak
  double sample_mean = 0.0;
  double sample_sigma = 0.0;
  double standard_error = 0.0;
  int n_bins = 0;
  double bin_width = 0.0;
  double range_min = 0.0;
  std::vector<double> counts;
};

/// Freedman–Diaconis bin count, clamped to [5, 200].
int freedman_diaconis_bins(std::span<const double> values);

/// Least-squares Gaussian fit to the histogram (n_bins = 0 selects the
/// Freedman–Diaconis rule). Requires at least 30 values.
GaussianFit fit_gaussian(std::span<const double> values, int n_bins = 0);

struct DirectionSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double standard_error = 0.0;
};

struct CouplingEstimate {
  std::vector<double> values;
  double mean = 0.0;
  double sigma_stat = 0.0;      // standard error of the mean
  double sigma_stat_fit = 0.0;  // Gaussian-fit σ / √n (NaN when no fit)
  double sigma_syst = 0.0;
  std::optional<DirectionSummary> cw;
  std::optional<DirectionSummary> ccw;

  double sigma_total() const;
};

CouplingEstimate summarize_estimates(std::vector<double> values);

enum class CombineMode { pooled, averaged };

/// CCW values are sign-flipped (the pseudo-field reverses with the
/// rotation, common-mode backgrounds do not) and pooled with CW.
CouplingEstimate combine_directions(const CouplingEstimate& cw, const CouplingEstimate& ccw,
                                    CombineMode mode = CombineMode::pooled);

/// A systematics row: parameter name and signed SI excursions.
struct PerturbationRow {
  std::string parameter;
  double plus = 0.0;
  double minus = 0.0;
};

/// Parameter names accepted in a perturbation table.
std::span<const std::string_view> systematics_parameters();

struct SystematicsInput {
  FieldModel bgo;
  double lambda = 1.0;
  Interaction tag = Interaction::v45;
  CalibrationSet calib;
};

struct SystematicsRow {
  std::string parameter;
  double delta_plus = 0.0;
  double delta_minus = 0.0;
  double df_plus = 0.0;
  double df_minus = 0.0;
  double magnitude = 0.0;  // max(|df+|, |df-|)
};

struct SystematicsReport {
  double f_nominal = 0.0;
  double b1_nominal = 0.0;
  std::vector<SystematicsRow> rows;
  double total = 0.0;  // quadrature sum of magnitudes
};

SystematicsReport propagate_systematics(const SystematicsInput& input, double f_nominal,
                                        std::span<const PerturbationRow> table);

enum class ConfidencePolicy { two_sided_95, one_sided_95 };

double policy_quantile(ConfidencePolicy policy);
std::string_view to_string(ConfidencePolicy policy);
ConfidencePolicy confidence_policy_from_string(std::string_view s);

struct ConstraintCurve {
  Interaction tag = Interaction::v45;
  ConfidencePolicy policy = ConfidencePolicy::two_sided_95;
  double lambda_ref = 1.0;
  double b1_ref = 0.0;
  double field_bound = 0.0;  // T
  std::vector<double> lambda;
  std::vector<double> b1;
  std::vector<double> bound;
};

/// bound(λ) = (|mean| + z·σ_total)·B⁽¹⁾(λ_ref) / B⁽¹⁾(λ).
ConstraintCurve constraint_curve(const CouplingEstimate& estimate,
                                 std::span<const double> lambdas, Interaction tag,
                                 const FieldModel& geometry, double lambda_ref = 1.0,
                                 ConfidencePolicy policy = ConfidencePolicy::two_sided_95);

std::vector<double> log_lambda_grid(double lo, double hi, int per_decade);

// Coupling-constant algebra. Products are in J·m; divide by ħc for the
// dimensionless form. The system is under-determined: each f fixes one
// combination only.
double f45_from_products(double ga_ga, double gv_gv, double hbar_c);
double f1213_from_product(double ga_gv, double hbar_c);
double ga_ga_from_f45(double f45, double gv_gv, double hbar_c);
double gv_gv_from_f45(double f45, double ga_ga, double hbar_c);
double ga_gv_from_f1213(double f1213, double hbar_c);

/// Synthetic CW + CCW measurement run shared by the CLI and the tests.
struct ClosedLoopSetup {
  FieldModel bgo;              // rotation phase aligned, direction ignored
  AmplifierParams amplifier;   // tuned to the rotation frequency
  CalibrationSet calib;        // b1_ref filled by ClosedLoop
  Interaction tag = Interaction::v45;
  double lambda = 1.0;
  double f_true = 0.0;
  double noise_asd = 0.0;      // T/√Hz
  double duration = 3600.0;    // s per direction
  double window = 0.0;         // s per estimate; 0 means one rotation period
  std::size_t trace_samples_per_period = 72;
  double common_mode = 0.0;    // T
  double common_mode_phase = 0.0;
  CombineMode combine = CombineMode::pooled;
};

struct ClosedLoopResult {
  CouplingEstimate cw;
  CouplingEstimate ccw;
  CouplingEstimate combined;
};

class ClosedLoop {
 public:
  explicit ClosedLoop(ClosedLoopSetup setup);

  const ClosedLoopSetup& setup() const { return setup_; }
  std::size_t periods() const { return periods_; }
  SignalTrace trace(Direction d, std::uint64_t seed) const;
  ClosedLoopResult run(std::uint64_t seed) const;

 private:
  ClosedLoopSetup setup_;
  std::size_t periods_ = 0;
  FieldTimeSeries cw_field_;
  FieldTimeSeries ccw_field_;
  double readout_angle_ = 0.0;
};

}  // namespace esl
