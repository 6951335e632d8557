#pragma once

#include "esl/exotic_fields.hpp"
#include "esl/source_geometry.hpp"

#include <complex>
#include <functional>
#include <span>
#include <vector>

namespace esl {

/// Parameters of the coupled ⁸⁷Rb–¹²⁹Xe Bloch model. Magnetizations are
/// field-equivalent (tesla): βM₀P is the Fermi-contact field.
struct AmplifierParams {
  double gamma_e = 1.76085963023e11;  // rad s^-1 T^-1, free electron
  double gamma_n = 0.0;               // rad s^-1 T^-1, ¹²⁹Xe magnitude
  double q = 6.0;                     // electron slowing-down factor
  double t_e = 1e-3;                  // s
  double t1n = 60.0;                  // s
  double t2n = 0.0;                   // s
  double p0e = 0.5;
  double p0n = 0.30;
  double m0e = 1e-15;                 // T
  double m0n = 0.0;                   // T
  double kappa0 = 540.0;
  double bz0 = 423e-9;                // T

  double beta() const;
  void validate() const;

  /// Defaults with T₂ₙ from the 13 mHz FWHM and M₀ⁿ solved for η = 116.
  static AmplifierParams calibrated(double gamma_n);
};

inline constexpr double kDefaultFwhmHz = 13e-3;
inline constexpr double kDefaultEta = 116.0;

/// T₂ₙ for a given amplitude-response FWHM: FWHM = √3Λ and Λ = 1/(πT₂ₙ).
double t2n_from_fwhm(double fwhm_hz);
/// M₀ⁿ that makes amplification_factor() equal to eta.
double m0n_for_eta(const AmplifierParams& params, double eta);

double larmor_frequency(double bz0, double gamma_n);

/// Lab-frame steady state of the ¹²⁹Xe polarization under
/// B_ac cos(2πνt) ŷ in the rotating-wave approximation:
/// Pₓ(t) = Re[cx e^{i2πνt}], P_y(t) = Re[cy e^{i2πνt}], P_z constant.
struct SteadyState {
  double nu = 0.0;
  std::complex<double> cx;
  std::complex<double> cy;
  double pz = 0.0;
  double saturation = 0.0;  // (γₙB_ac/2)² T₁ₙT₂ₙ

  Vec3 polarization(double t) const;
  double transverse_amplitude() const { return std::abs(cx); }
};

SteadyState steady_state_xe(const AmplifierParams& params, double b_ac, double nu);

/// βM₀ⁿ times the steady-state transverse polarization.
Vec3 effective_field(const AmplifierParams& params, double b_ac, double nu, double t);

/// η = (4π/3) κ₀ M₀ⁿ P₀ⁿ γₙ T₂ₙ.
double amplification_factor(const AmplifierParams& params);

struct LineshapeModel {
  double nu0 = 0.0;     // Hz
  double lambda = 0.0;  // Hz, Λ = 1/(πT₂ₙ)
  double eta = 0.0;

  double fwhm() const;
  double relative(double nu) const;
};

struct LineshapeValue {
  double relative = 0.0;  // (Λ/2)/√((ν−ν₀)²+(Λ/2)²)
  LineshapeModel model;
};

LineshapeValue lineshape(const AmplifierParams& params, double nu);

/// Least-squares fit of A/√((ν−ν₀)²+(Λ/2)²) to sampled amplitudes; eta
/// holds the fitted peak value 2A/Λ.
LineshapeModel fit_lineshape(std::span<const double> nu, std::span<const double> amplitude,
                             const LineshapeModel& guess);

struct SpinState {
  Vec3 pe{0.0, 0.0, 0.0};
  Vec3 pn{0.0, 0.0, 0.0};
  double t = 0.0;
};

SpinState equilibrium_state(const AmplifierParams& params);

/// B(t) = amplitude · cos(2π f t + phase).
struct HarmonicDrive {
  Vec3 amplitude{0.0, 0.0, 0.0};
  double frequency = 0.0;
  double phase = 0.0;

  Vec3 operator()(double t) const;
};

using DriveField = std::function<Vec3(double)>;

struct BlochOptions {
  double dt = 1e-5;               // s
  double record_interval = 1e-2;  // s; rounded to whole steps
  double record_from = 0.0;       // s; skip storing earlier samples
};

/// Largest step accepted: 1/50 of the shortest of 1/ν₀, T₂ₙ and the
/// electron precession period 2πQ/(γₑB_z⁰).
double max_bloch_step(const AmplifierParams& params);

/// Fixed-step RK4 on the fully coupled equations, including the βM₀ᵉPᵉ and
/// βM₀ⁿPⁿ cross terms; the drive acts on the ¹²⁹Xe spins only. Zero
/// relaxation is expressed with infinite times.
std::vector<SpinState> integrate_bloch(const AmplifierParams& params,
                                       const DriveField& drive, SpinState start,
                                       double t_end, const BlochOptions& options);
std::vector<SpinState> integrate_bloch(const AmplifierParams& params,
                                       const HarmonicDrive& drive, SpinState start,
                                       double t_end, const BlochOptions& options);

/// Fourier coefficient of a recorded trajectory at frequency nu over the
/// last `periods` whole periods: Pₓ ≈ Re[cx e^{i2πνt}], etc.
SteadyState fit_trajectory_tail(const std::vector<SpinState>& trajectory,
                                double nu, int periods);

/// Small-signal band-pass response: every harmonic Nν of the transverse
/// input is mapped through the steady-state transfer function at Nν
/// (gain η · lineshape(Nν), phase per the steady state). DC and B_z are
/// dropped. A drive along x̂ is treated by rotating the y-drive result.
FieldTimeSeries amplifier_response(const FieldTimeSeries& series,
                                   const AmplifierParams& params);

}  // namespace esl
