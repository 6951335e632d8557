#pragma once

#include "esl/source_geometry.hpp"

#include <cstddef>
#include <string_view>
#include <vector>

namespace esl {

/// CODATA 2018 values; gamma_n is the ¹²⁹Xe gyromagnetic ratio magnitude.
struct PhysicalConstants {
  double hbar = 1.054571817e-34;          // J s
  double c = 299792458.0;                 // m/s
  double neutron_mass = 1.67492749804e-27;  // kg
  double gamma_n = 0.0;                   // rad s^-1 T^-1
  double mu_xe = 0.0;                     // J/T

  /// Builds a consistent set from γₙ/2π in Hz/T; |μ_Xe| = γₙħ/2.
  static PhysicalConstants with_gamma(double gamma_over_2pi_hz_per_t);
  static PhysicalConstants standard();  // 11.777 Hz/μT
  void validate() const;
};

inline constexpr double kXeGammaOver2PiStandard = 11.777e6;  // Hz/T
/// Implied by the 423 nT ↔ 4.997 Hz operating point.
inline constexpr double kXeGammaOver2PiOperating = 11.81e6;  // Hz/T

enum class Interaction { v45, v1213 };

std::string_view to_string(Interaction tag);
Interaction interaction_from_string(std::string_view s);

/// Field component the amplifier reads for each interaction: y for V4+5,
/// x for V12+13 (the z part of V12+13 cannot tip the ¹²⁹Xe spins).
int primary_axis(Interaction tag);

// Sign conventions. `r` points from the source nucleon to the polarized
// spin, `v` is the source velocity in the spin rest frame, and B is defined
// through -μ_Xe σ̂·B = V for a spin along σ̂. With these conventions
// B45 = +f ħ²/(8π m c |μ|) (v × r̂)(...) and B1213 = -f ħ/(8π|μ|) v (...).
inline constexpr double kSignV45 = +1.0;
inline constexpr double kSignV1213 = -1.0;

/// Pseudo-field per nucleon and per unit f for V4+5 (tesla).
Vec3 kernel_v45(const Vec3& r, const Vec3& v, double lambda,
                const PhysicalConstants& k);
/// Pseudo-field per nucleon and per unit f for V12+13 (tesla).
Vec3 kernel_v1213(const Vec3& r, const Vec3& v, double lambda,
                  const PhysicalConstants& k);
Vec3 kernel(Interaction tag, const Vec3& r, const Vec3& v, double lambda,
            const PhysicalConstants& k);

enum class Summation { fast, compensated };
enum class CellModel { point, corners };

struct FieldOptions {
  CellModel cell = CellModel::point;
  double cell_edge = 0.0079370052598409975;  // (0.5 cm³)^(1/3), m
  Summation summation = Summation::fast;
  unsigned workers = 1;  // time-sample partitions; 0 = hardware concurrency
};

/// Sum over voxels of nucleons × kernel, evaluated at the vapor cell
/// (origin, or the mean over its 8 corners). Exactly linear in f.
Vec3 integrate_field(const VoxelCloud& cloud, const Pose& pose, double lambda,
                     double f, Interaction tag, const PhysicalConstants& k,
                     const FieldOptions& options = {});

struct FieldTimeSeries {
  double dt = 0.0;  // s
  double nu = 0.0;  // Hz, rotation frequency
  std::vector<Vec3> samples;  // T
  Interaction tag = Interaction::v45;
  double lambda = 0.0;
  double f = 0.0;

  std::size_t samples_per_period() const;
  std::size_t n_periods() const;
  double time(std::size_t i) const { return dt * static_cast<double>(i); }
};

FieldTimeSeries field_timeseries(const SourceSpec& spec, const VoxelCloud& cloud,
                                 const RotationSpec& rotation, double lambda,
                                 double f, Interaction tag,
                                 std::size_t samples_per_period,
                                 std::size_t n_periods, const PhysicalConstants& k,
                                 const FieldOptions& options = {});

struct Harmonic {
  int n = 0;
  Vec3 amplitude{0.0, 0.0, 0.0};  // T, per component
  Vec3 phase{0.0, 0.0, 0.0};      // rad, component(t) ⊃ A cos(2πNνt + phase)
};

struct HarmonicSpectrum {
  double nu = 0.0;
  Vec3 dc{0.0, 0.0, 0.0};
  std::vector<Harmonic> harmonics;  // N = 1..N_max

  const Harmonic& at(int n) const;
};

/// Projection onto the exact bins Nν, N = 1..n_max.
HarmonicSpectrum harmonic_amplitudes(const FieldTimeSeries& series, int n_max);

/// Spectrum of a source centred on the pivot (throws otherwise). By point
/// symmetry only even harmonics survive.
HarmonicSpectrum rod_field_spectrum(const SourceSpec& rod, const VoxelCloud& cloud,
                                    const RotationSpec& rotation, double lambda,
                                    double f, Interaction tag,
                                    std::size_t samples_per_period, int n_max,
                                    const PhysicalConstants& k,
                                    const FieldOptions& options = {});

/// Everything needed to re-simulate one source's field.
struct FieldModel {
  SourceSpec source;
  double resolution = 0.0;
  RotationSpec rotation;
  PhysicalConstants constants = PhysicalConstants::standard();
  std::size_t samples_per_period = 720;
  FieldOptions options;

  VoxelCloud cloud() const { return build_voxel_cloud(source, resolution); }
  FieldTimeSeries series(double lambda, double f, Interaction tag) const;
};

/// Amplitude of the first harmonic on the interaction's primary axis.
double first_harmonic(const FieldModel& model, double lambda, Interaction tag);

/// Initial phase that makes the first harmonic of the CW series on the
/// primary axis a pure cosine (phase zero) at t = 0.
double aligned_initial_phase(const FieldModel& model, double lambda,
                             Interaction tag);

struct ConvergenceReport {
  std::vector<double> resolutions;  // h, h/2, h/4
  std::vector<double> magnitudes;   // |B|
  double rel_change_1 = 0.0;        // |B_h/2 - B_h| / |B_h/2|
  double rel_change_2 = 0.0;        // |B_h/4 - B_h/2| / |B_h/4|
  double observed_order = 0.0;
};

/// |B| at one pose under resolution halving (Richardson order estimate).
ConvergenceReport grid_convergence(const SourceSpec& spec,
                                   const RotationSpec& rotation, double lambda,
                                   Interaction tag, double t, double coarse,
                                   const PhysicalConstants& k,
                                   const FieldOptions& options = {});

}  // namespace esl
