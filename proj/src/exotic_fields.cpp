#include "esl/exotic_fields.hpp"

#include "esl/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <thread>

namespace esl {

namespace {

constexpr double kPi = std::numbers::pi;

void check_kernel_args(double rn, double lambda) {
  if (!(rn > 0.0))
    throw Error(ErrorKind::singular_distance, "source point coincides with the spin sample");
  if (!(lambda > 0.0)) throw Error(ErrorKind::domain, "force range lambda must be positive");
}

// Neumaier-compensated accumulator.
struct CompensatedSum {
  Vec3 sum{0.0, 0.0, 0.0};
  Vec3 comp{0.0, 0.0, 0.0};

  void add(const Vec3& x) {
    for (int i = 0; i < 3; ++i) {
      const double t = sum[i] + x[i];
      if (std::abs(sum[i]) >= std::abs(x[i]))
        comp[i] += (sum[i] - t) + x[i];
      else
        comp[i] += (x[i] - t) + sum[i];
      sum[i] = t;
    }
  }
  Vec3 value() const { return sum + comp; }
};

std::vector<Vec3> cell_points(const FieldOptions& options) {
  if (options.cell == CellModel::point) return {Vec3::Zero()};
  const double h = 0.5 * options.cell_edge;
  std::vector<Vec3> pts;
  for (int i = 0; i < 8; ++i)
    pts.emplace_back((i & 1) ? h : -h, (i & 2) ? h : -h, (i & 4) ? h : -h);
  return pts;
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

PhysicalConstants PhysicalConstants::with_gamma(double gamma_over_2pi_hz_per_t) {
  PhysicalConstants k;
  k.gamma_n = 2.0 * kPi * gamma_over_2pi_hz_per_t;
  k.mu_xe = 0.5 * k.gamma_n * k.hbar;
  return k;
}

PhysicalConstants PhysicalConstants::standard() {
  return with_gamma(kXeGammaOver2PiStandard);
}

void PhysicalConstants::validate() const {
  if (!(hbar > 0.0 && c > 0.0 && neutron_mass > 0.0 && gamma_n > 0.0 && mu_xe > 0.0))
    throw Error(ErrorKind::configuration, "physical constants must be positive");
  if (std::abs(mu_xe - 0.5 * gamma_n * hbar) > 1e-9 * mu_xe)
    throw Error(ErrorKind::configuration, "|mu_Xe| must equal gamma_n * hbar / 2");
}

std::string_view to_string(Interaction tag) {
  return tag == Interaction::v45 ? "v45" : "v1213";
}

Interaction interaction_from_string(std::string_view s) {
  if (s == "v45") return Interaction::v45;
  if (s == "v1213") return Interaction::v1213;
  throw Error(ErrorKind::configuration,
              "interaction must be 'v45' or 'v1213', got '" + std::string(s) + "'");
}

int primary_axis(Interaction tag) { return tag == Interaction::v45 ? 1 : 0; }

Vec3 kernel_v45(const Vec3& r, const Vec3& v, double lambda,
                const PhysicalConstants& k) {
  const double rn = r.norm();
  check_kernel_args(rn, lambda);
  const double coeff =
      kSignV45 * k.hbar * k.hbar / (8.0 * kPi * k.neutron_mass * k.c * k.mu_xe);
  const double radial = (1.0 / (lambda * rn) + 1.0 / (rn * rn)) * std::exp(-rn / lambda);
  return coeff * radial * v.cross(r / rn);
}

Vec3 kernel_v1213(const Vec3& r, const Vec3& v, double lambda,
                  const PhysicalConstants& k) {
  const double rn = r.norm();
  check_kernel_args(rn, lambda);
  const double coeff = kSignV1213 * k.hbar / (8.0 * kPi * k.mu_xe);
  return coeff * std::exp(-rn / lambda) / rn * v;
}

Vec3 kernel(Interaction tag, const Vec3& r, const Vec3& v, double lambda,
            const PhysicalConstants& k) {
  return tag == Interaction::v45 ? kernel_v45(r, v, lambda, k)
                                 : kernel_v1213(r, v, lambda, k);
}

Vec3 integrate_field(const VoxelCloud& cloud, const Pose& pose, double lambda,
                     double f, Interaction tag, const PhysicalConstants& k,
                     const FieldOptions& options) {
  if (!(lambda > 0.0)) throw Error(ErrorKind::domain, "force range lambda must be positive");
  const auto points = cell_points(options);
  const std::size_t n = cloud.size();

  Vec3 total = Vec3::Zero();
  for (const Vec3& cell : points) {
    if (options.summation == Summation::compensated) {
      CompensatedSum acc;
      for (std::size_t i = 0; i < n; ++i)
        acc.add(cloud.voxels[i].nucleons *
                kernel(tag, cell - pose.positions[i], pose.velocities[i], lambda, k));
      total += acc.value();
    } else {
      Vec3 acc = Vec3::Zero();
      for (std::size_t i = 0; i < n; ++i)
        acc += cloud.voxels[i].nucleons *
               kernel(tag, cell - pose.positions[i], pose.velocities[i], lambda, k);
      total += acc;
    }
  }
  return f * (total / static_cast<double>(points.size()));
}

std::size_t FieldTimeSeries::samples_per_period() const {
  return static_cast<std::size_t>(std::llround(1.0 / (nu * dt)));
}

std::size_t FieldTimeSeries::n_periods() const {
  const std::size_t spp = samples_per_period();
  return spp == 0 ? 0 : samples.size() / spp;
}

FieldTimeSeries field_timeseries(const SourceSpec& spec, const VoxelCloud& cloud,
                                 const RotationSpec& rotation, double lambda,
                                 double f, Interaction tag,
                                 std::size_t samples_per_period,
                                 std::size_t n_periods, const PhysicalConstants& k,
                                 const FieldOptions& options) {
  if (samples_per_period < 64)
    throw Error(ErrorKind::configuration, "samples_per_period must be at least 64");
  if (n_periods < 1) throw Error(ErrorKind::configuration, "n_periods must be at least 1");
  rotation.validate();

  FieldTimeSeries series;
  series.nu = rotation.frequency;
  series.dt = 1.0 / (rotation.frequency * static_cast<double>(samples_per_period));
  series.tag = tag;
  series.lambda = lambda;
  series.f = f;
  series.samples.resize(samples_per_period * n_periods);

  parallel_for(series.samples.size(), options.workers, [&](std::size_t i) {
    const Pose pose = pose_at(cloud, spec, rotation, series.time(i));
    series.samples[i] = integrate_field(cloud, pose, lambda, f, tag, k, options);
  });
  return series;
}

const Harmonic& HarmonicSpectrum::at(int n) const {
  if (n < 1 || static_cast<std::size_t>(n) > harmonics.size())
    throw Error(ErrorKind::domain, "harmonic index out of range");
  return harmonics[static_cast<std::size_t>(n - 1)];
}

HarmonicSpectrum harmonic_amplitudes(const FieldTimeSeries& series, int n_max) {
  const std::size_t m = series.samples.size();
  if (m == 0 || !(series.nu > 0.0) || !(series.dt > 0.0))
    throw Error(ErrorKind::configuration, "empty or unsampled field series");
  const double spp_exact = 1.0 / (series.nu * series.dt);
  const std::size_t spp = series.samples_per_period();
  if (spp == 0 || std::abs(spp_exact - static_cast<double>(spp)) > 1e-9 * spp_exact ||
      m % spp != 0)
    throw Error(ErrorKind::leakage, "series does not span an integer number of periods");
  if (n_max < 1 || static_cast<std::size_t>(2 * n_max) >= spp)
    throw Error(ErrorKind::configuration, "n_max must lie in [1, samples_per_period/2)");

  const std::size_t periods = m / spp;
  HarmonicSpectrum spec;
  spec.nu = series.nu;

  Vec3 dc = Vec3::Zero();
  for (const auto& s : series.samples) dc += s;
  spec.dc = dc / static_cast<double>(m);

  const double norm = 2.0 / static_cast<double>(m);
  for (int n = 1; n <= n_max; ++n) {
    const std::size_t bin = static_cast<std::size_t>(n) * periods;
    std::complex<double> c[3] = {};
    for (std::size_t i = 0; i < m; ++i) {
      const double angle = 2.0 * kPi * static_cast<double>((bin * i) % m) /
                           static_cast<double>(m);
      const std::complex<double> e(std::cos(angle), -std::sin(angle));
      for (int a = 0; a < 3; ++a) c[a] += series.samples[i][a] * e;
    }
    Harmonic h;
    h.n = n;
    for (int a = 0; a < 3; ++a) {
      h.amplitude[a] = norm * std::abs(c[a]);
      h.phase[a] = std::arg(c[a]);
    }
    spec.harmonics.push_back(h);
  }
  return spec;
}

HarmonicSpectrum rod_field_spectrum(const SourceSpec& rod, const VoxelCloud& cloud,
                                    const RotationSpec& rotation, double lambda,
                                    double f, Interaction tag,
                                    std::size_t samples_per_period, int n_max,
                                    const PhysicalConstants& k,
                                    const FieldOptions& options) {
  if (rod.offset.norm() > 1e-9)
    throw Error(ErrorKind::configuration, "rod spectrum requires the rod centred on the pivot");
  const auto series = field_timeseries(rod, cloud, rotation, lambda, f, tag,
                                       samples_per_period, 1, k, options);
  return harmonic_amplitudes(series, n_max);
}

FieldTimeSeries FieldModel::series(double lambda, double f, Interaction tag) const {
  return field_timeseries(source, cloud(), rotation, lambda, f, tag,
                          samples_per_period, 1, constants, options);
}

double first_harmonic(const FieldModel& model, double lambda, Interaction tag) {
  if (!(lambda > 0.0)) throw Error(ErrorKind::domain, "force range lambda must be positive");
  const auto spec = harmonic_amplitudes(model.series(lambda, 1.0, tag), 1);
  return spec.at(1).amplitude[primary_axis(tag)];
}

double aligned_initial_phase(const FieldModel& model, double lambda,
                             Interaction tag) {
  FieldModel cw = model;
  cw.rotation.direction = Direction::cw;
  const auto spec = harmonic_amplitudes(cw.series(lambda, 1.0, tag), 1);
  const double phase = cw.rotation.initial_phase - spec.at(1).phase[primary_axis(tag)];
  return std::remainder(phase, 2.0 * kPi);
}

ConvergenceReport grid_convergence(const SourceSpec& spec,
                                   const RotationSpec& rotation, double lambda,
                                   Interaction tag, double t, double coarse,
                                   const PhysicalConstants& k,
                                   const FieldOptions& options) {
  ConvergenceReport rep;
  for (double h : {coarse, 0.5 * coarse, 0.25 * coarse}) {
    const auto cloud = build_voxel_cloud(spec, h);
    const auto pose = pose_at(cloud, spec, rotation, t);
    rep.resolutions.push_back(h);
    rep.magnitudes.push_back(integrate_field(cloud, pose, lambda, 1.0, tag, k, options).norm());
  }
  const auto& b = rep.magnitudes;
  rep.rel_change_1 = std::abs(b[1] - b[0]) / b[1];
  rep.rel_change_2 = std::abs(b[2] - b[1]) / b[2];
  rep.observed_order = std::log2(std::abs(b[1] - b[0]) / std::abs(b[2] - b[1]));
  return rep;
}

}  // namespace esl
