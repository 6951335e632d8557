#include "esl/spin_amplifier.hpp"

#include "esl/errors.hpp"
#include "esl/fitting.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace esl {

namespace {

constexpr double kPi = std::numbers::pi;

double rate(double time) { return 1.0 / time; }  // 0 for an infinite time

struct Transfer {
  std::complex<double> cx;
  std::complex<double> cy;
};

// Steady-state transverse polarization per unit drive amplitude, with the
// saturation term supplied by the caller.
Transfer transverse_transfer(const AmplifierParams& p, double nu, double saturation) {
  const double nu0 = larmor_frequency(p.bz0, p.gamma_n);
  const double d = 2.0 * kPi * (nu - nu0);
  const double t2 = p.t2n;
  const double k = 0.5 * p.p0n * p.gamma_n / (1.0 + saturation + d * d * t2 * t2);
  using C = std::complex<double>;
  return {k * C(t2, -d * t2 * t2), k * C(-d * t2 * t2, -t2)};
}

using State = Eigen::Matrix<double, 6, 1>;

struct Rhs {
  const AmplifierParams& p;
  double we, wn, be, bn, re, r2, r1;

  explicit Rhs(const AmplifierParams& params)
      : p(params),
        we(params.gamma_e / params.q),
        wn(params.gamma_n),
        be(params.beta() * params.m0n),
        bn(params.beta() * params.m0e),
        re(rate(params.t_e * params.q)),
        r2(rate(params.t2n)),
        r1(rate(params.t1n)) {}

  State operator()(const State& s, const Vec3& drive) const {
    const Vec3 pe = s.head<3>();
    const Vec3 pn = s.tail<3>();
    const Vec3 field_e = Vec3(0.0, 0.0, p.bz0) + be * pn;
    const Vec3 field_n = Vec3(0.0, 0.0, p.bz0) + drive + bn * pe;
    State d;
    d.head<3>() = we * field_e.cross(pe) + re * (Vec3(0.0, 0.0, p.p0e) - pe);
    const Vec3 dn = wn * field_n.cross(pn);
    d[3] = dn.x() - r2 * pn.x();
    d[4] = dn.y() - r2 * pn.y();
    d[5] = dn.z() + r1 * (p.p0n - pn.z());
    return d;
  }
};

void check_norms(const SpinState& s) {
  if (s.pe.norm() > 1.0 + 1e-9 || s.pn.norm() > 1.0 + 1e-9 || !s.pe.allFinite() ||
      !s.pn.allFinite())
    throw Error(ErrorKind::numerical, "polarization left the unit ball during integration");
}

template <typename Drive>
std::vector<SpinState> rk4_bloch(const AmplifierParams& params, const Drive& drive,
                                 SpinState start, double t_end,
                                 const BlochOptions& options) {
  params.validate();
  if (!(options.dt > 0.0) || options.dt > max_bloch_step(params) * (1.0 + 1e-12))
    throw Error(ErrorKind::configuration,
                "Bloch step exceeds 1/50 of the shortest dynamical time scale");
  if (!(t_end >= start.t)) throw Error(ErrorKind::configuration, "t_end precedes start time");

  const Rhs rhs(params);
  const double h = options.dt;
  const auto steps = static_cast<long long>(std::llround((t_end - start.t) / h));
  const auto stride =
      std::max<long long>(1, std::llround(options.record_interval / h));

  State s;
  s << start.pe, start.pn;
  std::vector<SpinState> out;
  auto record = [&](double t) {
    SpinState st{s.head<3>(), s.tail<3>(), t};
    check_norms(st);
    out.push_back(st);
  };
  if (start.t >= options.record_from) record(start.t);

  Vec3 drive_now = drive(start.t);
  for (long long i = 0; i < steps; ++i) {
    const double t = start.t + static_cast<double>(i) * h;
    const Vec3 drive_mid = drive(t + 0.5 * h);
    const Vec3 drive_next = drive(t + h);
    const State k1 = rhs(s, drive_now);
    const State k2 = rhs(s + 0.5 * h * k1, drive_mid);
    const State k3 = rhs(s + 0.5 * h * k2, drive_mid);
    const State k4 = rhs(s + h * k3, drive_next);
    s += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4);
    drive_now = drive_next;

    const double t_next = start.t + static_cast<double>(i + 1) * h;
    if (((i + 1) % stride == 0 || i + 1 == steps) && t_next >= options.record_from)
      record(t_next);
  }
  return out;
}

}  // namespace

double AmplifierParams::beta() const { return 8.0 * kPi * kappa0 / 3.0; }

void AmplifierParams::validate() const {
  if (!(gamma_e > 0.0 && gamma_n > 0.0))
    throw Error(ErrorKind::configuration, "gyromagnetic ratios must be positive");
  if (!(t_e > 0.0 && t1n > 0.0 && t2n > 0.0))
    throw Error(ErrorKind::configuration, "relaxation times must be positive");
  if (!(p0e > 0.0 && p0e <= 1.0 && p0n > 0.0 && p0n <= 1.0))
    throw Error(ErrorKind::configuration, "equilibrium polarizations must lie in (0, 1]");
  if (!(q >= 1.0)) throw Error(ErrorKind::configuration, "slowing-down factor Q must be >= 1");
  if (!(kappa0 > 0.0)) throw Error(ErrorKind::configuration, "kappa0 must be positive");
  if (!(m0e >= 0.0 && m0n >= 0.0 && bz0 >= 0.0))
    throw Error(ErrorKind::configuration, "magnetizations and bias field must be non-negative");
}

AmplifierParams AmplifierParams::calibrated(double gamma_n) {
  AmplifierParams p;
  p.gamma_n = gamma_n;
  p.t2n = t2n_from_fwhm(kDefaultFwhmHz);
  p.m0n = m0n_for_eta(p, kDefaultEta);
  return p;
}

double t2n_from_fwhm(double fwhm_hz) {
  const double lambda = fwhm_hz / std::sqrt(3.0);
  return 1.0 / (kPi * lambda);
}

double m0n_for_eta(const AmplifierParams& p, double eta) {
  return eta / (4.0 * kPi / 3.0 * p.kappa0 * p.p0n * p.gamma_n * p.t2n);
}

double larmor_frequency(double bz0, double gamma_n) {
  return gamma_n * bz0 / (2.0 * kPi);
}

Vec3 SteadyState::polarization(double t) const {
  const std::complex<double> e = std::polar(1.0, 2.0 * kPi * nu * t);
  return {(cx * e).real(), (cy * e).real(), pz};
}

SteadyState steady_state_xe(const AmplifierParams& p, double b_ac, double nu) {
  if (!(b_ac >= 0.0)) throw Error(ErrorKind::domain, "drive amplitude must be non-negative");
  const double nu0 = larmor_frequency(p.bz0, p.gamma_n);
  const double d = 2.0 * kPi * (nu - nu0);
  const double sat = std::pow(0.5 * p.gamma_n * b_ac, 2) * p.t1n * p.t2n;
  const Transfer tr = transverse_transfer(p, nu, sat);

  SteadyState s;
  s.nu = nu;
  s.saturation = sat;
  s.cx = b_ac * tr.cx;
  s.cy = b_ac * tr.cy;
  const double dt2 = d * p.t2n;
  s.pz = p.p0n * (1.0 + dt2 * dt2) / (1.0 + sat + dt2 * dt2);
  return s;
}

Vec3 effective_field(const AmplifierParams& p, double b_ac, double nu, double t) {
  const Vec3 pn = steady_state_xe(p, b_ac, nu).polarization(t);
  return p.beta() * p.m0n * Vec3(pn.x(), pn.y(), 0.0);
}

double amplification_factor(const AmplifierParams& p) {
  return 4.0 * kPi / 3.0 * p.kappa0 * p.m0n * p.p0n * p.gamma_n * p.t2n;
}

double LineshapeModel::fwhm() const { return std::sqrt(3.0) * lambda; }

double LineshapeModel::relative(double nu) const {
  const double half = 0.5 * lambda;
  return half / std::hypot(nu - nu0, half);
}

LineshapeValue lineshape(const AmplifierParams& p, double nu) {
  LineshapeValue v;
  v.model.nu0 = larmor_frequency(p.bz0, p.gamma_n);
  v.model.lambda = 1.0 / (kPi * p.t2n);
  v.model.eta = amplification_factor(p);
  v.relative = v.model.relative(nu);
  return v;
}

LineshapeModel fit_lineshape(std::span<const double> nu, std::span<const double> amplitude,
                             const LineshapeModel& guess) {
  if (nu.size() != amplitude.size() || nu.size() < 4)
    throw Error(ErrorKind::fit, "lineshape fit needs at least 4 matched samples");
  // Work in units of the guessed width, relative to the guessed centre.
  const double w = guess.lambda;
  Eigen::VectorXd x0(3);
  x0 << guess.eta * 0.5, 0.0, 0.5;
  const auto residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    for (std::size_t i = 0; i < nu.size(); ++i) {
      const double u = (nu[i] - guess.nu0) / w;
      r[static_cast<Eigen::Index>(i)] = p[0] / std::hypot(u - p[1], p[2]) - amplitude[i];
    }
  };
  const auto fit = least_squares(residuals, x0, static_cast<int>(nu.size()));
  if (!fit.params.allFinite() || !(std::abs(fit.params[2]) > 0.0))
    throw Error(ErrorKind::fit, "lineshape fit did not converge");
  LineshapeModel m;
  m.nu0 = guess.nu0 + fit.params[1] * w;
  m.lambda = 2.0 * std::abs(fit.params[2]) * w;
  m.eta = fit.params[0] / std::abs(fit.params[2]);
  return m;
}

SpinState equilibrium_state(const AmplifierParams& p) {
  return {Vec3(0.0, 0.0, p.p0e), Vec3(0.0, 0.0, p.p0n), 0.0};
}

Vec3 HarmonicDrive::operator()(double t) const {
  return amplitude * std::cos(2.0 * kPi * frequency * t + phase);
}

double max_bloch_step(const AmplifierParams& p) {
  const double inf = std::numeric_limits<double>::infinity();
  const double nu0 = larmor_frequency(p.bz0, p.gamma_n);
  const double larmor_period = nu0 > 0.0 ? 1.0 / nu0 : inf;
  const double electron_period =
      p.bz0 > 0.0 ? 2.0 * kPi * p.q / (p.gamma_e * p.bz0) : inf;
  return std::min({larmor_period, p.t2n, electron_period}) / 50.0;
}

std::vector<SpinState> integrate_bloch(const AmplifierParams& params,
                                       const DriveField& drive, SpinState start,
                                       double t_end, const BlochOptions& options) {
  return rk4_bloch(params, drive, start, t_end, options);
}

std::vector<SpinState> integrate_bloch(const AmplifierParams& params,
                                       const HarmonicDrive& drive, SpinState start,
                                       double t_end, const BlochOptions& options) {
  return rk4_bloch(params, drive, start, t_end, options);
}

SteadyState fit_trajectory_tail(const std::vector<SpinState>& trajectory, double nu,
                                int periods) {
  if (trajectory.empty() || periods < 1 || !(nu > 0.0))
    throw Error(ErrorKind::domain, "empty trajectory or invalid tail window");
  const double t_last = trajectory.back().t;
  const double t_first = t_last - static_cast<double>(periods) / nu;
  if (trajectory.front().t > t_first)
    throw Error(ErrorKind::domain, "trajectory shorter than the requested tail window");

  // Least squares on [cos, sin, 1] per transverse component.
  Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
  Eigen::Vector3d atx = Eigen::Vector3d::Zero();
  Eigen::Vector3d aty = Eigen::Vector3d::Zero();
  double pz = 0.0;
  int count = 0;
  for (const auto& s : trajectory) {
    if (s.t < t_first) continue;
    const double w = 2.0 * kPi * nu * s.t;
    const Eigen::Vector3d row(std::cos(w), std::sin(w), 1.0);
    ata += row * row.transpose();
    atx += row * s.pn.x();
    aty += row * s.pn.y();
    pz += s.pn.z();
    ++count;
  }
  if (count < 4) throw Error(ErrorKind::domain, "too few samples in the tail window");
  const Eigen::LDLT<Eigen::Matrix3d> solver(ata);
  const Eigen::Vector3d bx = solver.solve(atx);
  const Eigen::Vector3d by = solver.solve(aty);

  // a cos + b sin = Re[(a - i b) e^{iωt}]
  SteadyState out;
  out.nu = nu;
  out.cx = {bx[0], -bx[1]};
  out.cy = {by[0], -by[1]};
  out.pz = pz / count;
  return out;
}

FieldTimeSeries amplifier_response(const FieldTimeSeries& series,
                                   const AmplifierParams& params) {
  params.validate();
  const std::size_t spp = series.samples_per_period();
  const int n_max = static_cast<int>((spp - 1) / 2);
  const HarmonicSpectrum spec = harmonic_amplitudes(series, n_max);
  const double gain = params.beta() * params.m0n;

  FieldTimeSeries out = series;
  for (auto& s : out.samples) s.setZero();
  for (const Harmonic& h : spec.harmonics) {
    const double nu = h.n * series.nu;
    const Transfer tr = transverse_transfer(params, nu, 0.0);
    const std::complex<double> hx = gain * tr.cx;
    const std::complex<double> hy = gain * tr.cy;
    const std::complex<double> drive_x = std::polar(h.amplitude.x(), h.phase.x());
    const std::complex<double> drive_y = std::polar(h.amplitude.y(), h.phase.y());
    const std::complex<double> ox = hx * drive_y + hy * drive_x;
    const std::complex<double> oy = hy * drive_y - hx * drive_x;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
      const std::complex<double> e = std::polar(1.0, 2.0 * kPi * nu * series.time(i));
      out.samples[i].x() += (ox * e).real();
      out.samples[i].y() += (oy * e).real();
    }
  }
  return out;
}

}  // namespace esl
