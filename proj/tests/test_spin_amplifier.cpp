#include "doctest.h"

#include "esl/errors.hpp"
#include "esl/spin_amplifier.hpp"

#include <cmath>
#include <limits>
#include <numbers>

using namespace esl;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kNu = 4.997;

AmplifierParams resonant() {
  AmplifierParams p = AmplifierParams::calibrated(2 * kPi * kXeGammaOver2PiStandard);
  p.bz0 = 2 * kPi * kNu / p.gamma_n;
  return p;
}

// Short relaxation times so transients settle within seconds.
AmplifierParams fast_relaxing() {
  AmplifierParams p = resonant();
  p.t2n = 1.0;
  p.t1n = 2.0;
  return p;
}

FieldTimeSeries cosine_series(double nu, int harmonic, Vec3 amplitude, double phase = 0.0) {
  FieldTimeSeries s;
  s.nu = nu;
  s.dt = 1.0 / (nu * 64);
  for (int i = 0; i < 128; ++i)
    s.samples.push_back(amplitude * std::cos(2 * kPi * harmonic * nu * s.time(i) + phase));
  return s;
}

double max_abs(const FieldTimeSeries& s, int axis) {
  double m = 0.0;
  for (const auto& v : s.samples) m = std::max(m, std::abs(v[axis]));
  return m;
}

}  // namespace

TEST_CASE("Larmor frequency at 423 nT") {
  CHECK(larmor_frequency(423e-9, 2 * kPi * 11.777e6) == doctest::Approx(4.981671).epsilon(1e-6));
  CHECK(larmor_frequency(423e-9, 2 * kPi * 11.81e6) == doctest::Approx(4.99563).epsilon(1e-6));
}

TEST_CASE("calibrated defaults: η = 116 and FWHM = 13 mHz") {
  const AmplifierParams p = resonant();
  CHECK(amplification_factor(p) == doctest::Approx(116.0).epsilon(1e-12));
  CHECK(p.t2n == doctest::Approx(42.41).epsilon(1e-3));
  CHECK(lineshape(p, kNu).model.fwhm() == doctest::Approx(13e-3).epsilon(1e-12));
  CHECK_NOTHROW(p.validate());
}

TEST_CASE("η is linear in M₀ⁿ and P₀ⁿ and vanishes without polarization") {
  AmplifierParams p = resonant();
  const double eta = amplification_factor(p);
  p.m0n *= 2.0;
  CHECK(amplification_factor(p) == doctest::Approx(2 * eta).epsilon(1e-14));
  p.p0n *= 0.5;
  CHECK(amplification_factor(p) == doctest::Approx(eta).epsilon(1e-14));
  p.p0n = 0.0;
  CHECK(amplification_factor(p) == 0.0);
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("steady state: small-signal resonance") {
  const AmplifierParams p = resonant();
  const double b = 1e-15;
  const SteadyState s = steady_state_xe(p, b, kNu);
  CHECK(s.saturation < 1e-10);
  CHECK(std::abs(s.cx) == doctest::Approx(0.5 * p.p0n * p.gamma_n * p.t2n * b).epsilon(1e-9));
  CHECK(std::abs(s.cy) == doctest::Approx(std::abs(s.cx)).epsilon(1e-12));
  CHECK(s.pz == doctest::Approx(p.p0n).epsilon(1e-9));

  double peak = 0.0;
  for (int i = 0; i < 64; ++i)
    peak = std::max(peak, effective_field(p, b, kNu, i / (64 * kNu)).norm());
  CHECK(peak == doctest::Approx(amplification_factor(p) * b).epsilon(1e-6));
  CHECK(effective_field(p, b, kNu, 0.1).z() == 0.0);
}

TEST_CASE("steady state: far detuning and saturation limits") {
  const AmplifierParams p = resonant();
  const SteadyState far = steady_state_xe(p, 1e-12, kNu + 10.0);
  CHECK(std::abs(far.cx) < 1e-3 * std::abs(steady_state_xe(p, 1e-12, kNu).cx));
  CHECK(far.pz == doctest::Approx(p.p0n).epsilon(1e-9));

  const SteadyState strong = steady_state_xe(p, 1e-7, kNu);
  CHECK(strong.saturation > 1e4);
  CHECK(strong.pz < 1e-4 * p.p0n);
  CHECK_THROWS_AS(steady_state_xe(p, -1.0, kNu), Error);
}

TEST_CASE("lineshape: symmetric with half amplitude at ±√3Λ/2") {
  const AmplifierParams p = resonant();
  const LineshapeModel m = lineshape(p, kNu).model;
  CHECK(m.relative(m.nu0) == 1.0);
  const double half = std::sqrt(3.0) * m.lambda / 2;
  CHECK(m.relative(m.nu0 + half) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.relative(m.nu0 - half) == doctest::Approx(0.5).epsilon(1e-12));
  for (double d : {1e-3, 7e-3, 0.05, 1.0})
    CHECK(m.relative(m.nu0 + d) == doctest::Approx(m.relative(m.nu0 - d)).epsilon(1e-14));
}

TEST_CASE("lineshape fit recovers the generating model") {
  const AmplifierParams p = resonant();
  const LineshapeModel truth = lineshape(p, kNu).model;
  std::vector<double> nu, amp;
  for (int i = -20; i <= 20; ++i) {
    nu.push_back(truth.nu0 + 0.003 * i);
    amp.push_back(truth.eta * truth.relative(nu.back()));
  }
  LineshapeModel guess = truth;
  guess.nu0 += 0.002;
  guess.lambda *= 1.3;
  guess.eta *= 0.8;
  const LineshapeModel fit = fit_lineshape(nu, amp, guess);
  CHECK(fit.nu0 == doctest::Approx(truth.nu0).epsilon(1e-9));
  CHECK(fit.lambda == doctest::Approx(truth.lambda).epsilon(1e-6));
  CHECK(fit.eta == doctest::Approx(truth.eta).epsilon(1e-6));

  CHECK_THROWS_AS(fit_lineshape(std::span(nu).first(3), std::span(amp).first(3), guess), Error);
}

TEST_CASE("Bloch: equilibrium is a fixed point without drive") {
  const AmplifierParams p = fast_relaxing();
  BlochOptions opt;
  opt.dt = max_bloch_step(p);
  opt.record_interval = 0.5;
  const auto traj = integrate_bloch(p, HarmonicDrive{}, equilibrium_state(p), 2.0, opt);
  for (const auto& s : traj) {
    CHECK((s.pe - Vec3(0, 0, p.p0e)).norm() < 1e-12);
    CHECK((s.pn - Vec3(0, 0, p.p0n)).norm() < 1e-12);
  }
}

TEST_CASE("Bloch: free precession at the Larmor frequency with T₂ decay") {
  const AmplifierParams p = fast_relaxing();
  SpinState start = equilibrium_state(p);
  start.pn = Vec3(0.2, 0.0, 0.2);
  BlochOptions opt;
  opt.dt = max_bloch_step(p);
  opt.record_interval = 1e-3;
  const auto traj = integrate_bloch(p, HarmonicDrive{}, start, 1.0, opt);
  const SteadyState tail = fit_trajectory_tail(traj, kNu, 2);
  // Amplitude halfway through the 2-period window.
  const double t_mid = 1.0 - 1.0 / kNu;
  CHECK(std::abs(tail.cx) == doctest::Approx(0.2 * std::exp(-t_mid / p.t2n)).epsilon(2e-3));
  CHECK(std::abs(tail.cy) == doctest::Approx(std::abs(tail.cx)).epsilon(1e-3));
}

TEST_CASE("Bloch: converges to the analytic steady state") {
  const AmplifierParams p = fast_relaxing();
  const double b = 1.05e-8;
  const SteadyState expected = steady_state_xe(p, b, kNu);
  REQUIRE(expected.saturation == doctest::Approx(0.3).epsilon(0.05));

  BlochOptions opt;
  opt.dt = max_bloch_step(p);
  opt.record_interval = 1e-3;
  opt.record_from = 14.0;
  const HarmonicDrive drive{Vec3(0.0, b, 0.0), kNu, 0.0};
  const auto traj = integrate_bloch(p, drive, equilibrium_state(p), 20.0, opt);
  const SteadyState got = fit_trajectory_tail(traj, kNu, 20);
  const double scale = std::abs(expected.cx);
  CHECK(std::abs(got.cx - expected.cx) < 0.02 * scale);
  CHECK(std::abs(got.cy - expected.cy) < 0.02 * scale);
  CHECK(got.pz == doctest::Approx(expected.pz).epsilon(0.02));
}

TEST_CASE("Bloch: step size and time errors") {
  const AmplifierParams p = fast_relaxing();
  BlochOptions opt;
  opt.dt = 2.0 * max_bloch_step(p);
  CHECK_THROWS_AS(integrate_bloch(p, HarmonicDrive{}, equilibrium_state(p), 0.1, opt), Error);
  opt.dt = max_bloch_step(p);
  SpinState late = equilibrium_state(p);
  late.t = 1.0;
  CHECK_THROWS_AS(integrate_bloch(p, HarmonicDrive{}, late, 0.5, opt), Error);
}

TEST_CASE("amplifier response: resonant gain, harmonic and detuning suppression") {
  const AmplifierParams p = resonant();
  const double eta = amplification_factor(p);
  const double b = 1e-18;

  const auto on = amplifier_response(cosine_series(kNu, 1, Vec3(0, b, 0)), p);
  CHECK(max_abs(on, 0) == doctest::Approx(eta * b).epsilon(1e-3));
  CHECK(max_abs(on, 2) == 0.0);

  const auto second = amplifier_response(cosine_series(kNu, 2, Vec3(0, b, 0)), p);
  CHECK(std::hypot(max_abs(second, 0), max_abs(second, 1)) < 1e-2 * eta * b);

  const double lambda = lineshape(p, kNu).model.lambda;
  AmplifierParams detuned = p;
  detuned.bz0 = 2 * kPi * (kNu - 5 * lambda) / p.gamma_n;
  const auto off = amplifier_response(cosine_series(kNu, 1, Vec3(0, b, 0)), detuned);
  CHECK(max_abs(off, 0) < 0.2 * eta * b);

  FieldTimeSeries dc = cosine_series(kNu, 1, Vec3::Zero());
  for (auto& v : dc.samples) v = Vec3(3e-18, 0.0, 5e-18);
  const auto none = amplifier_response(dc, p);
  CHECK(max_abs(none, 0) + max_abs(none, 1) + max_abs(none, 2) < 1e-30);
}

TEST_CASE("amplifier response: linear, and an x drive is a rotated y drive") {
  const AmplifierParams p = resonant();
  const auto a = amplifier_response(cosine_series(kNu, 1, Vec3(0, 1e-18, 0), 0.4), p);
  const auto b = amplifier_response(cosine_series(kNu, 1, Vec3(0, -3e-18, 0), 0.4), p);
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    CHECK((b.samples[i] + 3.0 * a.samples[i]).norm() < 1e-12 * a.samples[i].norm() + 1e-40);

  const auto x = amplifier_response(cosine_series(kNu, 1, Vec3(1e-18, 0, 0), 0.4), p);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(std::abs(x.samples[i].x() - a.samples[i].y()) < 1e-9 * 116e-18);
    CHECK(std::abs(x.samples[i].y() + a.samples[i].x()) < 1e-9 * 116e-18);
  }
}

TEST_CASE("Larmor frequency is linear in B_z⁰") {
  const double g = 2 * kPi * kXeGammaOver2PiStandard;
  CHECK(larmor_frequency(0.0, g) == 0.0);
  CHECK(larmor_frequency(846e-9, g) == 2 * larmor_frequency(423e-9, g));
}

TEST_CASE("η doubles with T₂ₙ") {
  AmplifierParams p = resonant();
  const double eta = amplification_factor(p);
  p.t2n *= 2;
  CHECK(amplification_factor(p) == doctest::Approx(2 * eta).epsilon(1e-15));
}

TEST_CASE("steady state: zero drive and the on-resonance saturation formula") {
  const AmplifierParams p = resonant();
  const SteadyState zero = steady_state_xe(p, 0.0, kNu);
  CHECK(std::abs(zero.cx) == 0.0);
  CHECK(std::abs(zero.cy) == 0.0);
  CHECK(zero.pz == doctest::Approx(p.p0n).epsilon(1e-15));
  CHECK(effective_field(p, 0.0, kNu, 0.3).norm() == 0.0);

  const double b = 3e-10;
  const double sat = std::pow(0.5 * p.gamma_n * b, 2) * p.t1n * p.t2n;
  CHECK(steady_state_xe(p, b, kNu).pz == doctest::Approx(p.p0n / (1 + sat)).epsilon(1e-12));
}

TEST_CASE("effective field is circular on resonance") {
  const AmplifierParams p = resonant();
  const double b = 1e-15;
  const double m0 = effective_field(p, b, kNu, 0.0).norm();
  for (int i = 1; i < 16; ++i)
    CHECK(effective_field(p, b, kNu, i / (16 * kNu)).norm() == doctest::Approx(m0).epsilon(1e-12));
  const SteadyState s = steady_state_xe(p, b, kNu);
  CHECK(std::abs(std::arg(s.cy / s.cx)) == doctest::Approx(kPi / 2).epsilon(1e-12));
}

TEST_CASE("small-signal linearity: gain independent of drive below saturation 1e-3") {
  const AmplifierParams p = resonant();
  const double b_max = 2.0 / p.gamma_n * std::sqrt(1e-3 / (p.t1n * p.t2n));
  REQUIRE(steady_state_xe(p, b_max, kNu).saturation == doctest::Approx(1e-3));
  for (double detune : {0.0, 0.004, -0.01}) {
    const double g_small = std::abs(steady_state_xe(p, 1e-18, kNu + detune).cx) / 1e-18;
    for (double b : {1e-15, 1e-12, 0.9 * b_max})
      CHECK(std::abs(steady_state_xe(p, b, kNu + detune).cx) / b ==
            doctest::Approx(g_small).epsilon(1e-3));
  }
}

TEST_CASE("Bloch: without relaxation |Pⁿ| is conserved and precesses at ν₀") {
  AmplifierParams p = resonant();
  const double inf = std::numeric_limits<double>::infinity();
  p.t1n = inf;
  p.t2n = inf;
  p.t_e = inf;
  SpinState start = equilibrium_state(p);
  start.pn = Vec3(0.2, 0.0, 0.2);
  BlochOptions opt;
  opt.dt = max_bloch_step(p);
  opt.record_interval = 1.0 / kNu;
  const auto traj = integrate_bloch(p, HarmonicDrive{}, start, 10.0 / kNu, opt);
  const double n0 = start.pn.norm();
  for (std::size_t i = 1; i < traj.size(); ++i)
    CHECK(std::abs(traj[i].pn.norm() - n0) < 1e-8 * static_cast<double>(i));

  opt.record_interval = 1e-3;
  const auto fine = integrate_bloch(p, HarmonicDrive{}, start, 2.0, opt);
  // Zero crossings of Pₓ give the precession frequency.
  std::vector<double> crossings;
  for (std::size_t i = 1; i < fine.size(); ++i) {
    const double a = fine[i - 1].pn.x(), b = fine[i].pn.x();
    if (a < 0.0 && b >= 0.0) crossings.push_back(fine[i - 1].t + (fine[i].t - fine[i - 1].t) * a / (a - b));
  }
  REQUIRE(crossings.size() >= 5);
  const double nu = static_cast<double>(crossings.size() - 1) / (crossings.back() - crossings.front());
  CHECK(nu == doctest::Approx(larmor_frequency(p.bz0, p.gamma_n)).epsilon(1e-3));
}
