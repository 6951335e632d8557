#include "doctest.h"

#include "esl/errors.hpp"
#include "esl/exotic_fields.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace esl;

namespace {

constexpr double kPi = std::numbers::pi;

// Independent literal constants for the closed-form oracles.
constexpr double kHbar = 1.054571817e-34;
constexpr double kC = 299792458.0;
constexpr double kMn = 1.67492749804e-27;
const double kGamma = 2.0 * kPi * 11.777e6;
const double kMu = kGamma * kHbar / 2.0;

FieldModel bgo_model(double pivot_y = 0.0) {
  FieldModel m;
  m.source.edges = Vec3(25e-3, 25e-3, 25e-3);
  m.source.offset = Vec3(221.5e-3, 0.0, 0.0);
  m.source.mass = 112.34e-3;
  m.source.nucleons = 6.71e25;
  m.resolution = 2.5e-3;
  m.rotation.pivot = Vec3(6.0e-3, pivot_y, 583.2e-3);
  m.rotation.frequency = 4.997;
  return m;
}

FieldModel rod_model() {
  FieldModel m = bgo_model(3.4e-3);
  m.source.edges = Vec3(487.6e-3, 30.5e-3, 15.2e-3);
  m.source.offset = Vec3::Zero();
  m.source.mass = 610.34e-3;
  m.source.nucleons = 3.64e26;
  m.resolution = 7.6e-3;
  return m;
}

Vec3 random_vec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

}  // namespace

TEST_CASE("constants: |μ| = γħ/2 for both gyromagnetic options") {
  for (double g : {kXeGammaOver2PiStandard, kXeGammaOver2PiOperating}) {
    const auto k = PhysicalConstants::with_gamma(g);
    CHECK(k.mu_xe == doctest::Approx(2 * kPi * g * k.hbar / 2).epsilon(1e-12));
    CHECK_NOTHROW(k.validate());
  }
  auto k = PhysicalConstants::standard();
  k.mu_xe *= 1.001;
  CHECK_THROWS_AS(k.validate(), Error);
}

TEST_CASE("V4+5 kernel: trivial cases") {
  const auto k = PhysicalConstants::standard();
  const Vec3 r(0.1, -0.2, 0.5);
  CHECK(kernel_v45(r, Vec3::Zero(), 1.0, k).norm() == 0.0);
  CHECK(kernel_v45(r, 3.0 * r, 1.0, k).norm() < 1e-30);
}

TEST_CASE("V4+5 kernel: closed-form magnitude and direction") {
  const auto k = PhysicalConstants::standard();
  const double rz = 0.5832, v = 7.655, lambda = 1.0;
  const Vec3 b = kernel_v45(Vec3(0, 0, rz), Vec3(v, 0, 0), lambda, k);
  const double expected = kHbar * kHbar / (8 * kPi * kMn * kC * kMu) * v *
                          (1 / (lambda * rz) + 1 / (rz * rz)) * std::exp(-rz / lambda);
  CHECK(b.norm() == doctest::Approx(expected).epsilon(1e-12));
  // x̂ × ẑ = −ŷ with the positive sign constant.
  CHECK(b.y() == doctest::Approx(-expected).epsilon(1e-12));
  CHECK(std::abs(b.x()) + std::abs(b.z()) == 0.0);
}

TEST_CASE("V12+13 kernel: closed-form magnitude and parallelism") {
  const auto k = PhysicalConstants::standard();
  const double rz = 0.5832, v = 7.655;
  const Vec3 b = kernel_v1213(Vec3(0, 0, rz), Vec3(v, 0, 0), 1.0, k);
  const double expected = kHbar / (8 * kPi * kMu) * v / rz * std::exp(-rz);
  CHECK(b.norm() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(b.x() == doctest::Approx(-expected).epsilon(1e-12));
  CHECK(kernel_v1213(Vec3(0, 0, rz), Vec3::Zero(), 1.0, k).norm() == 0.0);

  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    const Vec3 r = random_vec(rng, 1.0), vel = random_vec(rng, 10.0);
    const Vec3 out = kernel_v1213(r, vel, 0.7, k);
    CHECK(out.cross(vel).norm() <= 1e-12 * out.norm() * vel.norm());
  }
}

TEST_CASE("kernels: singular distance and invalid range") {
  const auto k = PhysicalConstants::standard();
  for (Interaction tag : {Interaction::v45, Interaction::v1213}) {
    try {
      kernel(tag, Vec3::Zero(), Vec3(1, 0, 0), 1.0, k);
      FAIL("expected singular-distance error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::singular_distance);
    }
    CHECK_THROWS_AS(kernel(tag, Vec3(0, 0, 1), Vec3(1, 0, 0), 0.0, k), Error);
    CHECK_THROWS_AS(kernel(tag, Vec3(0, 0, 1), Vec3(1, 0, 0), -1.0, k), Error);
  }
}

TEST_CASE("property: V4+5 output is orthogonal to v and r") {
  const auto k = PhysicalConstants::standard();
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Vec3 r = random_vec(rng, 1.0), v = random_vec(rng, 10.0);
    const Vec3 b = kernel_v45(r, v, 0.3, k);
    CHECK(std::abs(b.dot(v)) <= 1e-12 * b.norm() * v.norm());
    CHECK(std::abs(b.dot(r)) <= 1e-12 * b.norm() * r.norm());
  }
}

TEST_CASE("property: kernel magnitudes increase strictly with λ") {
  const auto k = PhysicalConstants::standard();
  const Vec3 r(0.2, 0.0, 0.5), v(3.0, 0.0, -1.0);
  for (Interaction tag : {Interaction::v45, Interaction::v1213}) {
    double prev = 0.0;
    for (double lambda = 0.01; lambda < 200.0; lambda *= 1.5) {
      const double m = kernel(tag, r, v, lambda, k).norm();
      CHECK(m > prev);
      prev = m;
    }
  }
}

TEST_CASE("integrate_field: degenerate clouds") {
  const auto k = PhysicalConstants::standard();
  VoxelCloud empty;
  Pose pose;
  CHECK(integrate_field(empty, pose, 1.0, 1.0, Interaction::v45, k).norm() == 0.0);

  VoxelCloud one;
  one.voxels.push_back({Vec3::Zero(), 4.2e20});
  pose.positions = {Vec3(0.1, 0.0, 0.6)};
  pose.velocities = {Vec3(0.0, 0.0, 3.0)};
  for (Interaction tag : {Interaction::v45, Interaction::v1213}) {
    const Vec3 expected = 4.2e20 * kernel(tag, -pose.positions[0], pose.velocities[0], 1.0, k);
    const Vec3 got = integrate_field(one, pose, 1.0, 1.0, tag, k);
    CHECK((got - expected).norm() <= 1e-15 * expected.norm());
  }
}

TEST_CASE("integrate_field: linear in f") {
  const FieldModel m = bgo_model();
  const auto cloud = m.cloud();
  const Pose pose = pose_at(cloud, m.source, m.rotation, 0.021);
  for (Interaction tag : {Interaction::v45, Interaction::v1213}) {
    const Vec3 b1 = integrate_field(cloud, pose, 1.0, 1.0, tag, m.constants);
    for (double a : {-3.0, 1e-19, 2.5e7}) {
      const Vec3 ba = integrate_field(cloud, pose, 1.0, a, tag, m.constants);
      CHECK((ba - a * b1).norm() <= 1e-15 * std::abs(a) * b1.norm());
    }
  }
}

TEST_CASE("integrate_field: summation modes and cell averaging") {
  FieldModel m = bgo_model();
  const auto cloud = m.cloud();
  const Pose pose = pose_at(cloud, m.source, m.rotation, 0.05);
  const Vec3 fast = integrate_field(cloud, pose, 1.0, 1.0, Interaction::v45, m.constants);
  FieldOptions opt;
  opt.summation = Summation::compensated;
  const Vec3 comp = integrate_field(cloud, pose, 1.0, 1.0, Interaction::v45, m.constants, opt);
  CHECK((fast - comp).norm() <= 1e-12 * fast.norm());
  opt.cell = CellModel::corners;
  const Vec3 cell = integrate_field(cloud, pose, 1.0, 1.0, Interaction::v45, m.constants, opt);
  CHECK((cell - fast).norm() <= 1e-3 * fast.norm());
}

TEST_CASE("integrate_field: resolution halving converges within 0.5%") {
  const FieldModel m = bgo_model(3.4e-3);
  for (Interaction tag : {Interaction::v45, Interaction::v1213}) {
    const auto rep = grid_convergence(m.source, m.rotation, 1.0, tag, 0.037, 12.5e-3, m.constants);
    CHECK(rep.rel_change_1 < 5e-3);
    CHECK(rep.rel_change_2 < 5e-3);
  }
}

TEST_CASE("field_timeseries: invalid sampling") {
  const FieldModel m = bgo_model();
  const auto cloud = m.cloud();
  CHECK_THROWS_AS(field_timeseries(m.source, cloud, m.rotation, 1.0, 1.0, Interaction::v45, 32, 1,
                                   m.constants),
                  Error);
  CHECK_THROWS_AS(field_timeseries(m.source, cloud, m.rotation, 1.0, 1.0, Interaction::v45, 720, 0,
                                   m.constants),
                  Error);
}

TEST_CASE("field_timeseries: rotation-plane symmetry") {
  const FieldModel m = bgo_model();
  const auto s45 = m.series(1.0, 1.0, Interaction::v45);
  const auto s1213 = m.series(1.0, 1.0, Interaction::v1213);
  double peak45 = 0, off45 = 0, peak1213 = 0, off1213 = 0;
  for (std::size_t i = 0; i < s45.samples.size(); ++i) {
    peak45 = std::max(peak45, std::abs(s45.samples[i].y()));
    off45 = std::max({off45, std::abs(s45.samples[i].x()), std::abs(s45.samples[i].z())});
    peak1213 = std::max(peak1213, s1213.samples[i].norm());
    off1213 = std::max(off1213, std::abs(s1213.samples[i].y()));
  }
  CHECK(off45 < 1e-6 * peak45);
  CHECK(off1213 < 1e-6 * peak1213);
}

TEST_CASE("field_timeseries: periodic and antisymmetric under reversal") {
  FieldModel m = bgo_model(3.4e-3);
  m.resolution = 5e-3;
  m.samples_per_period = 120;
  m.rotation.initial_phase = 0.4;
  const auto cloud = m.cloud();
  for (Interaction tag : {Interaction::v45, Interaction::v1213}) {
    const auto two = field_timeseries(m.source, cloud, m.rotation, 1.0, 1.0, tag, 120, 2,
                                      m.constants);
    REQUIRE(two.n_periods() == 2);
    for (std::size_t i = 0; i < 120; ++i)
      CHECK((two.samples[i] - two.samples[i + 120]).norm() <= 1e-9 * two.samples[i].norm());

    RotationSpec ccw = m.rotation;
    ccw.direction = Direction::ccw;
    const auto cw_series = field_timeseries(m.source, cloud, m.rotation, 1.0, 1.0, tag, 120, 1,
                                            m.constants);
    const auto ccw_series = field_timeseries(m.source, cloud, ccw, 1.0, 1.0, tag, 120, 1,
                                             m.constants);
    for (std::size_t i = 0; i < 120; ++i) {
      const Vec3& a = ccw_series.samples[i];
      const Vec3& b = cw_series.samples[(120 - i) % 120];
      CHECK((a + b).norm() <= 1e-9 * b.norm());
    }
  }
}

TEST_CASE("harmonic_amplitudes: pure cosine") {
  FieldTimeSeries s;
  s.nu = 4.997;
  s.dt = 1.0 / (s.nu * 360);
  const double a = 3.2e-15;
  for (int i = 0; i < 720; ++i)
    s.samples.push_back(Vec3(0.0, a * std::cos(2 * kPi * s.nu * s.time(i) + 0.3), 0.0));
  const auto spec = harmonic_amplitudes(s, 10);
  CHECK(spec.at(1).amplitude.y() == doctest::Approx(a).epsilon(1e-12));
  CHECK(spec.at(1).phase.y() == doctest::Approx(0.3).epsilon(1e-12));
  for (int n = 2; n <= 10; ++n) CHECK(spec.at(n).amplitude.y() < 1e-9 * a);
  CHECK_THROWS_AS(spec.at(11), Error);
}

TEST_CASE("harmonic_amplitudes: errors") {
  FieldTimeSeries s;
  s.nu = 1.0;
  s.dt = 1.0 / 100;
  s.samples.assign(150, Vec3(1, 0, 0));
  try {
    harmonic_amplitudes(s, 3);
    FAIL("expected leakage");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::leakage);
  }
  s.samples.resize(100);
  CHECK_NOTHROW(harmonic_amplitudes(s, 49));
  CHECK_THROWS_AS(harmonic_amplitudes(s, 50), Error);
  CHECK_THROWS_AS(harmonic_amplitudes(s, 0), Error);
  s.dt = 1.0 / 100.5;
  CHECK_THROWS_AS(harmonic_amplitudes(s, 3), Error);
}

TEST_CASE("harmonic_amplitudes: Parseval bound on the BGO series") {
  const FieldModel m = bgo_model(3.4e-3);
  const auto s = m.series(1.0, 1.0, Interaction::v45);
  const auto spec = harmonic_amplitudes(s, 359);
  for (int a = 0; a < 3; ++a) {
    double ms = 0.0;
    for (const auto& v : s.samples) ms += (v[a] - spec.dc[a]) * (v[a] - spec.dc[a]);
    ms /= static_cast<double>(s.samples.size());
    double sum = 0.0;
    for (const auto& h : spec.harmonics) sum += h.amplitude[a] * h.amplitude[a];
    CHECK(sum <= 2.0 * ms * (1 + 1e-6) + 1e-300);
  }
}

TEST_CASE("BGO harmonic ratios") {
  const FieldModel m = bgo_model(3.4e-3);
  const auto s45 = harmonic_amplitudes(m.series(1.0, 1.0, Interaction::v45), 3);
  CHECK(s45.at(2).amplitude.y() / s45.at(1).amplitude.y() ==
        doctest::Approx(2.9 / 5.1).epsilon(0.05));
  CHECK(s45.at(3).amplitude.y() / s45.at(1).amplitude.y() ==
        doctest::Approx(1.4 / 5.1).epsilon(0.05));
  const auto s1213 = harmonic_amplitudes(m.series(1.0, 1.0, Interaction::v1213), 3);
  CHECK(s1213.at(2).amplitude.x() / s1213.at(1).amplitude.x() ==
        doctest::Approx(1.7 / 5.5).epsilon(0.05));
  CHECK(s1213.at(3).amplitude.x() / s1213.at(1).amplitude.x() ==
        doctest::Approx(0.5 / 5.5).epsilon(0.05));
}

TEST_CASE("rod spectrum: even harmonics only when centred") {
  const FieldModel rod = rod_model();
  const auto cloud = rod.cloud();
  for (Interaction tag : {Interaction::v45, Interaction::v1213}) {
    const auto spec = rod_field_spectrum(rod.source, cloud, rod.rotation, 1.0, 1.0, tag, 720, 6,
                                         rod.constants);
    const double second = spec.at(2).amplitude.norm();
    for (int n : {1, 3, 5}) CHECK(spec.at(n).amplitude.norm() < 1e-3 * second);
    for (int n : {1, 3, 4, 5, 6}) CHECK(spec.at(n).amplitude.norm() < second);
  }

  FieldModel shifted = rod;
  shifted.source.offset = Vec3(0.5 * 487.6e-3, 0.0, 0.0);
  CHECK_THROWS_AS(rod_field_spectrum(shifted.source, cloud, shifted.rotation, 1.0, 1.0,
                                     Interaction::v45, 720, 6, rod.constants),
                  Error);
  const auto spec = harmonic_amplitudes(shifted.series(1.0, 1.0, Interaction::v45), 3);
  CHECK(spec.at(1).amplitude.norm() > 1e-2 * spec.at(2).amplitude.norm());
}

TEST_CASE("aligned initial phase makes the CW first harmonic a cosine") {
  for (Interaction tag : {Interaction::v45, Interaction::v1213}) {
    FieldModel m = bgo_model(3.4e-3);
    m.resolution = 5e-3;
    m.rotation.initial_phase = aligned_initial_phase(m, 1.0, tag);
    const auto spec = harmonic_amplitudes(m.series(1.0, 1.0, tag), 1);
    CHECK(std::abs(spec.at(1).phase[primary_axis(tag)]) < 1e-9);
  }
}

TEST_CASE("first_harmonic rejects non-positive λ") {
  const FieldModel m = bgo_model();
  CHECK_THROWS_AS(first_harmonic(m, 0.0, Interaction::v45), Error);
}

TEST_CASE("parallel time partitions reproduce the serial series exactly") {
  FieldModel m = bgo_model(3.4e-3);
  m.resolution = 5e-3;
  const auto serial = m.series(1.0, 1.0, Interaction::v45);
  m.options.workers = 4;
  const auto parallel = m.series(1.0, 1.0, Interaction::v45);
  REQUIRE(serial.samples.size() == parallel.samples.size());
  for (std::size_t i = 0; i < serial.samples.size(); ++i)
    CHECK(serial.samples[i] == parallel.samples[i]);
}
