#include "esl/signal_pipeline.hpp"

#include "esl/errors.hpp"
#include "esl/fitting.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace esl {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::size_t exact_ratio(double value, const char* what) {
  const auto n = std::llround(value);
  if (n <= 0 || std::abs(value - static_cast<double>(n)) > 1e-9 * std::max(1.0, value))
    throw Error(ErrorKind::leakage, std::string(what) + " is not an integer");
  return static_cast<std::size_t>(n);
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

constexpr std::array<std::string_view, 8> kSystematicsParameters = {
    "bgo_mass", "pivot_x", "pivot_y", "pivot_z", "rod_length", "rotation_frequency",
    "alpha", "phi"};

void apply_perturbation(FieldModel& m, const std::string& name, double delta) {
  if (name == "bgo_mass") {
    m.source.nucleons *= (m.source.mass + delta) / m.source.mass;
    m.source.mass += delta;
  } else if (name == "pivot_x") {
    m.rotation.pivot.x() += delta;
  } else if (name == "pivot_y") {
    m.rotation.pivot.y() += delta;
  } else if (name == "pivot_z") {
    m.rotation.pivot.z() += delta;
  } else if (name == "rod_length") {
    // The rod is pinned at the pivot hole; its length tolerance accrues at
    // the BGO end, moving the BGO radially by the full excursion.
    const double arm = m.source.offset.norm();
    if (arm == 0.0)
      throw Error(ErrorKind::configuration, "rod_length row needs a BGO off the pivot");
    m.source.offset *= (arm + delta) / arm;
  } else if (name == "rotation_frequency") {
    m.rotation.frequency += delta;
  } else {
    throw Error(ErrorKind::configuration, "unknown systematics parameter '" + name + "'");
  }
}

}  // namespace

std::size_t SignalTrace::samples_per_period() const {
  return static_cast<std::size_t>(std::llround(1.0 / (nu * dt)));
}

void CalibrationSet::validate() const {
  if (!(alpha > 0.0)) throw Error(ErrorKind::configuration, "calibration alpha must be positive");
  if (!(b1_ref > 0.0))
    throw Error(ErrorKind::configuration, "reference first-harmonic field must be positive");
}

double readout_angle_for_phase(const AmplifierParams& params, Interaction tag, double nu,
                               double phi) {
  // Only the phase matters; a tiny drive keeps saturation out of it.
  const SteadyState s = steady_state_xe(params, 1e-18, nu);
  // x-output phasor for a unit drive on the primary axis (x-drive is the
  // y-drive response rotated by -90° about z).
  const std::complex<double> ox = primary_axis(tag) == 1 ? s.cx : s.cy;
  return std::arg(ox) - phi;
}

SignalTrace synthesize_signal(const FieldTimeSeries& field, const AmplifierParams& params,
                              const CalibrationSet& calib, double noise_asd,
                              std::uint64_t seed, const SynthesisOptions& options) {
  if (!(noise_asd >= 0.0)) throw Error(ErrorKind::domain, "noise ASD must be non-negative");
  if (!(calib.alpha > 0.0)) throw Error(ErrorKind::configuration, "calibration alpha must be positive");
  const std::size_t spp_field = field.samples_per_period();
  const std::size_t spp = options.samples_per_period;
  if (spp == 0 || spp_field % spp != 0)
    throw Error(ErrorKind::configuration,
                "trace samples per period must divide the field series rate");
  if (options.n_periods < 1) throw Error(ErrorKind::configuration, "trace needs at least one period");

  const std::size_t decim = spp_field / spp;
  const FieldTimeSeries amplified = amplifier_response(field, params);
  const double gain = calib.alpha / amplification_factor(params);
  const double cx = std::cos(options.readout_angle);
  const double cy = std::sin(options.readout_angle);

  // One template period-block at the trace rate; the field series is periodic.
  const std::size_t block = field.samples.size() / decim;
  std::vector<double> clean(block);
  for (std::size_t i = 0; i < block; ++i) {
    const Vec3& b = amplified.samples[i * decim];
    const double phase = 2.0 * kPi * static_cast<double>(i % spp) / static_cast<double>(spp);
    clean[i] = gain * (cx * b.x() + cy * b.y()) +
               calib.alpha * options.common_mode * std::cos(phase + options.common_mode_phase);
  }

  SignalTrace trace;
  trace.nu = field.nu;
  trace.dt = 1.0 / (field.nu * static_cast<double>(spp));
  trace.direction = options.direction;
  trace.seed = seed;
  trace.samples.resize(spp * options.n_periods);
  for (std::size_t i = 0; i < trace.samples.size(); ++i) trace.samples[i] = clean[i % block];

  if (noise_asd > 0.0) {
    // One-sided ASD: per-sample variance is ASD² · fs / 2.
    const double sigma = noise_asd * std::sqrt(0.5 / trace.dt);
    std::mt19937_64 rng(splitmix64(seed));
    std::normal_distribution<double> normal(0.0, calib.alpha * sigma);
    for (double& s : trace.samples) s += normal(rng);
  }
  return trace;
}

std::vector<double> lockin_estimate(const SignalTrace& trace, double nu,
                                    const CalibrationSet& calib, double window) {
  calib.validate();
  if (trace.samples.empty()) throw Error(ErrorKind::leakage, "empty trace");
  const std::size_t spp = exact_ratio(1.0 / (nu * trace.dt), "samples per period");
  const std::size_t periods = exact_ratio(window * nu, "window length in periods");
  const std::size_t per_window = spp * periods;
  if (trace.samples.size() < per_window || trace.samples.size() % per_window != 0)
    throw Error(ErrorKind::leakage, "trace does not cover an integer number of windows");

  std::vector<double> ref(spp);
  double ref_energy = 0.0;
  for (std::size_t i = 0; i < spp; ++i) {
    ref[i] = std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(spp) + calib.phi);
    ref_energy += ref[i] * ref[i];
  }
  ref_energy *= static_cast<double>(periods);
  const double norm = 1.0 / (calib.alpha * calib.b1_ref * ref_energy);

  std::vector<double> out(trace.samples.size() / per_window);
  for (std::size_t w = 0; w < out.size(); ++w) {
    double acc = 0.0;
    const std::size_t base = w * per_window;
    for (std::size_t i = 0; i < per_window; ++i) acc += ref[i % spp] * trace.samples[base + i];
    out[w] = acc * norm;
  }
  return out;
}

int freedman_diaconis_bins(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  const double range = v.back() - v.front();
  if (!(iqr > 0.0) || !(range > 0.0)) return 5;
  const double width = 2.0 * iqr / std::cbrt(static_cast<double>(v.size()));
  return std::clamp(static_cast<int>(std::ceil(range / width)), 5, 200);
}

GaussianFit fit_gaussian(std::span<const double> values, int n_bins) {
  if (values.size() < 30) throw Error(ErrorKind::fit, "Gaussian fit needs at least 30 values");
  if (n_bins == 0) n_bins = freedman_diaconis_bins(values);
  if (n_bins < 3) throw Error(ErrorKind::fit, "Gaussian fit needs at least 3 bins");

  GaussianFit g;
  g.sample_mean = mean_of(values);
  g.sample_sigma = stddev_of(values, g.sample_mean);
  g.standard_error = g.sample_sigma / std::sqrt(static_cast<double>(values.size()));

  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  if (!(range > 0.0)) throw Error(ErrorKind::fit, "degenerate histogram: all values equal");

  g.n_bins = n_bins;
  g.range_min = lo;
  g.bin_width = range / n_bins;
  g.counts.assign(static_cast<std::size_t>(n_bins), 0.0);
  for (double x : values) {
    auto b = static_cast<int>((x - lo) / g.bin_width);
    b = std::clamp(b, 0, n_bins - 1);
    g.counts[static_cast<std::size_t>(b)] += 1.0;
  }
  const auto occupied = std::count_if(g.counts.begin(), g.counts.end(),
                                      [](double c) { return c > 0.0; });
  if (occupied < 2) throw Error(ErrorKind::fit, "degenerate histogram: single bin occupied");

  // Fit in bin-index coordinates u = (x - lo)/w - 1/2 (bin centres at integers).
  const double peak = *std::max_element(g.counts.begin(), g.counts.end());
  Eigen::VectorXd x0(3);
  x0 << peak, (g.sample_mean - lo) / g.bin_width - 0.5,
      std::max(g.sample_sigma / g.bin_width, 0.5);
  const auto residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    for (int i = 0; i < n_bins; ++i) {
      const double z = (i - p[1]) / p[2];
      r[i] = p[0] * std::exp(-0.5 * z * z) - g.counts[static_cast<std::size_t>(i)];
    }
  };
  const auto fit = least_squares(residuals, x0, n_bins);
  if (!fit.params.allFinite() || !(std::abs(fit.params[2]) > 0.0))
    throw Error(ErrorKind::fit, "Gaussian fit did not converge");

  g.amplitude = fit.params[0];
  g.mean = lo + (fit.params[1] + 0.5) * g.bin_width;
  g.sigma = std::abs(fit.params[2]) * g.bin_width;
  return g;
}

double CouplingEstimate::sigma_total() const { return std::hypot(sigma_stat, sigma_syst); }

CouplingEstimate summarize_estimates(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorKind::domain, "no coupling estimates to summarize");
  CouplingEstimate e;
  e.values = std::move(values);
  e.mean = mean_of(e.values);
  const double n = static_cast<double>(e.values.size());
  e.sigma_stat = e.values.size() > 1 ? stddev_of(e.values, e.mean) / std::sqrt(n) : 0.0;
  e.sigma_stat_fit = kNaN;
  if (e.values.size() >= 30) {
    try {
      e.sigma_stat_fit = fit_gaussian(e.values).sigma / std::sqrt(n);
    } catch (const Error&) {
      // Degenerate histograms keep the standard error only.
    }
  }
  return e;
}

CouplingEstimate combine_directions(const CouplingEstimate& cw, const CouplingEstimate& ccw,
                                    CombineMode mode) {
  if (cw.values.empty() || ccw.values.empty())
    throw Error(ErrorKind::domain, "both rotation directions need estimates");
  std::vector<double> pooled = cw.values;
  pooled.reserve(cw.values.size() + ccw.values.size());
  for (double v : ccw.values) pooled.push_back(-v);

  CouplingEstimate out = summarize_estimates(std::move(pooled));
  if (mode == CombineMode::averaged) {
    out.mean = 0.5 * (cw.mean - ccw.mean);
    out.sigma_stat = 0.5 * std::hypot(cw.sigma_stat, ccw.sigma_stat);
  }
  out.cw = DirectionSummary{cw.values.size(), cw.mean, cw.sigma_stat};
  out.ccw = DirectionSummary{ccw.values.size(), ccw.mean, ccw.sigma_stat};
  return out;
}

std::span<const std::string_view> systematics_parameters() { return kSystematicsParameters; }

SystematicsReport propagate_systematics(const SystematicsInput& input, double f_nominal,
                                        std::span<const PerturbationRow> table) {
  for (const auto& row : table)
    if (std::find(kSystematicsParameters.begin(), kSystematicsParameters.end(),
                  row.parameter) == kSystematicsParameters.end())
      throw Error(ErrorKind::configuration,
                  "unknown systematics parameter '" + row.parameter + "'");

  SystematicsReport rep;
  rep.f_nominal = f_nominal;
  rep.b1_nominal = first_harmonic(input.bgo, input.lambda, input.tag);

  const auto shift = [&](const std::string& name, double delta) -> double {
    if (delta == 0.0) return 0.0;
    if (name == "alpha") {
      return f_nominal * (input.calib.alpha / (input.calib.alpha + delta) - 1.0);
    }
    if (name == "phi") {
      // A reference phase off by δ scales the projection by cos δ.
      return f_nominal * (1.0 / std::cos(delta) - 1.0);
    }
    FieldModel m = input.bgo;
    apply_perturbation(m, name, delta);
    return f_nominal * (rep.b1_nominal / first_harmonic(m, input.lambda, input.tag) - 1.0);
  };

  double sum_sq = 0.0;
  for (const auto& row : table) {
    SystematicsRow r;
    r.parameter = row.parameter;
    r.delta_plus = row.plus;
    r.delta_minus = row.minus;
    r.df_plus = shift(row.parameter, row.plus);
    r.df_minus = shift(row.parameter, row.minus);
    r.magnitude = std::max(std::abs(r.df_plus), std::abs(r.df_minus));
    sum_sq += r.magnitude * r.magnitude;
    rep.rows.push_back(r);
  }
  rep.total = std::sqrt(sum_sq);
  return rep;
}

double policy_quantile(ConfidencePolicy policy) {
  return policy == ConfidencePolicy::two_sided_95 ? 1.959963984540054 : 1.6448536269514722;
}

std::string_view to_string(ConfidencePolicy policy) {
  return policy == ConfidencePolicy::two_sided_95 ? "two_sided_95" : "one_sided_95";
}

ConfidencePolicy confidence_policy_from_string(std::string_view s) {
  if (s == "two_sided_95") return ConfidencePolicy::two_sided_95;
  if (s == "one_sided_95") return ConfidencePolicy::one_sided_95;
  throw Error(ErrorKind::configuration,
              "confidence policy must be 'two_sided_95' or 'one_sided_95'");
}

ConstraintCurve constraint_curve(const CouplingEstimate& estimate,
                                 std::span<const double> lambdas, Interaction tag,
                                 const FieldModel& geometry, double lambda_ref,
                                 ConfidencePolicy policy) {
  for (double l : lambdas)
    if (!(l > 0.0)) throw Error(ErrorKind::domain, "force range lambda must be positive");
  if (!(lambda_ref > 0.0)) throw Error(ErrorKind::domain, "reference lambda must be positive");

  ConstraintCurve c;
  c.tag = tag;
  c.policy = policy;
  c.lambda_ref = lambda_ref;
  c.b1_ref = first_harmonic(geometry, lambda_ref, tag);
  c.field_bound =
      (std::abs(estimate.mean) + policy_quantile(policy) * estimate.sigma_total()) * c.b1_ref;
  for (double l : lambdas) {
    const double b1 = l == lambda_ref ? c.b1_ref : first_harmonic(geometry, l, tag);
    c.lambda.push_back(l);
    c.b1.push_back(b1);
    c.bound.push_back(c.field_bound / b1);
  }
  return c;
}

std::vector<double> log_lambda_grid(double lo, double hi, int per_decade) {
  if (!(lo > 0.0) || !(hi > lo) || per_decade < 1)
    throw Error(ErrorKind::domain, "lambda grid needs 0 < lo < hi and per_decade >= 1");
  const double decades = std::log10(hi / lo);
  const auto steps = static_cast<int>(std::floor(decades * per_decade + 1e-9));
  std::vector<double> grid;
  for (int i = 0; i <= steps; ++i) grid.push_back(lo * std::pow(10.0, double(i) / per_decade));
  if (std::abs(grid.back() - hi) > 1e-12 * hi) grid.push_back(hi);
  else grid.back() = hi;
  return grid;
}

double f45_from_products(double ga_ga, double gv_gv, double hbar_c) {
  return -0.5 * ga_ga / hbar_c - 1.5 * gv_gv / hbar_c;
}

double f1213_from_product(double ga_gv, double hbar_c) { return 4.0 * ga_gv / hbar_c; }

double ga_ga_from_f45(double f45, double gv_gv, double hbar_c) {
  return -2.0 * f45 * hbar_c - 3.0 * gv_gv;
}

double gv_gv_from_f45(double f45, double ga_ga, double hbar_c) {
  return -(2.0 * f45 * hbar_c + ga_ga) / 3.0;
}

double ga_gv_from_f1213(double f1213, double hbar_c) { return 0.25 * f1213 * hbar_c; }

ClosedLoop::ClosedLoop(ClosedLoopSetup setup) : setup_(std::move(setup)) {
  FieldModel aligned = setup_.bgo;
  aligned.rotation.initial_phase = aligned_initial_phase(aligned, setup_.lambda, setup_.tag);
  aligned.rotation.direction = Direction::cw;
  setup_.calib.b1_ref = first_harmonic(aligned, setup_.lambda, setup_.tag);
  cw_field_ = aligned.series(setup_.lambda, setup_.f_true, setup_.tag);
  aligned.rotation.direction = Direction::ccw;
  ccw_field_ = aligned.series(setup_.lambda, setup_.f_true, setup_.tag);
  setup_.bgo = aligned;

  readout_angle_ = readout_angle_for_phase(setup_.amplifier, setup_.tag,
                                           aligned.rotation.frequency, setup_.calib.phi);
  periods_ = static_cast<std::size_t>(std::llround(setup_.duration * aligned.rotation.frequency));
  if (periods_ < 1) throw Error(ErrorKind::configuration, "run shorter than one rotation period");
}

SignalTrace ClosedLoop::trace(Direction d, std::uint64_t seed) const {
  SynthesisOptions opt;
  opt.direction = d;
  opt.n_periods = periods_;
  opt.samples_per_period = setup_.trace_samples_per_period;
  opt.readout_angle = readout_angle_;
  opt.common_mode = setup_.common_mode;
  opt.common_mode_phase = setup_.common_mode_phase;
  const std::uint64_t stream = splitmix64(seed) ^ (d == Direction::cw ? 0x5cULL : 0xc5ULL);
  return synthesize_signal(d == Direction::cw ? cw_field_ : ccw_field_, setup_.amplifier,
                           setup_.calib, setup_.noise_asd, stream, opt);
}

ClosedLoopResult ClosedLoop::run(std::uint64_t seed) const {
  const double period =
      setup_.window > 0.0 ? setup_.window : 1.0 / setup_.bgo.rotation.frequency;
  ClosedLoopResult r;
  r.cw = summarize_estimates(
      lockin_estimate(trace(Direction::cw, seed), setup_.bgo.rotation.frequency, setup_.calib, period));
  r.ccw = summarize_estimates(
      lockin_estimate(trace(Direction::ccw, seed), setup_.bgo.rotation.frequency, setup_.calib, period));
  r.combined = combine_directions(r.cw, r.ccw, setup_.combine);
  return r;
}

}  // namespace esl
