#include "esl/pipeline.hpp"

#include "esl/errors.hpp"
#include "esl/io.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <map>
#include <numbers>

namespace esl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

// Reference values the reproduce-paper check compares against.
constexpr double kRatio45[2] = {2.9 / 5.1, 1.4 / 5.1};
constexpr double kRatio1213[2] = {1.7 / 5.5, 0.5 / 5.5};
constexpr double kRatioTolerance = 0.05;
constexpr double kEtaTolerance = 0.02;
constexpr double kFwhmTolerance = 0.10;
constexpr double kOperatingBz = 423e-9;
constexpr double kOperatingNu = 4.997;
constexpr double kLarmorTolerance = 0.005;
constexpr double kBlochTolerance = 0.02;
constexpr double kPivotZShift = 0.012e-19;
constexpr double kRodLengthShift = 0.013e-19;
constexpr double kBoundAtQuarterMetre = 1.34e-33;
constexpr double kBoundTolerance = 0.30;

std::string timestamp() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}",
                     fmt::gmtime(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now())));
}

struct Stage {
  std::string name;
  const RunConfig& cfg;
  fs::path out;
  std::string config_hash;
  std::string geometry_hash;
  json files = json::array();

  Metadata metadata(const Metadata& extra = {}) const {
    Metadata m = {{"tool", fmt::format("{} {}", kToolName, kToolVersion)},
                  {"stage", name},
                  {"config_hash", config_hash},
                  {"geometry_hash", geometry_hash}};
    m.insert(m.end(), extra.begin(), extra.end());
    return m;
  }

  void record(const std::string& file, const std::string& bytes) {
    files.push_back({{"path", file}, {"hash", hash_hex(fnv1a64(bytes))}});
  }

  template <typename Rows>
  void csv(const std::string& file, const std::vector<std::string>& columns, const Rows& rows,
           const Metadata& extra = {}) {
    record(file, write_csv(out / file, metadata(extra), columns, rows));
  }

  void report(const std::string& file, json body) {
    body["stage"] = name;
    body["config_hash"] = config_hash;
    body["geometry_hash"] = geometry_hash;
    body["tool_version"] = kToolVersion;
    record(file, write_json(out / file, body));
  }
};

// ---------------------------------------------------------------- stages

json simulate_field(Stage& st) {
  const RunConfig& cfg = st.cfg;
  const double lambda = cfg.analysis.lambda_ref;
  const int nh = std::max(cfg.analysis.n_harmonics, 3);
  json summary = json::object();
  for (Interaction tag : {Interaction::v45, Interaction::v1213}) {
    const int axis = primary_axis(tag);
    const FieldTimeSeries bgo = cfg.bgo.series(lambda, 1.0, tag);
    const FieldTimeSeries rod = cfg.rod.series(lambda, 1.0, tag);
    const HarmonicSpectrum sb = harmonic_amplitudes(bgo, nh);
    const HarmonicSpectrum sr = harmonic_amplitudes(rod, nh);
    const std::string t(to_string(tag));

    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < bgo.samples.size(); ++i) {
      const Vec3& b = bgo.samples[i];
      const Vec3& r = rod.samples[i];
      rows.push_back({bgo.time(i), b.x(), b.y(), b.z(), r.x(), r.y(), r.z()});
    }
    const Metadata meta = {{"interaction", t},
                           {"lambda_m", format_number(lambda)},
                           {"f", "1"},
                           {"rotation_hz", format_number(cfg.bgo.rotation.frequency)}};
    st.csv("field_series_" + t + ".csv",
           {"t_s", "bgo_bx_T", "bgo_by_T", "bgo_bz_T", "rod_bx_T", "rod_by_T", "rod_bz_T"}, rows,
           meta);

    rows.clear();
    for (int n = 1; n <= nh; ++n) {
      const Harmonic& b = sb.at(n);
      const Harmonic& r = sr.at(n);
      rows.push_back({double(n), b.amplitude.x(), b.amplitude.y(), b.amplitude.z(),
                      b.phase[axis], r.amplitude.x(), r.amplitude.y(), r.amplitude.z()});
    }
    st.csv("field_spectrum_" + t + ".csv",
           {"n", "bgo_x_T", "bgo_y_T", "bgo_z_T", "bgo_primary_phase_rad", "rod_x_T", "rod_y_T",
            "rod_z_T"},
           rows, meta);

    const double b1 = sb.at(1).amplitude[axis];
    double peak = 0.0, off_axis = 0.0;
    for (const Vec3& b : bgo.samples) {
      peak = std::max(peak, b.norm());
      off_axis = std::max(off_axis, tag == Interaction::v45 ? std::hypot(b.x(), b.z())
                                                            : std::abs(b.y()));
    }
    double rod_odd = 0.0;
    for (int n = 1; n <= nh; n += 2) rod_odd = std::max(rod_odd, sr.at(n).amplitude.norm());
    int rod_dominant = 1;
    for (int n = 1; n <= nh; ++n)
      if (sr.at(n).amplitude.norm() > sr.at(rod_dominant).amplitude.norm()) rod_dominant = n;

    summary[t] = {
        {"primary_axis", axis == 0 ? "x" : "y"},
        {"b1_T", b1},
        {"ratio_2_1", sb.at(2).amplitude[axis] / b1},
        {"ratio_3_1", sb.at(3).amplitude[axis] / b1},
        {"off_axis_fraction", off_axis / peak},
        {"rod_odd_over_second", rod_odd / sr.at(2).amplitude.norm()},
        {"rod_dominant_harmonic", rod_dominant},
    };
  }
  st.report("simulate_field.json", {{"lambda_m", lambda}, {"interactions", summary}});
  return summary;
}

json amplifier(Stage& st) {
  const AmplifierParams p = resolved_amplifier(st.cfg);
  const LineshapeModel model = lineshape(p, 0.0).model;
  std::vector<double> nus, amps;
  std::vector<std::vector<double>> rows;
  constexpr int kPoints = 401;
  const double span = 5.0 * model.fwhm();
  for (int i = 0; i < kPoints; ++i) {
    const double nu = model.nu0 - span + 2.0 * span * i / (kPoints - 1);
    const SteadyState s = steady_state_xe(p, 1e-15, nu);
    // Effective field per unit drive, in units of the drive.
    const double gain = p.beta() * p.m0n * std::abs(s.cx) / 1e-15;
    nus.push_back(nu);
    amps.push_back(gain);
    rows.push_back({nu, gain, model.relative(nu), std::arg(s.cx)});
  }
  const LineshapeModel fit = fit_lineshape(nus, amps, model);
  st.csv("lineshape.csv", {"nu_hz", "gain", "relative_model", "phase_rad"}, rows,
         {{"nu0_hz", format_number(model.nu0)}, {"eta", format_number(model.eta)}});

  json larmor = json::object();
  for (double g : {kXeGammaOver2PiStandard, kXeGammaOver2PiOperating})
    larmor[format_number(g)] = g * kOperatingBz;

  json summary = {
      {"eta", amplification_factor(p)},
      {"eta_fit", fit.eta},
      {"fwhm_model_hz", model.fwhm()},
      {"fwhm_fit_hz", fit.fwhm()},
      {"nu0_hz", model.nu0},
      {"nu0_fit_hz", fit.nu0},
      {"lambda_hz", model.lambda},
      {"t2n_s", p.t2n},
      {"m0n_T", p.m0n},
      {"beta", p.beta()},
      {"bz0_T", p.bz0},
      {"larmor_hz_at_423nT_by_gamma_over_2pi", larmor},
  };
  st.report("amplifier.json", summary);
  return summary;
}

json bloch(Stage& st) {
  const RunConfig& cfg = st.cfg;
  const AmplifierParams p = resolved_amplifier(cfg);
  const double nu = larmor_frequency(p.bz0, p.gamma_n) + cfg.bloch.detuning;
  BlochOptions opt;
  opt.dt = cfg.bloch.dt > 0.0 ? cfg.bloch.dt : max_bloch_step(p);
  opt.record_interval = cfg.bloch.record_interval;
  const HarmonicDrive drive{Vec3(0.0, cfg.bloch.drive, 0.0), nu, 0.0};
  const auto traj = integrate_bloch(p, drive, equilibrium_state(p), cfg.bloch.duration, opt);

  std::vector<std::vector<double>> rows;
  rows.reserve(traj.size());
  for (const auto& s : traj)
    rows.push_back({s.t, s.pe.x(), s.pe.y(), s.pe.z(), s.pn.x(), s.pn.y(), s.pn.z()});
  st.csv("bloch_trajectory.csv", {"t_s", "pe_x", "pe_y", "pe_z", "pn_x", "pn_y", "pn_z"}, rows,
         {{"drive_T", format_number(cfg.bloch.drive)}, {"drive_hz", format_number(nu)},
          {"dt_s", format_number(opt.dt)}});

  const SteadyState num = fit_trajectory_tail(traj, nu, cfg.bloch.tail_periods);
  const SteadyState ana = steady_state_xe(p, cfg.bloch.drive, nu);
  const double err = std::abs(num.cx - ana.cx) / std::abs(ana.cx);
  json summary = {
      {"drive_T", cfg.bloch.drive},
      {"drive_hz", nu},
      {"dt_s", opt.dt},
      {"duration_s", cfg.bloch.duration},
      {"saturation", ana.saturation},
      {"numeric_px_amplitude", std::abs(num.cx)},
      {"analytic_px_amplitude", std::abs(ana.cx)},
      {"numeric_pz", num.pz},
      {"analytic_pz", ana.pz},
      {"relative_difference", err},
  };
  st.report("bloch.json", summary);
  return summary;
}

json estimate_json(const CouplingEstimate& e) {
  json j = {{"n", e.values.size()},
            {"mean", e.mean},
            {"sigma_stat", e.sigma_stat},
            {"sigma_syst", e.sigma_syst}};
  j["sigma_stat_fit"] = std::isfinite(e.sigma_stat_fit) ? json(e.sigma_stat_fit) : json(nullptr);
  return j;
}

SignalTrace read_trace(const fs::path& path, double nu, Direction d) {
  const auto rows = read_csv_numbers(path);
  if (rows.size() < 2) throw Error(ErrorKind::parse, path.string() + ": trace needs at least two samples");
  SignalTrace t;
  t.nu = nu;
  t.direction = d;
  t.dt = rows[1].at(0) - rows[0].at(0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != 2) throw Error(ErrorKind::parse, path.string() + ": expected t_s,signal_V");
    if (std::abs(rows[i][0] - rows[0][0] - t.dt * double(i)) > 1e-6 * t.dt)
      throw Error(ErrorKind::parse, path.string() + ": trace is not uniformly sampled");
    t.samples.push_back(rows[i][1]);
  }
  return t;
}

void write_trace(Stage& st, const std::string& file, const SignalTrace& t) {
  std::vector<std::vector<double>> rows;
  rows.reserve(t.samples.size());
  for (std::size_t i = 0; i < t.samples.size(); ++i) rows.push_back({t.time(i), t.samples[i]});
  st.csv(file, {"t_s", "signal_V"}, rows,
         {{"direction", std::string(to_string(t.direction))},
          {"seed", std::to_string(t.seed)},
          {"rotation_hz", format_number(t.nu)}});
}

json lockin(Stage& st) {
  const RunConfig& cfg = st.cfg;
  ClosedLoopSetup setup;
  setup.bgo = cfg.bgo;
  setup.amplifier = resolved_amplifier(cfg);
  setup.calib = cfg.calib;
  setup.tag = cfg.analysis.tag;
  setup.lambda = cfg.analysis.lambda_ref;
  setup.f_true = cfg.analysis.f_true;
  setup.noise_asd = cfg.analysis.noise_asd;
  setup.duration = cfg.analysis.duration;
  setup.window = cfg.analysis.window;
  setup.trace_samples_per_period = cfg.analysis.trace_samples_per_period;
  setup.common_mode = cfg.analysis.common_mode;
  setup.combine = cfg.analysis.combine;
  const ClosedLoop loop(setup);
  const double nu = cfg.bgo.rotation.frequency;
  const double window = setup.window > 0.0 ? setup.window : 1.0 / nu;
  const CalibrationSet& calib = loop.setup().calib;

  const bool measured = !cfg.analysis.trace_cw.empty();
  SignalTrace cw_trace, ccw_trace;
  if (measured) {
    const fs::path base = fs::path(cfg.source_path).parent_path();
    cw_trace = read_trace(base / cfg.analysis.trace_cw, nu, Direction::cw);
    ccw_trace = read_trace(base / cfg.analysis.trace_ccw, nu, Direction::ccw);
  } else {
    cw_trace = loop.trace(Direction::cw, cfg.analysis.seed);
    ccw_trace = loop.trace(Direction::ccw, cfg.analysis.seed);
    if (cfg.write_traces) {
      write_trace(st, "trace_cw.csv", cw_trace);
      write_trace(st, "trace_ccw.csv", ccw_trace);
    }
  }
  ClosedLoopResult r;
  r.cw = summarize_estimates(lockin_estimate(cw_trace, nu, calib, window));
  r.ccw = summarize_estimates(lockin_estimate(ccw_trace, nu, calib, window));
  r.combined = combine_directions(r.cw, r.ccw, setup.combine);

  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < r.cw.values.size(); ++i) rows.push_back({double(i), 1.0, r.cw.values[i]});
  for (std::size_t i = 0; i < r.ccw.values.size(); ++i)
    rows.push_back({double(i), -1.0, r.ccw.values[i]});
  const Metadata meta = {{"interaction", std::string(to_string(setup.tag))},
                         {"seed", measured ? "measured" : std::to_string(cfg.analysis.seed)},
                         {"b1_ref_T", format_number(calib.b1_ref)}};
  st.csv("lockin_values.csv", {"window", "direction", "f"}, rows, meta);

  json fit = nullptr;
  if (r.combined.values.size() >= 30) {
    const GaussianFit g = fit_gaussian(r.combined.values);
    rows.clear();
    for (int i = 0; i < g.n_bins; ++i) {
      const double x = g.range_min + (i + 0.5) * g.bin_width;
      const double z = (x - g.mean) / g.sigma;
      rows.push_back({x, g.counts[std::size_t(i)], g.amplitude * std::exp(-0.5 * z * z)});
    }
    st.csv("lockin_histogram.csv", {"f_bin_centre", "count", "gaussian_fit"}, rows, meta);
    fit = {{"mean", g.mean}, {"sigma", g.sigma}, {"amplitude", g.amplitude}, {"n_bins", g.n_bins}};
  }

  const json combined = estimate_json(r.combined);
  json summary = {
      {"interaction", to_string(setup.tag)},
      {"source", measured ? "measured" : "synthetic"},
      {"seed", cfg.analysis.seed},
      {"f_true", setup.f_true},
      {"window_s", window},
      {"b1_ref_T", calib.b1_ref},
      {"mean", r.combined.mean},
      {"sigma_stat", r.combined.sigma_stat},
      {"sigma_syst", r.combined.sigma_syst},
      {"per_direction", {{"cw", estimate_json(r.cw)}, {"ccw", estimate_json(r.ccw)}}},
      {"combined", combined},
      {"combined_gaussian_fit", fit},
  };
  st.report("lockin.json", summary);
  return summary;
}

json systematics(Stage& st) {
  const RunConfig& cfg = st.cfg;
  SystematicsInput in{cfg.bgo, cfg.systematics.lambda, cfg.systematics.tag, cfg.calib};
  const SystematicsReport rep =
      propagate_systematics(in, cfg.systematics.f_nominal, cfg.systematics.rows);
  std::vector<std::vector<std::string>> rows;
  json jrows = json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({r.parameter, format_number(r.delta_plus), format_number(r.delta_minus),
                    format_number(r.df_plus), format_number(r.df_minus),
                    format_number(r.magnitude)});
    jrows.push_back({{"parameter", r.parameter},
                     {"delta_plus", r.delta_plus},
                     {"delta_minus", r.delta_minus},
                     {"df_plus", r.df_plus},
                     {"df_minus", r.df_minus},
                     {"magnitude", r.magnitude}});
  }
  st.csv("systematics.csv",
         {"parameter", "delta_plus_si", "delta_minus_si", "df_plus", "df_minus", "magnitude"},
         rows,
         {{"interaction", std::string(to_string(cfg.systematics.tag))},
          {"lambda_m", format_number(cfg.systematics.lambda)},
          {"f_nominal", format_number(cfg.systematics.f_nominal)}});
  json summary = {{"interaction", to_string(cfg.systematics.tag)},
                  {"lambda_m", cfg.systematics.lambda},
                  {"f_nominal", rep.f_nominal},
                  {"b1_nominal_T", rep.b1_nominal},
                  {"rows", jrows},
                  {"total", rep.total}};
  st.report("systematics.json", summary);
  return summary;
}

json constrain(Stage& st) {
  const RunConfig& cfg = st.cfg;
  CouplingEstimate est;
  Interaction tag = cfg.estimate.tag;
  std::string origin = "config";
  if (cfg.estimate.source == EstimateSource::lockin) {
    const fs::path path = st.out / "lockin.json";
    const json lk = read_json(path);
    if (lk.value("config_hash", "") != st.config_hash)
      throw Error(ErrorKind::configuration,
                  fmt::format("config hash mismatch: {} was produced by {}, current config is {}",
                              path.string(), lk.value("config_hash", "?"), st.config_hash));
    tag = interaction_from_string(lk.at("interaction").get<std::string>());
    est.mean = lk.at("combined").at("mean").get<double>();
    est.sigma_stat = lk.at("combined").at("sigma_stat").get<double>();
    origin = "lockin.json";
  } else {
    est.mean = cfg.estimate.mean;
    est.sigma_stat = cfg.estimate.sigma_stat;
    est.sigma_syst = cfg.estimate.sigma_syst;
  }

  const auto grid = log_lambda_grid(cfg.analysis.lambda_min, cfg.analysis.lambda_max,
                                    cfg.analysis.lambda_per_decade);
  const ConstraintCurve c = constraint_curve(est, grid, tag, cfg.bgo, cfg.analysis.lambda_ref,
                                             cfg.analysis.policy);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < c.lambda.size(); ++i) rows.push_back({c.lambda[i], c.b1[i], c.bound[i]});
  st.csv("constraint.csv", {"lambda_m", "b1_T", "bound"}, rows,
         {{"interaction", std::string(to_string(tag))},
          {"policy", std::string(to_string(c.policy))},
          {"estimate_source", origin},
          {"mean", format_number(est.mean)},
          {"sigma_total", format_number(est.sigma_total())},
          {"lambda_ref_m", format_number(c.lambda_ref)},
          {"field_bound_T", format_number(c.field_bound)}});

  const double quarter = c.field_bound / first_harmonic(cfg.bgo, 0.25, tag);
  bool monotone = true;
  for (std::size_t i = 1; i < c.bound.size(); ++i) monotone = monotone && c.bound[i] <= c.bound[i - 1];
  json curve = json::array();
  for (std::size_t i = 0; i < c.lambda.size(); ++i) curve.push_back({c.lambda[i], c.bound[i]});
  json summary = {{"interaction", to_string(tag)},
                  {"estimate_source", origin},
                  {"bound_curve", curve},
                  {"mean", est.mean},
                  {"sigma_total", est.sigma_total()},
                  {"policy", to_string(c.policy)},
                  {"lambda_ref_m", c.lambda_ref},
                  {"field_bound_T", c.field_bound},
                  {"bound_at_lambda_ref", c.field_bound / c.b1_ref},
                  {"bound_at_0_25_m", quarter},
                  {"points", c.lambda.size()},
                  {"monotone_non_increasing", monotone}};
  st.report("constraint.json", summary);
  return summary;
}

// ------------------------------------------------------------- checks

json check(const std::string& name, double value, double target, double rel_tol) {
  const double rel = std::abs(value / target - 1.0);
  return {{"name", name}, {"value", value}, {"target", target}, {"tolerance", rel_tol},
          {"relative_error", rel}, {"pass", rel <= rel_tol}};
}

json factor_check(const std::string& name, double value, double target, double factor) {
  const double r = std::abs(value) / std::abs(target);
  return {{"name", name}, {"value", value}, {"target", target}, {"factor", factor},
          {"pass", r <= factor && r >= 1.0 / factor}};
}

json paper_checks(const std::map<std::string, json>& s) {
  json checks = json::array();
  const json& f = s.at("simulate-field");
  checks.push_back(check("v45 B2/B1", f["v45"]["ratio_2_1"], kRatio45[0], kRatioTolerance));
  checks.push_back(check("v45 B3/B1", f["v45"]["ratio_3_1"], kRatio45[1], kRatioTolerance));
  checks.push_back(check("v1213 B2/B1", f["v1213"]["ratio_2_1"], kRatio1213[0], kRatioTolerance));
  checks.push_back(check("v1213 B3/B1", f["v1213"]["ratio_3_1"], kRatio1213[1], kRatioTolerance));

  const json& a = s.at("amplifier");
  checks.push_back(check("eta", a["eta"], kDefaultEta, kEtaTolerance));
  checks.push_back(check("fwhm (fit)", a["fwhm_fit_hz"], kDefaultFwhmHz, kFwhmTolerance));
  for (auto& [g, nu] : a["larmor_hz_at_423nT_by_gamma_over_2pi"].items())
    checks.push_back(check("larmor at 423 nT, gamma/2pi = " + g, nu, kOperatingNu, kLarmorTolerance));

  const json& b = s.at("bloch");
  checks.push_back({{"name", "bloch vs steady state"},
                    {"value", b["relative_difference"]},
                    {"tolerance", kBlochTolerance},
                    {"pass", b["relative_difference"].get<double>() <= kBlochTolerance}});

  const json& l = s.at("lockin");
  const double f_true = l["f_true"];
  const double mean = l["combined"]["mean"];
  const double se = l["combined"]["sigma_stat"];
  checks.push_back({{"name", "lock-in recovery"},
                    {"value", mean},
                    {"target", f_true},
                    {"sigma_stat", se},
                    {"pass", std::abs(mean - f_true) <= 3.0 * se + 0.01 * std::abs(f_true)}});

  for (const auto& row : s.at("systematics")["rows"]) {
    if (row["parameter"] == "pivot_z")
      checks.push_back(factor_check("systematics pivot_z", row["magnitude"], kPivotZShift, 2.0));
    if (row["parameter"] == "rod_length")
      checks.push_back(factor_check("systematics rod_length", row["magnitude"], kRodLengthShift, 2.0));
  }

  const json& c = s.at("constrain");
  if (c["interaction"] == "v1213" && c["estimate_source"] == "config")
    checks.push_back(check("bound at 0.25 m", c["bound_at_0_25_m"], kBoundAtQuarterMetre,
                           kBoundTolerance));
  return checks;
}

// ------------------------------------------------------------- manifest

void update_manifest(const fs::path& out, const RunConfig& cfg, const std::string& chash,
                     const std::string& ghash, const std::vector<Stage>& stages,
                     const RunOptions& opt, const std::string& started) {
  const fs::path path = out / "manifest.json";
  json m;
  if (fs::exists(path)) {
    try {
      m = read_json(path);
    } catch (const Error&) {
      m = json::object();
    }
    if (m.value("config_hash", "") != chash) m = json::object();
  }
  m["tool"] = kToolName;
  m["version"] = kToolVersion;
  m["config_hash"] = chash;
  m["geometry_hash"] = ghash;
  m["seed"] = cfg.analysis.seed;
  m["deterministic"] = opt.deterministic;
  m["defaults_applied"] = cfg.defaults_applied;
  if (!m.contains("stages")) m["stages"] = json::object();
  for (const auto& st : stages) {
    json entry = {{"files", st.files}};
    if (!opt.deterministic) {
      entry["started"] = started;
      entry["finished"] = timestamp();
    }
    m["stages"][st.name] = entry;
  }
  if (opt.deterministic) {
    m.erase("updated");
  } else {
    m["updated"] = timestamp();
  }
  write_json(path, m);
}

using StageFn = json (*)(Stage&);

const std::vector<std::pair<std::string, StageFn>>& stage_table() {
  static const std::vector<std::pair<std::string, StageFn>> t = {
      {"simulate-field", simulate_field}, {"amplifier", amplifier}, {"bloch", bloch},
      {"lockin", lockin},                 {"systematics", systematics}, {"constrain", constrain},
  };
  return t;
}

}  // namespace

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, _] : stage_table()) n.push_back(k);
    n.push_back("reproduce-paper");
    return n;
  }();
  return names;
}

int run_subcommand(const std::string& name, RunConfig cfg, const RunOptions& options) {
  if (options.seed) cfg.analysis.seed = *options.seed;
  const fs::path out = options.out_dir.empty() ? fs::path(cfg.output_dir) : options.out_dir;
  fs::create_directories(out);
  const std::string chash = hash_hex(config_hash(cfg));
  const std::string ghash = hash_hex(geometry_hash(cfg));
  const std::string started = options.deterministic ? "" : timestamp();

  std::vector<std::pair<std::string, StageFn>> plan;
  if (name == "reproduce-paper") {
    plan = stage_table();
  } else {
    for (const auto& entry : stage_table())
      if (entry.first == name) plan.push_back(entry);
    if (plan.empty()) throw Error(ErrorKind::configuration, "unknown subcommand '" + name + "'");
  }

  std::vector<Stage> done;
  std::map<std::string, json> summaries;
  for (const auto& [stage_name, fn] : plan) {
    spdlog::info("stage {} starting", stage_name);
    Stage st{stage_name, cfg, out, chash, ghash};
    summaries[stage_name] = fn(st);
    spdlog::info("stage {} wrote {} file(s)", stage_name, st.files.size());
    done.push_back(std::move(st));
  }

  int status = kExitOk;
  if (name == "reproduce-paper") {
    Stage st{"reproduce-paper", cfg, out, chash, ghash};
    json body = {{"stages", json(summaries)}};
    if (options.check) {
      const json checks = paper_checks(summaries);
      bool all = true;
      for (const auto& c : checks) {
        all = all && c["pass"].get<bool>();
        spdlog::info("check {}: {}", c["name"].get<std::string>(), c["pass"].get<bool>() ? "pass" : "FAIL");
      }
      body["checks"] = checks;
      body["all_passed"] = all;
      if (!all) status = kExitCheckFailed;
    }
    st.report("reproduce_paper.json", body);
    done.push_back(std::move(st));
  }
  update_manifest(out, cfg, chash, ghash, done, options, started);
  return status;
}

}  // namespace esl
