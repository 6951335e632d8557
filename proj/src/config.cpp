#include "esl/config.hpp"

#include "esl/errors.hpp"
#include "esl/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace esl {

namespace {

enum class Dim { length, mass, frequency, field, time, angle, asd, gyro, gyro_rad, volt_per_field };

struct Unit {
  std::string_view name;
  Dim dim;
  double factor;
};

constexpr double kDeg = std::numbers::pi / 180.0;

constexpr Unit kUnits[] = {
    {"m", Dim::length, 1.0},         {"cm", Dim::length, 1e-2},
    {"mm", Dim::length, 1e-3},       {"um", Dim::length, 1e-6},
    {"kg", Dim::mass, 1.0},          {"g", Dim::mass, 1e-3},
    {"mg", Dim::mass, 1e-6},         {"Hz", Dim::frequency, 1.0},
    {"mHz", Dim::frequency, 1e-3},   {"kHz", Dim::frequency, 1e3},
    {"MHz", Dim::frequency, 1e6},    {"T", Dim::field, 1.0},
    {"mT", Dim::field, 1e-3},        {"uT", Dim::field, 1e-6},
    {"nT", Dim::field, 1e-9},        {"pT", Dim::field, 1e-12},
    {"fT", Dim::field, 1e-15},       {"s", Dim::time, 1.0},
    {"ms", Dim::time, 1e-3},         {"us", Dim::time, 1e-6},
    {"min", Dim::time, 60.0},        {"h", Dim::time, 3600.0},
    {"rad", Dim::angle, 1.0},        {"deg", Dim::angle, kDeg},
    {"T/sqrtHz", Dim::asd, 1.0},     {"nT/sqrtHz", Dim::asd, 1e-9},
    {"pT/sqrtHz", Dim::asd, 1e-12},  {"fT/sqrtHz", Dim::asd, 1e-15},
    {"Hz/T", Dim::gyro, 1.0},        {"MHz/T", Dim::gyro, 1e6},
    {"Hz/uT", Dim::gyro, 1e6},       {"Hz/nT", Dim::gyro, 1e9},
    {"rad/s/T", Dim::gyro_rad, 1.0}, {"V/T", Dim::volt_per_field, 1.0},
    {"V/nT", Dim::volt_per_field, 1e9}, {"V/pT", Dim::volt_per_field, 1e12},
};

std::string_view dim_name(Dim d) {
  switch (d) {
    case Dim::length: return "length";
    case Dim::mass: return "mass";
    case Dim::frequency: return "frequency";
    case Dim::field: return "magnetic field";
    case Dim::time: return "time";
    case Dim::angle: return "angle";
    case Dim::asd: return "field noise density";
    case Dim::gyro: return "gyromagnetic ratio / 2π";
    case Dim::gyro_rad: return "gyromagnetic ratio";
    case Dim::volt_per_field: return "calibration factor";
  }
  return "?";
}

struct Value {
  std::vector<double> nums;
  std::string word;
  int line = 0;
};

struct Context {
  std::string origin;

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw Error(ErrorKind::parse, fmt::format("{}:{}: {}", origin, line, msg));
  }
};

enum class Kind { quantity, scalar, integer, word, boolean };

using Setter = void (*)(RunConfig&, const Value&, const Context&);

struct Key {
  std::string_view section;
  std::string_view key;
  Kind kind;
  Dim dim;
  int arity;
  Setter set;
};

void positive(const Value& v, const Context& c, std::string_view what) {
  for (double x : v.nums)
    if (!(x > 0.0)) c.fail(v.line, fmt::format("{} must be positive", what));
}

void non_negative(const Value& v, const Context& c, std::string_view what) {
  for (double x : v.nums)
    if (!(x >= 0.0)) c.fail(v.line, fmt::format("{} must be non-negative", what));
}

Vec3 vec(const Value& v) { return {v.nums[0], v.nums[1], v.nums[2]}; }

template <typename F>
auto parse_word(const Value& v, const Context& c, F&& from_string) {
  try {
    return from_string(v.word);
  } catch (const Error& e) {
    c.fail(v.line, e.what());
  }
}

Interaction interaction_word(const Value& v, const Context& c) {
  return parse_word(v, c, [](const std::string& s) { return interaction_from_string(s); });
}

#define ESL_SOURCE_KEYS(SECTION, MEMBER)                                                     \
  Key{SECTION, "edges", Kind::quantity, Dim::length, 3,                                      \
      [](RunConfig& r, const Value& v, const Context& c) {                                   \
        positive(v, c, "edges");                                                             \
        r.MEMBER.source.edges = vec(v);                                                      \
      }},                                                                                    \
      Key{SECTION, "offset", Kind::quantity, Dim::length, 3,                                 \
          [](RunConfig& r, const Value& v, const Context&) { r.MEMBER.source.offset = vec(v); }}, \
      Key{SECTION, "mass", Kind::quantity, Dim::mass, 1,                                     \
          [](RunConfig& r, const Value& v, const Context& c) {                               \
            positive(v, c, "mass");                                                          \
            r.MEMBER.source.mass = v.nums[0];                                                \
          }},                                                                                \
      Key{SECTION, "nucleons", Kind::scalar, Dim::length, 1,                                 \
          [](RunConfig& r, const Value& v, const Context& c) {                               \
            positive(v, c, "nucleons");                                                      \
            r.MEMBER.source.nucleons = v.nums[0];                                            \
          }},                                                                                \
      Key{SECTION, "resolution", Kind::quantity, Dim::length, 1,                             \
          [](RunConfig& r, const Value& v, const Context& c) {                               \
            positive(v, c, "resolution");                                                    \
            r.MEMBER.resolution = v.nums[0];                                                 \
          }}

const std::vector<Key>& schema() {
  static const std::vector<Key> keys = {
      ESL_SOURCE_KEYS("source.bgo", bgo),
      ESL_SOURCE_KEYS("source.rod", rod),

      {"rotation", "pivot", Kind::quantity, Dim::length, 3,
       [](RunConfig& r, const Value& v, const Context&) { r.bgo.rotation.pivot = vec(v); }},
      {"rotation", "normal", Kind::scalar, Dim::length, 3,
       [](RunConfig& r, const Value& v, const Context& c) {
         const Vec3 n = vec(v);
         if (!(n.norm() > 0.0)) c.fail(v.line, "rotation normal must be non-zero");
         r.bgo.rotation.normal = n.normalized();
       }},
      {"rotation", "frequency", Kind::quantity, Dim::frequency, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "rotation frequency");
         r.bgo.rotation.frequency = v.nums[0];
       }},
      {"rotation", "direction", Kind::word, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         r.bgo.rotation.direction =
             parse_word(v, c, [](const std::string& s) { return direction_from_string(s); });
       }},
      {"rotation", "initial_phase", Kind::quantity, Dim::angle, 1,
       [](RunConfig& r, const Value& v, const Context&) { r.bgo.rotation.initial_phase = v.nums[0]; }},
      {"rotation", "samples_per_period", Kind::integer, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         if (v.nums[0] < 64) c.fail(v.line, "samples_per_period must be at least 64");
         r.bgo.samples_per_period = static_cast<std::size_t>(v.nums[0]);
       }},

      {"constants", "gamma_xe", Kind::quantity, Dim::gyro, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "gamma_xe");
         r.gamma_over_2pi = v.nums[0];
       }},

      {"numerics", "cell_model", Kind::word, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         if (v.word == "point") r.bgo.options.cell = CellModel::point;
         else if (v.word == "corners") r.bgo.options.cell = CellModel::corners;
         else c.fail(v.line, "cell_model must be 'point' or 'corners'");
       }},
      {"numerics", "cell_edge", Kind::quantity, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "cell_edge");
         r.bgo.options.cell_edge = v.nums[0];
       }},
      {"numerics", "summation", Kind::word, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         if (v.word == "fast") r.bgo.options.summation = Summation::fast;
         else if (v.word == "compensated") r.bgo.options.summation = Summation::compensated;
         else c.fail(v.line, "summation must be 'fast' or 'compensated'");
       }},
      {"numerics", "workers", Kind::integer, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context&) {
         r.bgo.options.workers = static_cast<unsigned>(v.nums[0]);
       }},

      {"amplifier", "bz0", Kind::quantity, Dim::field, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "bz0");
         r.amplifier.bz0 = v.nums[0];
       }},
      {"amplifier", "kappa0", Kind::scalar, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "kappa0");
         r.amplifier.kappa0 = v.nums[0];
       }},
      {"amplifier", "p0n", Kind::scalar, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         if (!(v.nums[0] > 0.0 && v.nums[0] <= 1.0)) c.fail(v.line, "p0n must be in (0, 1]");
         r.amplifier.p0n = v.nums[0];
       }},
      {"amplifier", "p0e", Kind::scalar, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         if (!(v.nums[0] >= 0.0 && v.nums[0] <= 1.0)) c.fail(v.line, "p0e must be in [0, 1]");
         r.amplifier.p0e = v.nums[0];
       }},
      {"amplifier", "q", Kind::scalar, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         if (!(v.nums[0] >= 1.0)) c.fail(v.line, "slowing-down factor q must be >= 1");
         r.amplifier.q = v.nums[0];
       }},
      {"amplifier", "t1n", Kind::quantity, Dim::time, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "t1n");
         r.amplifier.t1n = v.nums[0];
       }},
      {"amplifier", "t2n", Kind::quantity, Dim::time, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "t2n");
         r.amplifier.t2n = v.nums[0];
       }},
      {"amplifier", "t_e", Kind::quantity, Dim::time, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "t_e");
         r.amplifier.t_e = v.nums[0];
       }},
      {"amplifier", "m0e", Kind::quantity, Dim::field, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         non_negative(v, c, "m0e");
         r.amplifier.m0e = v.nums[0];
       }},
      {"amplifier", "m0n", Kind::quantity, Dim::field, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "m0n");
         r.amplifier.m0n = v.nums[0];
       }},
      {"amplifier", "gamma_e", Kind::quantity, Dim::gyro_rad, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "gamma_e");
         r.amplifier.gamma_e = v.nums[0];
       }},
      {"amplifier", "fwhm", Kind::quantity, Dim::frequency, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "fwhm");
         r.fwhm = v.nums[0];
       }},
      {"amplifier", "eta_target", Kind::scalar, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "eta_target");
         r.eta_target = v.nums[0];
       }},
      {"amplifier", "tune_to_rotation", Kind::boolean, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context&) { r.tune_to_rotation = v.nums[0] != 0.0; }},

      {"calibration", "alpha", Kind::quantity, Dim::volt_per_field, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "alpha");
         r.calib.alpha = v.nums[0];
       }},
      {"calibration", "phi", Kind::quantity, Dim::angle, 1,
       [](RunConfig& r, const Value& v, const Context&) { r.calib.phi = v.nums[0]; }},

      {"analysis", "interaction", Kind::word, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) { r.analysis.tag = interaction_word(v, c); }},
      {"analysis", "lambda", Kind::quantity, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "lambda");
         r.analysis.lambda_ref = v.nums[0];
       }},
      {"analysis", "lambda_min", Kind::quantity, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "lambda_min");
         r.analysis.lambda_min = v.nums[0];
       }},
      {"analysis", "lambda_max", Kind::quantity, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "lambda_max");
         r.analysis.lambda_max = v.nums[0];
       }},
      {"analysis", "lambda_per_decade", Kind::integer, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "lambda_per_decade");
         r.analysis.lambda_per_decade = static_cast<int>(v.nums[0]);
       }},
      {"analysis", "n_harmonics", Kind::integer, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "n_harmonics");
         r.analysis.n_harmonics = static_cast<int>(v.nums[0]);
       }},
      {"analysis", "f_true", Kind::scalar, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context&) { r.analysis.f_true = v.nums[0]; }},
      {"analysis", "noise_asd", Kind::quantity, Dim::asd, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         non_negative(v, c, "noise_asd");
         r.analysis.noise_asd = v.nums[0];
       }},
      {"analysis", "duration", Kind::quantity, Dim::time, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "duration");
         r.analysis.duration = v.nums[0];
       }},
      {"analysis", "window", Kind::quantity, Dim::time, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "window");
         r.analysis.window = v.nums[0];
       }},
      {"analysis", "trace_samples_per_period", Kind::integer, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "trace_samples_per_period");
         r.analysis.trace_samples_per_period = static_cast<std::size_t>(v.nums[0]);
       }},
      {"analysis", "common_mode", Kind::quantity, Dim::field, 1,
       [](RunConfig& r, const Value& v, const Context&) { r.analysis.common_mode = v.nums[0]; }},
      {"analysis", "seed", Kind::integer, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context&) {
         r.analysis.seed = static_cast<std::uint64_t>(v.nums[0]);
       }},
      {"analysis", "trace_cw", Kind::word, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context&) { r.analysis.trace_cw = v.word; }},
      {"analysis", "trace_ccw", Kind::word, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context&) { r.analysis.trace_ccw = v.word; }},
      {"analysis", "confidence", Kind::word, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         r.analysis.policy = parse_word(
             v, c, [](const std::string& s) { return confidence_policy_from_string(s); });
       }},
      {"analysis", "combine", Kind::word, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         if (v.word == "pooled") r.analysis.combine = CombineMode::pooled;
         else if (v.word == "averaged") r.analysis.combine = CombineMode::averaged;
         else c.fail(v.line, "combine must be 'pooled' or 'averaged'");
       }},

      {"estimate", "source", Kind::word, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         if (v.word == "config") r.estimate.source = EstimateSource::config;
         else if (v.word == "lockin") r.estimate.source = EstimateSource::lockin;
         else c.fail(v.line, "estimate source must be 'config' or 'lockin'");
       }},
      {"estimate", "interaction", Kind::word, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) { r.estimate.tag = interaction_word(v, c); }},
      {"estimate", "mean", Kind::scalar, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context&) { r.estimate.mean = v.nums[0]; }},
      {"estimate", "sigma_stat", Kind::scalar, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         non_negative(v, c, "sigma_stat");
         r.estimate.sigma_stat = v.nums[0];
       }},
      {"estimate", "sigma_syst", Kind::scalar, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         non_negative(v, c, "sigma_syst");
         r.estimate.sigma_syst = v.nums[0];
       }},

      {"systematics", "interaction", Kind::word, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         r.systematics.tag = interaction_word(v, c);
       }},
      {"systematics", "lambda", Kind::quantity, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "lambda");
         r.systematics.lambda = v.nums[0];
       }},
      {"systematics", "f_nominal", Kind::scalar, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context&) { r.systematics.f_nominal = v.nums[0]; }},

      {"bloch", "drive", Kind::quantity, Dim::field, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         non_negative(v, c, "drive");
         r.bloch.drive = v.nums[0];
       }},
      {"bloch", "detuning", Kind::quantity, Dim::frequency, 1,
       [](RunConfig& r, const Value& v, const Context&) { r.bloch.detuning = v.nums[0]; }},
      {"bloch", "duration", Kind::quantity, Dim::time, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "duration");
         r.bloch.duration = v.nums[0];
       }},
      {"bloch", "dt", Kind::quantity, Dim::time, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "dt");
         r.bloch.dt = v.nums[0];
       }},
      {"bloch", "record_interval", Kind::quantity, Dim::time, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "record_interval");
         r.bloch.record_interval = v.nums[0];
       }},
      {"bloch", "tail_periods", Kind::integer, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context& c) {
         positive(v, c, "tail_periods");
         r.bloch.tail_periods = static_cast<int>(v.nums[0]);
       }},

      {"output", "dir", Kind::word, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context&) { r.output_dir = v.word; }},
      {"output", "write_traces", Kind::boolean, Dim::length, 1,
       [](RunConfig& r, const Value& v, const Context&) { r.write_traces = v.nums[0] != 0.0; }},
  };
  return keys;
}

#undef ESL_SOURCE_KEYS

Dim systematics_dim(std::string_view parameter) {
  if (parameter == "bgo_mass") return Dim::mass;
  if (parameter == "rotation_frequency") return Dim::frequency;
  if (parameter == "alpha") return Dim::volt_per_field;
  if (parameter == "phi") return Dim::angle;
  return Dim::length;
}

const std::set<std::string_view> kRequiredSections = {"source.bgo", "source.rod", "rotation"};

const std::map<std::string_view, std::vector<std::string_view>> kRequiredKeys = {
    {"source.bgo", {"edges", "offset", "mass", "nucleons"}},
    {"source.rod", {"edges", "mass", "nucleons"}},
    {"rotation", {"pivot", "frequency"}},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

bool to_number(const std::string& tok, double& out) {
  const char* b = tok.data();
  const char* e = b + tok.size();
  if (b != e && *b == '+') ++b;
  const auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

const Unit* find_unit(std::string_view name) {
  for (const auto& u : kUnits)
    if (u.name == name) return &u;
  return nullptr;
}

// Parses `n₁ … n_arity unit` or, for dimensionless kinds, `n₁ … n_arity`.
std::vector<double> parse_numbers(const std::vector<std::string>& toks, int arity, bool with_unit,
                                  Dim dim, int line, const Context& c, std::string_view key) {
  const std::size_t need = static_cast<std::size_t>(arity) + (with_unit ? 1 : 0);
  std::vector<double> nums;
  for (std::size_t i = 0; i < toks.size() && nums.size() < static_cast<std::size_t>(arity); ++i) {
    double x = 0.0;
    if (!to_number(toks[i], x)) break;
    nums.push_back(x);
  }
  if (nums.size() != static_cast<std::size_t>(arity))
    c.fail(line, fmt::format("'{}' expects {} numeric value{}", key, arity, arity > 1 ? "s" : ""));
  if (!with_unit) {
    if (toks.size() != need)
      c.fail(line, fmt::format("'{}' is dimensionless; unexpected '{}'", key, toks[need]));
    return nums;
  }
  if (toks.size() == static_cast<std::size_t>(arity))
    c.fail(line, fmt::format("'{}' is missing a unit ({} expected)", key, dim_name(dim)));
  if (toks.size() != need) c.fail(line, fmt::format("'{}': too many values", key));
  const Unit* u = find_unit(toks.back());
  if (!u) c.fail(line, fmt::format("'{}': unknown unit '{}'", key, toks.back()));
  if (u->dim != dim)
    c.fail(line, fmt::format("'{}': unit '{}' is not a {}", key, u->name, dim_name(dim)));
  for (double& x : nums) x *= u->factor;
  return nums;
}

struct RawEntry {
  std::string value;
  int line = 0;
};

void apply_defaults_record(RunConfig& cfg, const std::set<std::string>& seen) {
  for (const auto& k : schema()) {
    const std::string name = fmt::format("{}.{}", k.section, k.key);
    if (!seen.count(name)) cfg.defaults_applied.push_back(name);
  }
  if (!seen.count("systematics.rows")) cfg.defaults_applied.push_back("systematics.rows");
}

std::vector<PerturbationRow> default_systematics_rows() {
  return {
      {"bgo_mass", 0.02e-3, -0.02e-3},
      {"pivot_x", 0.3e-3, -0.3e-3},
      {"pivot_y", 0.5e-3, -0.5e-3},
      {"pivot_z", 1.1e-3, -1.1e-3},
      {"rod_length", 0.7e-3, -0.7e-3},
      {"alpha", 0.05e9, -0.93e9},
      {"phi", 6.0 * kDeg, -6.0 * kDeg},
  };
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  const Context ctx{origin};
  // Per section, entries in file order (systematics rows keep their order).
  std::map<std::string, std::vector<std::pair<std::string, RawEntry>>> raw;
  const auto has_key = [&](const std::string& sec, const std::string& key) {
    const auto& entries = raw[sec];
    return std::any_of(entries.begin(), entries.end(),
                       [&](const auto& e) { return e.first == key; });
  };
  std::vector<std::string> section_order;
  std::string section;

  std::istringstream in(text);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    const std::string s = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') ctx.fail(line_no, "malformed section header");
      section = trim(std::string_view(s).substr(1, s.size() - 2));
      const bool known = std::any_of(schema().begin(), schema().end(),
                                     [&](const Key& k) { return k.section == section; });
      if (!known) ctx.fail(line_no, fmt::format("unknown section [{}]", section));
      if (raw.count(section)) ctx.fail(line_no, fmt::format("duplicate section [{}]", section));
      raw[section];
      section_order.push_back(section);
      continue;
    }
    const auto colon = s.find(':');
    if (colon == std::string::npos) ctx.fail(line_no, "expected 'key: value'");
    if (section.empty()) ctx.fail(line_no, "key outside of a section");
    const std::string key = trim(std::string_view(s).substr(0, colon));
    const std::string value = trim(std::string_view(s).substr(colon + 1));
    if (key.empty()) ctx.fail(line_no, "empty key");
    if (value.empty()) ctx.fail(line_no, fmt::format("'{}' has no value", key));
    if (has_key(section, key)) ctx.fail(line_no, fmt::format("duplicate key '{}'", key));
    raw[section].emplace_back(key, RawEntry{value, line_no});
  }

  std::vector<std::string> missing;
  for (const auto& req : kRequiredSections)
    if (!raw.count(std::string(req))) missing.push_back(fmt::format("[{}]", req));
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error(ErrorKind::parse,
                fmt::format("{}: missing required section(s): {}", origin, list));
  }
  for (const auto& [sec, keys] : kRequiredKeys)
    for (const auto& k : keys)
      if (!has_key(std::string(sec), std::string(k)))
        throw Error(ErrorKind::parse,
                    fmt::format("{}: [{}] is missing required key '{}'", origin, sec, k));

  RunConfig cfg;
  cfg.bgo.resolution = 2.5e-3;
  cfg.rod.resolution = 7.6e-3;
  cfg.systematics.rows = default_systematics_rows();

  std::set<std::string> seen;
  bool custom_rows = false;
  for (const auto& sec : section_order) {
    for (const auto& [key, entry] : raw[sec]) {
      const auto toks = split_ws(entry.value);
      const auto it = std::find_if(schema().begin(), schema().end(), [&](const Key& k) {
        return k.section == sec && k.key == key;
      });
      if (it == schema().end()) {
        const auto& params = systematics_parameters();
        if (sec == "systematics" &&
            std::find(params.begin(), params.end(), key) != params.end()) {
          if (!custom_rows) cfg.systematics.rows.clear();
          custom_rows = true;
          seen.insert("systematics.rows");
          const auto nums =
              parse_numbers(toks, 2, true, systematics_dim(key), entry.line, ctx, key);
          cfg.systematics.rows.push_back({key, nums[0], nums[1]});
          continue;
        }
        ctx.fail(entry.line, fmt::format("unknown key '{}' in [{}]", key, sec));
      }
      Value v;
      v.line = entry.line;
      switch (it->kind) {
        case Kind::quantity:
          v.nums = parse_numbers(toks, it->arity, true, it->dim, entry.line, ctx, key);
          break;
        case Kind::scalar:
          v.nums = parse_numbers(toks, it->arity, false, it->dim, entry.line, ctx, key);
          break;
        case Kind::integer:
          v.nums = parse_numbers(toks, 1, false, it->dim, entry.line, ctx, key);
          if (v.nums[0] < 0 || v.nums[0] != std::floor(v.nums[0]))
            ctx.fail(entry.line, fmt::format("'{}' must be a non-negative integer", key));
          break;
        case Kind::word:
          if (toks.size() != 1) ctx.fail(entry.line, fmt::format("'{}' expects one word", key));
          v.word = toks[0];
          break;
        case Kind::boolean:
          if (toks.size() != 1 || (toks[0] != "true" && toks[0] != "false"))
            ctx.fail(entry.line, fmt::format("'{}' expects true or false", key));
          v.nums = {toks[0] == "true" ? 1.0 : 0.0};
          break;
      }
      it->set(cfg, v, ctx);
      seen.insert(fmt::format("{}.{}", sec, key));
    }
  }

  // One rigid assembly: the rod shares the BGO's rotation and is centred on
  // the pivot.
  if (!seen.count("source.rod.offset")) cfg.rod.source.offset = Vec3::Zero();
  cfg.bgo.constants = PhysicalConstants::with_gamma(cfg.gamma_over_2pi);
  cfg.rod.constants = cfg.bgo.constants;
  cfg.rod.rotation = cfg.bgo.rotation;
  cfg.rod.samples_per_period = cfg.bgo.samples_per_period;
  cfg.rod.options = cfg.bgo.options;

  if (cfg.analysis.trace_cw.empty() != cfg.analysis.trace_ccw.empty())
    throw Error(ErrorKind::parse,
                fmt::format("{}: trace_cw and trace_ccw must be given together", origin));
  if (cfg.analysis.lambda_max <= cfg.analysis.lambda_min)
    throw Error(ErrorKind::parse, fmt::format("{}: lambda_max must exceed lambda_min", origin));

  try {
    cfg.bgo.source.validate();
    cfg.rod.source.validate();
    cfg.bgo.rotation.validate();
    if (cfg.bgo.resolution > cfg.bgo.source.edges.minCoeff() ||
        cfg.rod.resolution > cfg.rod.source.edges.minCoeff())
      throw Error(ErrorKind::configuration, "resolution exceeds the smallest source edge");
    resolved_amplifier(cfg).validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::parse, fmt::format("{}: {}", origin, e.what()));
  }

  apply_defaults_record(cfg, seen);
  cfg.source_path = origin;
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw Error(ErrorKind::parse, "config file not found: " + path.string());
  return parse_config_text(read_text(path), path.string());
}

AmplifierParams resolved_amplifier(const RunConfig& cfg) {
  AmplifierParams p = cfg.amplifier;
  p.gamma_n = cfg.bgo.constants.gamma_n;
  if (!(p.t2n > 0.0)) p.t2n = t2n_from_fwhm(cfg.fwhm);
  if (cfg.tune_to_rotation) p.bz0 = 2.0 * std::numbers::pi * cfg.bgo.rotation.frequency / p.gamma_n;
  if (!(p.m0n > 0.0)) p.m0n = m0n_for_eta(p, cfg.eta_target);
  return p;
}

namespace {

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

nlohmann::json model_json(const FieldModel& m) {
  return {
      {"edges_m", vec_json(m.source.edges)},
      {"offset_m", vec_json(m.source.offset)},
      {"mass_kg", m.source.mass},
      {"nucleons", m.source.nucleons},
      {"resolution_m", m.resolution},
  };
}

std::string_view combine_name(CombineMode m) {
  return m == CombineMode::pooled ? "pooled" : "averaged";
}

}  // namespace

nlohmann::json config_to_json(const RunConfig& cfg) {
  using nlohmann::json;
  const AmplifierParams amp = resolved_amplifier(cfg);
  json rows = json::array();
  for (const auto& r : cfg.systematics.rows)
    rows.push_back({{"parameter", r.parameter}, {"plus", r.plus}, {"minus", r.minus}});
  return {
      {"geometry",
       {{"bgo", model_json(cfg.bgo)},
        {"rod", model_json(cfg.rod)},
        {"rotation",
         {{"pivot_m", vec_json(cfg.bgo.rotation.pivot)},
          {"normal", vec_json(cfg.bgo.rotation.normal)},
          {"frequency_hz", cfg.bgo.rotation.frequency},
          {"direction", to_string(cfg.bgo.rotation.direction)},
          {"initial_phase_rad", cfg.bgo.rotation.initial_phase},
          {"samples_per_period", cfg.bgo.samples_per_period}}},
        {"gamma_xe_over_2pi_hz_per_t", cfg.gamma_over_2pi},
        {"cell_model", cfg.bgo.options.cell == CellModel::point ? "point" : "corners"},
        {"cell_edge_m", cfg.bgo.options.cell_edge},
        {"summation", cfg.bgo.options.summation == Summation::fast ? "fast" : "compensated"}}},
      {"amplifier",
       {{"bz0_t", amp.bz0},
        {"kappa0", amp.kappa0},
        {"p0n", amp.p0n},
        {"p0e", amp.p0e},
        {"q", amp.q},
        {"t1n_s", amp.t1n},
        {"t2n_s", amp.t2n},
        {"t_e_s", amp.t_e},
        {"m0e_t", amp.m0e},
        {"m0n_t", amp.m0n},
        {"gamma_e", amp.gamma_e},
        {"gamma_n", amp.gamma_n},
        {"fwhm_hz", cfg.fwhm},
        {"eta_target", cfg.eta_target},
        {"tune_to_rotation", cfg.tune_to_rotation}}},
      {"calibration", {{"alpha_v_per_t", cfg.calib.alpha}, {"phi_rad", cfg.calib.phi}}},
      {"analysis",
       {{"interaction", to_string(cfg.analysis.tag)},
        {"lambda_m", cfg.analysis.lambda_ref},
        {"lambda_min_m", cfg.analysis.lambda_min},
        {"lambda_max_m", cfg.analysis.lambda_max},
        {"lambda_per_decade", cfg.analysis.lambda_per_decade},
        {"n_harmonics", cfg.analysis.n_harmonics},
        {"f_true", cfg.analysis.f_true},
        {"noise_asd_t_per_rthz", cfg.analysis.noise_asd},
        {"duration_s", cfg.analysis.duration},
        {"window_s", cfg.analysis.window},
        {"trace_samples_per_period", cfg.analysis.trace_samples_per_period},
        {"common_mode_t", cfg.analysis.common_mode},
        {"seed", cfg.analysis.seed},
        {"trace_cw", cfg.analysis.trace_cw},
        {"trace_ccw", cfg.analysis.trace_ccw},
        {"confidence", to_string(cfg.analysis.policy)},
        {"combine", combine_name(cfg.analysis.combine)}}},
      {"estimate",
       {{"source", cfg.estimate.source == EstimateSource::config ? "config" : "lockin"},
        {"interaction", to_string(cfg.estimate.tag)},
        {"mean", cfg.estimate.mean},
        {"sigma_stat", cfg.estimate.sigma_stat},
        {"sigma_syst", cfg.estimate.sigma_syst}}},
      {"systematics",
       {{"interaction", to_string(cfg.systematics.tag)},
        {"lambda_m", cfg.systematics.lambda},
        {"f_nominal", cfg.systematics.f_nominal},
        {"rows", rows}}},
      {"bloch",
       {{"drive_t", cfg.bloch.drive},
        {"detuning_hz", cfg.bloch.detuning},
        {"duration_s", cfg.bloch.duration},
        {"dt_s", cfg.bloch.dt},
        {"record_interval_s", cfg.bloch.record_interval},
        {"tail_periods", cfg.bloch.tail_periods}}},
  };
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(config_to_json(cfg).dump()); }

std::uint64_t geometry_hash(const RunConfig& cfg) {
  return fnv1a64(config_to_json(cfg)["geometry"].dump());
}

}  // namespace esl
