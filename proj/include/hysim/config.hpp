#pragma once

// Run configuration: one JSON document, every field optional, defaults
// reproduce the reference experiment (eps = 0.1, 10 trajectories, 1e6 s).

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hysim/dynamics.hpp"
#include "hysim/hybrid_core.hpp"
#include "hysim/intensity_analysis.hpp"

namespace hysim {

/// Validation failure naming the offending configuration field.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct RunConfig {
  // "reduced" uses `coefficients`; "physical" derives them from `physical`.
  std::string coefficient_source = "reduced";
  ReducedCoefficients coefficients;
  PhysicalParameters physical;
  Box box;
  State initial_state{2.5, 2.5, 5.0};
  std::optional<Mode> initial_mode;
  double horizon = 1e6;
  double dt = 0.1;
  double epsilon = 0.1;
  std::vector<double> eps_list{0.01, 0.1};
  std::size_t n_traj = 10;
  std::uint64_t seed = 1;

  std::vector<std::string> planes{"t1t2", "t1p"};
  double bin_width = 0.05;
  // Unset means [0, horizon].
  std::optional<TimeInterval> interval;
  Rect bounds_t1t2 = Rect::default_for(Plane::t1t2);
  Rect bounds_t1p = Rect::default_for(Plane::t1p);

  SyncThresholds sync;
  bool detect_period = false;
  double tol_rec = 1e-6;
  std::size_t csv_stride = 1;
  std::string out = "out";
  // Directory with a stochastic manifest to analyse instead of running.
  std::string ensemble_dir;

  /// Horizon presets: "full" (1e6 s) or "desk" (1e5 s, for quick runs).
  /// Either one resets the intensity interval to [0, horizon).
  void apply_preset(const std::string& name) {
    if (name == "full") {
      horizon = 1e6;
    } else if (name == "desk") {
      horizon = 1e5;
    } else {
      throw ConfigError("preset", "unknown preset '" + name + "'");
    }
    interval.reset();
  }

  SystemModel model() const {
    SystemModel m;
    m.coefficients = coefficient_source == "physical" ? reduce_physical(physical) : coefficients;
    m.box = box;
    return m;
  }

  TimeInterval resolved_interval() const { return interval.value_or(TimeInterval{0.0, horizon}); }

  std::vector<GridSettings> grid_settings() const {
    std::vector<GridSettings> out;
    for (const auto& name : planes) {
      const Plane p = parse_plane(name);
      out.push_back({p, p == Plane::t1t2 ? bounds_t1t2 : bounds_t1p, bin_width, bin_width});
    }
    return out;
  }

  EnsembleSpec ensemble(std::size_t threads) const {
    EnsembleSpec s;
    s.model = model();
    s.x0 = initial_state;
    s.m0 = initial_mode;
    s.horizon = horizon;
    s.dt = dt;
    s.n_traj = n_traj;
    s.seed = seed;
    s.threads = threads;
    return s;
  }

  /// Checks every field a run may touch.
  void validate() const {
    if (coefficient_source != "reduced" && coefficient_source != "physical") {
      throw ConfigError("coefficient_source", "must be \"reduced\" or \"physical\"");
    }
    try {
      if (coefficient_source == "physical") {
        physical.validate();
      } else {
        coefficients.validate();
      }
      model().coefficients.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(coefficient_source == "physical" ? "physical" : "coefficients", e.what());
    }
    if (!(box.T1_lower < box.T1_upper)) throw ConfigError("box.T1_bounds", "lower bound must be below upper bound");
    if (!(box.T2_lower < box.T2_upper)) throw ConfigError("box.T2_bounds", "lower bound must be below upper bound");
    if (!initial_state.finite()) throw ConfigError("initial_state", "must be finite");
    if (initial_mode ? !box.contains(initial_state) : !box.interior(initial_state)) {
      throw ConfigError("initial_state", initial_mode ? "temperatures must lie in the box"
                                                      : "temperatures must be interior to the box");
    }
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("horizon", "must be positive and finite");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt", "must be positive");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon", "must be positive");
    const double half_band = 0.5 * std::min(box.width(1), box.width(2));
    if (!(epsilon < half_band)) throw ConfigError("epsilon", "must be below half the temperature band");
    for (double e : eps_list) {
      if (!(e > 0.0) || !(e < half_band)) {
        throw ConfigError("eps_list", "every entry must be positive and below half the temperature band");
      }
    }
    if (n_traj == 0) throw ConfigError("n_traj", "must be at least 1");
    if (planes.empty()) throw ConfigError("grid.planes", "must not be empty");
    for (const auto& p : planes) {
      if (p != "t1t2" && p != "t1p") throw ConfigError("grid.planes", "unknown plane '" + p + "'");
    }
    if (!(bin_width > 0.0)) throw ConfigError("grid.bin_width", "must be positive");
    const auto I = resolved_interval();
    if (!(I.begin >= 0.0) || !(I.end >= I.begin)) throw ConfigError("grid.interval", "must satisfy 0 <= begin <= end");
    if (I.end > horizon) throw ConfigError("grid.interval", "must lie within the horizon");
    for (const auto& r : {bounds_t1t2, bounds_t1p}) {
      if (!(r.x_max > r.x_min) || !(r.y_max > r.y_min)) throw ConfigError("grid.bounds", "empty rectangle");
    }
    if (!(sync.dt_sync > 0.0)) throw ConfigError("sync.dt_sync", "must be positive");
    if (!(sync.p_tol >= 0.0)) throw ConfigError("sync.p_tol", "must be non-negative");
    if (!(tol_rec > 0.0)) throw ConfigError("tol_rec", "must be positive");
    if (csv_stride == 0) throw ConfigError("csv_stride", "must be at least 1");
  }
};

// JSON mapping. Every key is optional on input; output is fully resolved.

inline void to_json(nlohmann::json& j, const ReducedCoefficients& k) {
  j = {{"a", k.a},         {"b", k.b},       {"c", k.c},   {"d", k.d},
       {"e", k.e},         {"alpha", k.alpha}, {"beta", k.beta}, {"valve_gain", k.valve_gain}};
}

inline void from_json(const nlohmann::json& j, ReducedCoefficients& k) {
  k.a = j.value("a", k.a);
  k.b = j.value("b", k.b);
  k.c = j.value("c", k.c);
  k.d = j.value("d", k.d);
  k.e = j.value("e", k.e);
  k.alpha = j.value("alpha", k.alpha);
  k.beta = j.value("beta", k.beta);
  k.valve_gain = j.value("valve_gain", k.valve_gain);
}

#define HYSIM_PHYSICAL_FIELDS(X)                                                               \
  X(UA_wall_ref_max) X(UA_goods_air) X(UA_air_wall) X(T_g0) X(m_dot_0) X(m_dot_r_const)        \
  X(Q_dot_load) X(M_wall) X(C_p_wall) X(grad_rho_suc0) X(V_dot_comp) X(V_suc) X(T_lower)       \
  X(T_upper) X(a_T) X(b_T) X(a_rho) X(b_rho)

inline void to_json(nlohmann::json& j, const PhysicalParameters& p) {
  j = nlohmann::json::object();
#define X(f) j[#f] = p.f;
  HYSIM_PHYSICAL_FIELDS(X)
#undef X
}

inline void from_json(const nlohmann::json& j, PhysicalParameters& p) {
#define X(f) p.f = j.value(#f, p.f);
  HYSIM_PHYSICAL_FIELDS(X)
#undef X
}

#undef HYSIM_PHYSICAL_FIELDS

namespace detail {

inline std::pair<double, double> read_pair(const nlohmann::json& j, const char* field) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(field, "expected [lower, upper]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline nlohmann::json rect_json(const Rect& r) {
  return {{"x", {r.x_min, r.x_max}}, {"y", {r.y_min, r.y_max}}};
}

inline Rect read_rect(const nlohmann::json& j, Rect r, const char* field) {
  if (j.contains("x")) std::tie(r.x_min, r.x_max) = read_pair(j["x"], field);
  if (j.contains("y")) std::tie(r.y_min, r.y_max) = read_pair(j["y"], field);
  return r;
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  json j;
  j["coefficient_source"] = c.coefficient_source;
  j["coefficients"] = c.coefficients;
  j["physical"] = c.physical;
  j["box"] = {{"T1_bounds", {c.box.T1_lower, c.box.T1_upper}}, {"T2_bounds", {c.box.T2_lower, c.box.T2_upper}}};
  j["initial_state"] = {{"T1", c.initial_state.T1}, {"T2", c.initial_state.T2}, {"P", c.initial_state.P}};
  j["initial_mode"] = c.initial_mode ? json{c.initial_mode->delta1, c.initial_mode->delta2} : json(nullptr);
  j["horizon"] = c.horizon;
  j["dt"] = c.dt;
  j["epsilon"] = c.epsilon;
  j["eps_list"] = c.eps_list;
  j["n_traj"] = c.n_traj;
  j["seed"] = c.seed;
  const auto I = c.resolved_interval();
  j["grid"] = {{"planes", c.planes},
               {"bin_width", c.bin_width},
               {"interval", {I.begin, I.end}},
               {"bounds", {{"t1t2", detail::rect_json(c.bounds_t1t2)}, {"t1p", detail::rect_json(c.bounds_t1p)}}}};
  j["sync"] = {{"dt_sync", c.sync.dt_sync}, {"p_ref", c.sync.p_ref}, {"p_tol", c.sync.p_tol}};
  j["detect_period"] = c.detect_period;
  j["tol_rec"] = c.tol_rec;
  j["csv_stride"] = c.csv_stride;
  j["out"] = c.out;
  j["ensemble_dir"] = c.ensemble_dir;
  return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  if (!j.is_object()) throw ConfigError("<root>", "configuration must be a JSON object");
  try {
    c.coefficient_source = j.value("coefficient_source", c.coefficient_source);
    if (j.contains("coefficients")) c.coefficients = j["coefficients"].get<ReducedCoefficients>();
    if (j.contains("physical")) c.physical = j["physical"].get<PhysicalParameters>();
    if (j.contains("box")) {
      const auto& b = j["box"];
      if (b.contains("T1_bounds")) std::tie(c.box.T1_lower, c.box.T1_upper) = detail::read_pair(b["T1_bounds"], "box.T1_bounds");
      if (b.contains("T2_bounds")) std::tie(c.box.T2_lower, c.box.T2_upper) = detail::read_pair(b["T2_bounds"], "box.T2_bounds");
    }
    if (j.contains("initial_state")) {
      const auto& s = j["initial_state"];
      c.initial_state = {s.value("T1", c.initial_state.T1), s.value("T2", c.initial_state.T2),
                         s.value("P", c.initial_state.P)};
    }
    if (j.contains("initial_mode") && !j["initial_mode"].is_null()) {
      const auto& m = j["initial_mode"];
      if (!m.is_array() || m.size() != 2) throw ConfigError("initial_mode", "expected [delta1, delta2]");
      try {
        c.initial_mode = Mode{m[0].get<int>(), m[1].get<int>()};
      } catch (const std::invalid_argument& e) {
        throw ConfigError("initial_mode", e.what());
      }
    }
    c.horizon = j.value("horizon", c.horizon);
    c.dt = j.value("dt", c.dt);
    c.epsilon = j.value("epsilon", c.epsilon);
    if (j.contains("eps_list")) c.eps_list = j["eps_list"].get<std::vector<double>>();
    c.n_traj = j.value("n_traj", c.n_traj);
    c.seed = j.value("seed", c.seed);
    if (j.contains("grid")) {
      const auto& g = j["grid"];
      if (g.contains("planes")) c.planes = g["planes"].get<std::vector<std::string>>();
      c.bin_width = g.value("bin_width", c.bin_width);
      if (g.contains("interval") && !g["interval"].is_null()) {
        const auto [lo, hi] = detail::read_pair(g["interval"], "grid.interval");
        c.interval = TimeInterval{lo, hi};
      }
      if (g.contains("bounds")) {
        const auto& b = g["bounds"];
        if (b.contains("t1t2")) c.bounds_t1t2 = detail::read_rect(b["t1t2"], c.bounds_t1t2, "grid.bounds.t1t2");
        if (b.contains("t1p")) c.bounds_t1p = detail::read_rect(b["t1p"], c.bounds_t1p, "grid.bounds.t1p");
      }
    }
    if (j.contains("sync")) {
      const auto& s = j["sync"];
      c.sync.dt_sync = s.value("dt_sync", c.sync.dt_sync);
      c.sync.p_ref = s.value("p_ref", c.sync.p_ref);
      c.sync.p_tol = s.value("p_tol", c.sync.p_tol);
    }
    c.detect_period = j.value("detect_period", c.detect_period);
    c.tol_rec = j.value("tol_rec", c.tol_rec);
    c.csv_stride = j.value("csv_stride", c.csv_stride);
    c.out = j.value("out", c.out);
    c.ensemble_dir = j.value("ensemble_dir", c.ensemble_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("<json>", e.what());
  }
  return c;
}

}  // namespace hysim
