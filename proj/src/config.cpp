#include "dkcf/config.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dkcf {

using nlohmann::json;

namespace {

// Strict object reader: records type errors and unknown keys as issues
// instead of throwing, so one pass reports everything.
class Reader {
 public:
  Reader(const json& obj, std::string path, std::vector<std::string>& issues)
      : obj_(obj), path_(std::move(path)), issues_(issues) {
    if (!obj_.is_object()) {
      issues_.push_back(fmt::format("{}: expected an object", label()));
      ok_ = false;
    }
  }

  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  ~Reader() {
    if (!ok_) return;
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) issues_.push_back(fmt::format("{}: unknown key", at(it.key())));
    }
  }

  bool ok() const { return ok_; }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  // Returns the child if present; marks it as known either way.
  const json* child(const std::string& key, bool required = false) {
    seen_.insert(key);
    if (!ok_) return nullptr;
    auto it = obj_.find(key);
    if (it == obj_.end()) {
      if (required) issues_.push_back(fmt::format("{}: missing required key", at(key)));
      return nullptr;
    }
    return &*it;
  }

  void number(const std::string& key, double& out, bool required = false) {
    if (const json* v = child(key, required)) {
      if (v->is_number()) out = v->get<double>();
      else issues_.push_back(fmt::format("{}: expected a number", at(key)));
    }
  }

  void integer(const std::string& key, int& out, bool required = false) {
    if (const json* v = child(key, required)) {
      if (v->is_number_integer()) out = v->get<int>();
      else issues_.push_back(fmt::format("{}: expected an integer", at(key)));
    }
  }

  void unsigned64(const std::string& key, std::uint64_t& out, bool required = false) {
    if (const json* v = child(key, required)) {
      if (v->is_number_unsigned() || (v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
        out = v->get<std::uint64_t>();
      } else {
        issues_.push_back(fmt::format("{}: expected a non-negative integer", at(key)));
      }
    }
  }

  void string(const std::string& key, std::string& out, bool required = false) {
    if (const json* v = child(key, required)) {
      if (v->is_string()) out = v->get<std::string>();
      else issues_.push_back(fmt::format("{}: expected a string", at(key)));
    }
  }

  void point(const std::string& key, Vec2& out, bool required = false) {
    if (const json* v = child(key, required)) parse_point(*v, at(key), out, issues_);
  }

  static bool parse_point(const json& v, const std::string& where, Vec2& out, std::vector<std::string>& issues) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      issues.push_back(fmt::format("{}: expected [x, y]", where));
      return false;
    }
    out = {v[0].get<double>(), v[1].get<double>()};
    return true;
  }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  const json& obj_;
  std::string path_;
  std::vector<std::string>& issues_;
  std::set<std::string> seen_;
  bool ok_ = true;
};

void read_lidar(const json& j, const std::string& path, LidarSpec& out, std::vector<std::string>& issues) {
  Reader r(j, path, issues);
  r.integer("num_beams", out.num_beams);
  r.number("fov", out.fov);
  r.number("max_range", out.max_range);
  r.number("range_noise_std", out.range_noise_std);
}

void read_drift(const json& j, const std::string& path, DriftSpec& out, std::vector<std::string>& issues) {
  Reader r(j, path, issues);
  r.number("bias_walk_std", out.bias_walk_std);
  r.number("heading_walk_std", out.heading_walk_std);
  r.point("initial_bias", out.initial_bias);
}

void read_robot(const json& j, const std::string& path, RobotSpec& out, std::vector<std::string>& issues) {
  Reader r(j, path, issues);
  if (const json* wps = r.child("waypoints", true)) {
    if (!wps->is_array()) {
      issues.push_back(fmt::format("{}: expected a list of points", r.at("waypoints")));
    } else {
      for (std::size_t i = 0; i < wps->size(); ++i) {
        Vec2 p;
        if (Reader::parse_point((*wps)[i], fmt::format("{}[{}]", r.at("waypoints"), i), p, issues)) {
          out.waypoints.push_back(p);
        }
      }
    }
  }
  r.number("speed", out.speed);
  if (const json* l = r.child("lidar")) read_lidar(*l, r.at("lidar"), out.lidar, issues);
  if (const json* d = r.child("drift")) read_drift(*d, r.at("drift"), out.drift, issues);
}

void read_target(const json& j, const std::string& path, TargetSpec& out, std::vector<std::string>& issues) {
  Reader r(j, path, issues);
  r.number("radius", out.radius);
  r.point("start", out.start, true);
  r.point("heading", out.heading);
  r.number("speed", out.speed);
  if (const json* p = r.child("path", true)) {
    Reader pr(*p, r.at("path"), issues);
    pr.point("a", out.path.a, true);
    pr.point("b", out.path.b, true);
  }
}

template <typename Fn>
void read_list(const json* list, const std::string& path, std::vector<std::string>& issues, Fn&& fn) {
  if (!list) return;
  if (!list->is_array()) {
    issues.push_back(fmt::format("{}: expected a list", path));
    return;
  }
  for (std::size_t i = 0; i < list->size(); ++i) fn((*list)[i], fmt::format("{}[{}]", path, i));
}

void read_world(const json& j, WorldConfig& out, std::vector<std::string>& issues) {
  Reader r(j, "world", issues);
  if (const json* a = r.child("arena_bounds", true)) {
    Reader ar(*a, r.at("arena_bounds"), issues);
    ar.point("min", out.arena_bounds.min, true);
    ar.point("max", out.arena_bounds.max, true);
  }
  read_list(r.child("targets"), r.at("targets"), issues, [&](const json& t, const std::string& p) {
    out.targets.emplace_back();
    read_target(t, p, out.targets.back(), issues);
  });
  read_list(r.child("robots", true), r.at("robots"), issues, [&](const json& t, const std::string& p) {
    out.robots.emplace_back();
    read_robot(t, p, out.robots.back(), issues);
  });
  r.number("tick_period", out.tick_period);
  r.number("duration", out.duration, true);
  r.unsigned64("rng_seed", out.rng_seed);
}

void read_model(const json& j, ModelSettings& out, std::vector<std::string>& issues) {
  Reader r(j, "model", issues);
  r.number("process_noise_intensity", out.process_noise_intensity);
  r.number("measurement_noise_std", out.measurement_noise_std);
  r.number("gate_threshold", out.gate_threshold);
  r.number("init_pos_var", out.init_pos_var);
  r.number("init_vel_var", out.init_vel_var);
  r.integer("max_misses", out.max_misses);
  r.integer("confirm_hits", out.confirm_hits);
}

void read_detection(const json& j, DbscanParams& out, std::vector<std::string>& issues) {
  Reader r(j, "detection", issues);
  r.number("epsilon", out.epsilon);
  r.integer("min_pts", out.min_pts);
  r.number("max_cluster_extent", out.max_cluster_extent);
}

void read_consensus(const json& j, ConsensusSettings& out, std::vector<std::string>& issues) {
  Reader r(j, "consensus", issues);
  std::string mode(to_string(out.mode));
  r.string("mode", mode);
  if (auto m = parse_consensus_mode(mode)) out.mode = *m;
  else issues.push_back(fmt::format("consensus.mode: '{}' is not standard|adaptive", mode));
  std::string norm(to_string(out.norm));
  r.string("gain_norm", norm);
  if (auto n = parse_gain_norm(norm)) out.norm = *n;
  else issues.push_back(fmt::format("consensus.gain_norm: '{}' is not frobenius|spectral", norm));
  r.number("match_dist_threshold", out.match_dist_threshold);
  r.number("match_velocity_tolerance", out.match_velocity_tolerance);
  r.number("mistrack_residual_threshold", out.mistrack_residual_threshold);
  r.integer("mistrack_patience", out.mistrack_patience);
  r.integer("min_landmarks", out.min_landmarks);
  r.integer("alignment_window", out.alignment_window);
}

void read_link(const json& j, const std::string& path, LinkSpec& out, std::vector<std::string>& issues) {
  Reader r(j, path, issues);
  r.integer("from", out.from, true);
  r.integer("to", out.to, true);
  r.integer("base_latency", out.base_latency);
  r.number("jitter_std", out.jitter_std);
  r.number("drop_prob", out.drop_prob);
}

void read_sweep(const json& j, SweepSpec& out, std::vector<std::string>& issues) {
  Reader r(j, "sweep", issues);
  read_list(r.child("modes", true), r.at("modes"), issues, [&](const json& v, const std::string& p) {
    auto m = v.is_string() ? parse_consensus_mode(v.get<std::string>()) : std::nullopt;
    if (m) out.modes.push_back(*m);
    else issues.push_back(fmt::format("{}: expected standard|adaptive", p));
  });
  read_list(r.child("seeds", true), r.at("seeds"), issues, [&](const json& v, const std::string& p) {
    if (v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      out.seeds.push_back(v.get<std::uint64_t>());
    } else {
      issues.push_back(fmt::format("{}: expected a non-negative integer", p));
    }
  });
  read_list(r.child("latencies"), r.at("latencies"), issues, [&](const json& v, const std::string& p) {
    if (v.is_number_integer()) out.latencies.push_back(v.get<int>());
    else issues.push_back(fmt::format("{}: expected an integer tick count", p));
  });
  read_list(r.child("drift_scales"), r.at("drift_scales"), issues, [&](const json& v, const std::string& p) {
    if (v.is_number()) out.drift_scales.push_back(v.get<double>());
    else issues.push_back(fmt::format("{}: expected a number", p));
  });
  // Present-but-empty lists are caught by validate().
  if (const json* l = j.is_object() && j.contains("latencies") ? &j["latencies"] : nullptr; l && l->empty()) {
    issues.push_back("sweep.latencies: must be non-empty when present");
  }
  if (const json* d = j.is_object() && j.contains("drift_scales") ? &j["drift_scales"] : nullptr; d && d->empty()) {
    issues.push_back("sweep.drift_scales: must be non-empty when present");
  }
}

json point_json(const Vec2& p) { return json::array({p.x(), p.y()}); }

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

}  // namespace

ModelParams make_model_params(const ExperimentConfig& config) {
  ModelParams m = make_cv_model(config.world.tick_period, config.model.process_noise_intensity,
                                config.model.measurement_noise_std);
  m.gate_threshold = config.model.gate_threshold;
  m.init_pos_var = config.model.init_pos_var;
  m.init_vel_var = config.model.init_vel_var;
  m.max_misses = config.model.max_misses;
  m.confirm_hits = config.model.confirm_hits;
  return m;
}

ConsensusParams make_consensus_params(const ExperimentConfig& config) {
  const ModelParams m = make_model_params(config);
  const auto& c = config.consensus;
  ConsensusParams p;
  p.mode = c.mode;
  p.norm = c.norm;
  p.A = m.F;
  p.Q = m.Q;
  p.match_dist_threshold = c.match_dist_threshold;
  p.match_velocity_tolerance = c.match_velocity_tolerance;
  p.mistrack_residual_threshold = c.mistrack_residual_threshold;
  p.mistrack_patience = c.mistrack_patience;
  p.min_landmarks = c.min_landmarks;
  p.alignment_window = c.alignment_window;
  return p;
}

std::vector<std::string> validate(const ExperimentConfig& config) {
  std::vector<std::string> issues;
  issues = config.world.validate();

  const auto& d = config.detection;
  if (!(d.epsilon > 0.0) || !std::isfinite(d.epsilon)) issues.emplace_back("detection.epsilon: must be > 0");
  if (d.min_pts < 1) issues.emplace_back("detection.min_pts: must be >= 1");
  if (!(d.max_cluster_extent > 0.0)) issues.emplace_back("detection.max_cluster_extent: must be > 0");

  const auto& m = config.model;
  if (!finite_nonneg(m.process_noise_intensity)) issues.emplace_back("model.process_noise_intensity: must be >= 0");
  if (!(m.measurement_noise_std > 0.0) || !std::isfinite(m.measurement_noise_std)) {
    issues.emplace_back("model.measurement_noise_std: must be > 0");
  }
  if (!(m.gate_threshold > 0.0)) issues.emplace_back("model.gate_threshold: must be > 0");
  if (!(m.init_pos_var > 0.0)) issues.emplace_back("model.init_pos_var: must be > 0");
  if (!(m.init_vel_var > 0.0)) issues.emplace_back("model.init_vel_var: must be > 0");
  if (m.max_misses < 0) issues.emplace_back("model.max_misses: must be >= 0");
  if (m.confirm_hits < 1) issues.emplace_back("model.confirm_hits: must be >= 1");

  const auto& c = config.consensus;
  if (!(c.match_dist_threshold > 0.0)) issues.emplace_back("consensus.match_dist_threshold: must be > 0");
  if (!finite_nonneg(c.match_velocity_tolerance)) issues.emplace_back("consensus.match_velocity_tolerance: must be >= 0");
  if (!(c.mistrack_residual_threshold > 0.0)) issues.emplace_back("consensus.mistrack_residual_threshold: must be > 0");
  if (c.mistrack_patience < 1) issues.emplace_back("consensus.mistrack_patience: must be >= 1");
  if (c.min_landmarks < 2) issues.emplace_back("consensus.min_landmarks: must be >= 2");
  if (c.alignment_window < 1) issues.emplace_back("consensus.alignment_window: must be >= 1");

  const int n_robots = static_cast<int>(config.world.robots.size());
  std::set<std::pair<int, int>> seen_links;
  for (std::size_t i = 0; i < config.links.size(); ++i) {
    const auto& l = config.links[i];
    const std::string p = fmt::format("links[{}]", i);
    if (l.from < 0 || l.from >= n_robots) issues.push_back(fmt::format("{}.from: robot {} does not exist", p, l.from));
    if (l.to < 0 || l.to >= n_robots) issues.push_back(fmt::format("{}.to: robot {} does not exist", p, l.to));
    if (l.from == l.to) issues.push_back(fmt::format("{}: self-link", p));
    if (!seen_links.insert({l.from, l.to}).second) issues.push_back(fmt::format("{}: duplicate link", p));
    if (l.base_latency < 0) issues.push_back(fmt::format("{}.base_latency: must be >= 0", p));
    if (!finite_nonneg(l.jitter_std)) issues.push_back(fmt::format("{}.jitter_std: must be >= 0", p));
    if (!(l.drop_prob >= 0.0 && l.drop_prob <= 1.0)) issues.push_back(fmt::format("{}.drop_prob: must be in [0, 1]", p));
  }

  if (!finite_nonneg(config.evaluation.match_radius)) issues.emplace_back("evaluation.match_radius: must be >= 0");

  if (config.sweep) {
    const auto& s = *config.sweep;
    if (s.modes.empty()) issues.emplace_back("sweep.modes: must be non-empty");
    if (s.seeds.empty()) issues.emplace_back("sweep.seeds: must be non-empty");
    for (std::size_t i = 0; i < s.latencies.size(); ++i) {
      if (s.latencies[i] < 0) issues.push_back(fmt::format("sweep.latencies[{}]: must be >= 0", i));
    }
    for (std::size_t i = 0; i < s.drift_scales.size(); ++i) {
      if (!finite_nonneg(s.drift_scales[i])) issues.push_back(fmt::format("sweep.drift_scales[{}]: must be >= 0", i));
    }
  }
  if (config.output_dir.empty()) issues.emplace_back("output_dir: must be non-empty");
  return issues;
}

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig cfg;
  std::vector<std::string> issues;
  {
    Reader r(doc, "", issues);
    if (const json* w = r.child("world", true)) read_world(*w, cfg.world, issues);
    if (const json* d = r.child("detection")) read_detection(*d, cfg.detection, issues);
    if (const json* m = r.child("model")) read_model(*m, cfg.model, issues);
    if (const json* c = r.child("consensus")) read_consensus(*c, cfg.consensus, issues);
    read_list(r.child("links"), "links", issues, [&](const json& l, const std::string& p) {
      cfg.links.emplace_back();
      read_link(l, p, cfg.links.back(), issues);
    });
    if (const json* e = r.child("evaluation")) {
      Reader er(*e, "evaluation", issues);
      er.number("match_radius", cfg.evaluation.match_radius);
    }
    if (const json* s = r.child("sweep")) {
      cfg.sweep.emplace();
      read_sweep(*s, *cfg.sweep, issues);
    }
    r.string("output_dir", cfg.output_dir);
  }
  for (auto& s : validate(cfg)) issues.push_back(std::move(s));
  if (!issues.empty()) throw ValidationError(std::move(issues));
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError({fmt::format("{}: cannot open config file", path.string())});
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError({fmt::format("{}: {}", path.string(), e.what())});
  }
  try {
    return parse_config(doc);
  } catch (const ValidationError& e) {
    std::vector<std::string> issues;
    for (const auto& s : e.issues()) issues.push_back(fmt::format("{}: {}", path.string(), s));
    throw ValidationError(std::move(issues));
  }
}

json to_json(const ExperimentConfig& c) {
  json world;
  world["arena_bounds"] = {{"min", point_json(c.world.arena_bounds.min)}, {"max", point_json(c.world.arena_bounds.max)}};
  world["targets"] = json::array();
  for (const auto& t : c.world.targets) {
    world["targets"].push_back({{"radius", t.radius},
                                {"start", point_json(t.start)},
                                {"heading", point_json(t.heading)},
                                {"speed", t.speed},
                                {"path", {{"a", point_json(t.path.a)}, {"b", point_json(t.path.b)}}}});
  }
  world["robots"] = json::array();
  for (const auto& r : c.world.robots) {
    json wps = json::array();
    for (const auto& w : r.waypoints) wps.push_back(point_json(w));
    world["robots"].push_back({{"waypoints", wps},
                               {"speed", r.speed},
                               {"lidar",
                                {{"num_beams", r.lidar.num_beams},
                                 {"fov", r.lidar.fov},
                                 {"max_range", r.lidar.max_range},
                                 {"range_noise_std", r.lidar.range_noise_std}}},
                               {"drift",
                                {{"bias_walk_std", r.drift.bias_walk_std},
                                 {"heading_walk_std", r.drift.heading_walk_std},
                                 {"initial_bias", point_json(r.drift.initial_bias)}}}});
  }
  world["tick_period"] = c.world.tick_period;
  world["duration"] = c.world.duration;
  world["rng_seed"] = c.world.rng_seed;

  json out;
  out["world"] = world;
  out["detection"] = {{"epsilon", c.detection.epsilon},
                      {"min_pts", c.detection.min_pts},
                      {"max_cluster_extent", c.detection.max_cluster_extent}};
  out["model"] = {{"process_noise_intensity", c.model.process_noise_intensity},
                  {"measurement_noise_std", c.model.measurement_noise_std},
                  {"gate_threshold", c.model.gate_threshold},
                  {"init_pos_var", c.model.init_pos_var},
                  {"init_vel_var", c.model.init_vel_var},
                  {"max_misses", c.model.max_misses},
                  {"confirm_hits", c.model.confirm_hits}};
  const auto& cs = c.consensus;
  out["consensus"] = {{"mode", std::string(to_string(cs.mode))},
                      {"gain_norm", std::string(to_string(cs.norm))},
                      {"match_dist_threshold", cs.match_dist_threshold},
                      {"match_velocity_tolerance", cs.match_velocity_tolerance},
                      {"mistrack_residual_threshold", cs.mistrack_residual_threshold},
                      {"mistrack_patience", cs.mistrack_patience},
                      {"min_landmarks", cs.min_landmarks},
                      {"alignment_window", cs.alignment_window}};
  out["links"] = json::array();
  for (const auto& l : c.links) {
    out["links"].push_back({{"from", l.from},
                            {"to", l.to},
                            {"base_latency", l.base_latency},
                            {"jitter_std", l.jitter_std},
                            {"drop_prob", l.drop_prob}});
  }
  out["evaluation"] = {{"match_radius", c.evaluation.match_radius}};
  if (c.sweep) {
    json modes = json::array();
    for (auto m : c.sweep->modes) modes.push_back(std::string(to_string(m)));
    json s = {{"modes", modes}, {"seeds", c.sweep->seeds}};
    if (!c.sweep->latencies.empty()) s["latencies"] = c.sweep->latencies;
    if (!c.sweep->drift_scales.empty()) s["drift_scales"] = c.sweep->drift_scales;
    out["sweep"] = s;
  }
  out["output_dir"] = c.output_dir;
  return out;
}

}  // namespace dkcf
