#include "dkcf/experiment.hpp"

#include "dkcf/detection.hpp"
#include "dkcf/netsim.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace dkcf {

using nlohmann::json;

namespace {

constexpr double kSigmaLocFloor = 0.01;  // m

// CSV buffers, flushed to disk once at the end of a run.
struct RunLogs {
  bool enabled = false;
  fmt::memory_buffer ground_truth;
  fmt::memory_buffer detections;
  fmt::memory_buffer tracks;
  fmt::memory_buffer consensus;
  fmt::memory_buffer errors;

  void header() {
    if (!enabled) return;
    fmt::format_to(std::back_inserter(ground_truth), "tick,entity_kind,entity_id,x,y,heading\n");
    fmt::format_to(std::back_inserter(detections), "tick,robot_id,det_index,x,y,support\n");
    fmt::format_to(std::back_inserter(tracks), "tick,robot_id,track_id,status,x,vx,y,vy,trace_P_pos,stage\n");
    fmt::format_to(std::back_inserter(consensus),
                   "tick,robot_id,track_id,mode,residual,n_neighbors,weight_self,weight_neighbors\n");
    fmt::format_to(std::back_inserter(errors), "tick,robot_id,gt_id,err_m\n");
  }
};

void log_pose(fmt::memory_buffer& buf, Tick tick, std::string_view kind, std::size_t id, const Vec2& p,
              double heading) {
  fmt::format_to(std::back_inserter(buf), "{},{},{},{:.6f},{:.6f},{:.6f}\n", tick, kind, id, p.x(), p.y(), heading);
}

void log_track(fmt::memory_buffer& buf, Tick tick, RobotId robot, const Track& t, std::string_view stage) {
  const Vec4& x = t.estimate.x;
  fmt::format_to(std::back_inserter(buf), "{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6g},{}\n", tick, robot, t.id,
                 to_string(t.status), x(0), x(1), x(2), x(3), t.estimate.position_trace(), stage);
}

struct NeighborState {
  FrameTransform transform;  // neighbour frame -> own frame
  std::deque<std::pair<Tick, Correspondence>> window;
  double sigma_loc = 0.0;  // last reported by the neighbour
};

struct Contribution {
  RobotId sender = 0;
  TrackId remote_id = 0;
  Vec4 x = Vec4::Zero();
  Mat4 P = Mat4::Identity();
  std::optional<Vec2> z;
  Mat2 R = Mat2::Identity();
  double sigma_loc = 0.0;
};

// Each robot tracks in a working frame. In standard mode that is its own
// believed frame; in adaptive mode the working frame is pulled towards the
// neighbour frames in proportion to their weights, so a poorly localized
// robot anchors to steadier neighbours. Messages always carry own-frame data.
class RobotAgent {
 public:
  RobotAgent(RobotId id, const ExperimentConfig& config, const ModelParams& model, const ConsensusParams& params,
             CovarianceSink sink)
      : id_(id),
        config_(config),
        params_(params),
        tracker_(id, model),
        sink_(std::move(sink)),
        anchor_(FrameTransform::identity(id, id)) {
    if (sink_) tracker_.set_covariance_sink(sink_);
  }

  // Detection, prediction, association and update; returns the messages to send.
  std::vector<TrackMessage> local_step(const WorldSnapshot& snap, Tick tick, double sigma_loc, RunLogs& logs) {
    const auto idx = static_cast<std::size_t>(id_);
    auto dets = detect_objects(snap.scans[idx], snap.believed_robot_poses[idx], config_.detection, tick, id_);
    for (std::size_t k = 0; k < dets.size(); ++k) {
      auto& d = dets[k];
      if (logs.enabled) {
        fmt::format_to(std::back_inserter(logs.detections), "{},{},{},{:.6f},{:.6f},{}\n", tick, id_, k,
                       d.centroid.x(), d.centroid.y(), d.support);
      }
      d.centroid = anchor_.apply(d.centroid);
    }
    tracker_.predict();
    tracker_.update(dets, tick);

    const FrameTransform back = anchor_.inverse();
    local_view_.clear();
    std::vector<TrackMessage> out;
    for (const auto& t : tracker_.tracks()) {
      if (logs.enabled) log_track(logs.tracks, tick, id_, t, "local");
      if (t.status != TrackStatus::confirmed) continue;
      local_view_.push_back({t.id, t.estimate.position()});
      TrackMessage m;
      m.sender = id_;
      m.track_id = t.id;
      m.x = back.apply_state(t.estimate.x);
      m.P = back.apply_covariance(t.estimate.P);
      if (t.last_update_tick == tick && t.last_measurement) m.z = back.apply(*t.last_measurement);
      m.R = tracker_.model().R;
      m.sigma_loc = sigma_loc;
      m.sent_tick = tick;
      out.push_back(std::move(m));
    }
    return out;
  }

  const std::vector<TrackPoint>& local_view() const { return local_view_; }

  // Frame alignment, consensus and mistrack removal. Returns the global view.
  std::vector<TrackPoint> fuse(const std::vector<TrackMessage>& inbox, Tick tick, double sigma_loc, RunLogs& logs) {
    // Newest message per (sender, track).
    std::map<RobotId, std::map<TrackId, TrackMessage>> latest;
    for (const auto& m : inbox) {
      auto& per_sender = latest[m.sender];
      auto it = per_sender.find(m.track_id);
      if (it == per_sender.end() || m.sent_tick >= it->second.sent_tick) per_sender[m.track_id] = m;
    }
    const bool adaptive = params_.mode == ConsensusMode::adaptive;

    std::vector<TrackView> views;
    for (const auto& t : tracker_.tracks()) {
      if (t.status == TrackStatus::confirmed) views.push_back({t.id, t.estimate.x});
    }

    // Cross-robot matching in the working frame, then alignment refresh.
    std::map<RobotId, std::vector<std::pair<TrackId, TrackId>>> pairs_by_sender;
    const FrameTransform back = anchor_.inverse();
    for (const auto& [sender, msgs] : latest) {
      auto ns_it = neighbors_.find(sender);
      if (ns_it == neighbors_.end()) {
        ns_it = neighbors_.emplace(sender, NeighborState{FrameTransform::identity(sender, id_), {}, 0.0}).first;
      }
      NeighborState& ns = ns_it->second;
      ns.sigma_loc = msgs.begin()->second.sigma_loc;

      const FrameTransform to_work = compose(anchor_, ns.transform);
      std::vector<TrackView> remote;
      for (const auto& [tid, m] : msgs) remote.push_back({tid, to_work.apply_state(m.x)});
      auto pairs = match_cross_robot_tracks(views, remote, params_);

      std::map<TrackId, Vec4> local_x;
      for (const auto& v : views) local_x[v.id] = v.x;
      for (const auto& [lid, rid] : pairs) {
        const Vec4& lx = local_x.at(lid);
        const Vec4& rx = msgs.at(rid).x;
        ns.window.push_back({tick, {back.apply(Vec2(lx(0), lx(2))), Vec2(rx(0), rx(2))}});
      }
      while (!ns.window.empty() && ns.window.front().first <= tick - params_.alignment_window) ns.window.pop_front();
      if (static_cast<int>(ns.window.size()) >= params_.min_landmarks) {
        std::vector<Correspondence> corrs;
        corrs.reserve(ns.window.size());
        for (const auto& [t, c] : ns.window) corrs.push_back(c);
        try {
          ns.transform = estimate_frame_alignment(corrs, sender, id_, params_.min_landmarks);
        } catch (const DegenerateGeometryError&) {
          // keep the previous estimate
        }
      }
      pairs_by_sender[sender] = std::move(pairs);
    }

    if (adaptive && !neighbors_.empty()) reanchor(sigma_loc);

    // Robot-level weights of this tick's senders, for field-of-view extensions.
    std::vector<double> robot_sigmas{sigma_loc};
    for (const auto& [sender, msgs] : latest) robot_sigmas.push_back(neighbors_.at(sender).sigma_loc);
    const std::vector<double> robot_w = adaptive_weights(robot_sigmas);
    const double accept_floor = 1.0 / static_cast<double>(robot_w.size());

    std::map<TrackId, std::vector<Contribution>> contributions;
    std::vector<TrackPoint> extensions;
    std::size_t sender_idx = 0;
    for (const auto& [sender, msgs] : latest) {
      const double w_sender = robot_w[++sender_idx];
      const FrameTransform carry = compose(anchor_, neighbors_.at(sender).transform);
      std::set<TrackId> matched_remote;
      for (const auto& [lid, rid] : pairs_by_sender.at(sender)) {
        const TrackMessage& m = msgs.at(rid);
        matched_remote.insert(rid);
        Contribution c;
        c.sender = sender;
        c.remote_id = rid;
        c.x = carry.apply_state(m.x);
        c.P = carry.apply_covariance(m.P);
        if (sink_) sink_("transport", c.P);
        if (m.z) c.z = carry.apply(*m.z);
        c.R = carry.apply_measurement_covariance(m.R);
        c.sigma_loc = m.sigma_loc;
        contributions[lid].push_back(std::move(c));
      }
      // Adaptive mode drops extensions from neighbours weighted below an equal share.
      if (!adaptive || w_sender >= accept_floor) {
        for (const auto& [tid, m] : msgs) {
          if (matched_remote.count(tid)) continue;
          const Vec4 x = carry.apply_state(m.x);
          extensions.push_back({tid, Vec2(x(0), x(2))});
        }
      }
    }

    const ModelParams& model = tracker_.model();
    std::map<TrackId, double> residuals;
    for (auto& t : tracker_.mutable_tracks()) {
      auto it = contributions.find(t.id);
      if (it == contributions.end()) continue;
      const auto& contribs = it->second;

      InformationPair local_info;
      if (t.last_update_tick == tick && t.last_measurement) {
        local_info = information_pair(model.H, *t.last_measurement, model.R);
      }
      std::vector<InformationPair> nb_info;
      std::vector<Vec4> nb_x;
      std::vector<double> sigmas{uncertainty_sigma(sigma_loc, t.estimate.P)};
      for (const auto& c : contribs) {
        if (c.z) nb_info.push_back(information_pair(model.H, *c.z, c.R));
        nb_x.push_back(c.x);
        sigmas.push_back(uncertainty_sigma(c.sigma_loc, c.P));
      }
      const InformationPair agg = aggregate_information(local_info, nb_info);

      const double equal_share = 1.0 / static_cast<double>(contribs.size() + 1);
      double weight_self = equal_share;
      std::vector<double> weights(contribs.size(), equal_share);
      ConsensusUpdate upd;
      if (adaptive) {
        const auto w = adaptive_weights(sigmas);
        weight_self = w[0];
        weights.assign(w.begin() + 1, w.end());
        upd = dkcf_update_adaptive(t.estimate, agg, nb_x, weights, params_);
      } else {
        upd = dkcf_update_standard(t.estimate, agg, nb_x, params_);
      }
      const double residual = (upd.estimate.position() - t.estimate.position()).norm();
      residuals[t.id] = residual;
      if (logs.enabled) {
        auto out = std::back_inserter(logs.consensus);
        fmt::format_to(out, "{},{},{},{},{:.6f},{},{:.6f}", tick, id_, t.id, to_string(params_.mode), residual,
                       contribs.size(), weight_self);
        for (double w : weights) fmt::format_to(out, ",{:.6f}", w);
        fmt::format_to(out, "\n");
      }
      if (sink_) {
        sink_("consensus_gain", upd.gain);
        sink_("consensus_propagated", upd.estimate.P);
      }
      // The fused posterior is (x_hat, M); the next prediction turns M into
      // A M A^T + Q.
      t.estimate = {upd.estimate.x, upd.gain};
    }

    mistrack_filter(tracker_.mutable_tracks(), residuals, params_, monitor_);
    for (const auto& t : tracker_.tracks()) {
      if (t.status == TrackStatus::dead) monitor_.forget(t.id);
    }
    tracker_.purge_dead();

    std::vector<TrackPoint> global;
    for (const auto& t : tracker_.tracks()) {
      if (logs.enabled && contributions.count(t.id)) log_track(logs.tracks, tick, id_, t, "fused");
      if (t.status == TrackStatus::confirmed) global.push_back({t.id, t.estimate.position()});
    }
    global.insert(global.end(), extensions.begin(), extensions.end());
    return global;
  }

 private:
  // Working frame = weighted blend of the own frame (identity) and each
  // neighbour frame. Existing tracks are carried over to the new frame.
  void reanchor(double sigma_loc) {
    std::vector<double> sigmas{sigma_loc};
    for (const auto& [id, ns] : neighbors_) sigmas.push_back(ns.sigma_loc);
    const auto w = adaptive_weights(sigmas);
    FrameTransform next = FrameTransform::identity(id_, id_);
    std::size_t k = 0;
    for (const auto& [id, ns] : neighbors_) {
      const FrameTransform inv = ns.transform.inverse();  // own frame -> neighbour frame
      const double wk = w[++k];
      next.rotation += wk * inv.rotation;
      next.translation += wk * inv.translation;
    }
    const FrameTransform delta = compose(next, anchor_.inverse());
    for (auto& t : tracker_.mutable_tracks()) {
      t.estimate = delta.apply(t.estimate);
      if (t.last_measurement) t.last_measurement = delta.apply(*t.last_measurement);
    }
    for (auto& v : local_view_) v.position = delta.apply(v.position);
    anchor_ = next;
  }

  RobotId id_;
  const ExperimentConfig& config_;
  ConsensusParams params_;
  LocalTracker tracker_;
  CovarianceSink sink_;
  FrameTransform anchor_;  // own believed frame -> working frame
  MistrackMonitor monitor_;
  std::map<RobotId, NeighborState> neighbors_;
  std::vector<TrackPoint> local_view_;
};

std::optional<int> common_latency(const std::vector<LinkSpec>& links) {
  if (links.empty()) return std::nullopt;
  for (const auto& l : links) {
    if (l.base_latency != links.front().base_latency) return std::nullopt;
  }
  return links.front().base_latency;
}

void write_buffer(const std::filesystem::path& path, const fmt::memory_buffer& buf) {
  write_text_file(path, std::string(buf.data(), buf.size()));
}

std::optional<double> try_mota(const std::vector<FrameScore>& frames) {
  try {
    return mota(frames);
  } catch (const UndefinedMetricError&) {
    return std::nullopt;
  }
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json optional_json(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

json score_json(const std::vector<FrameScore>& frames, const std::optional<double>& m) {
  const FrameScore s = sum_frames(frames);
  return {{"mota", optional_json(m)},
          {"gt_count", s.gt_count},
          {"matches", s.matches},
          {"misses", s.misses},
          {"false_positives", s.false_positives},
          {"id_switches", s.id_switches},
          {"mean_match_dist", s.matches > 0 ? json(s.sum_match_dist / s.matches) : json(nullptr)}};
}

// Summary rows for one cell: per robot and scope over every run with a defined MOTA.
json cell_summary(const std::vector<const RunReport*>& runs) {
  std::map<std::pair<RobotId, int>, std::vector<double>> values;  // scope 0 local, 1 global
  for (const RunReport* r : runs) {
    for (const auto& rob : r->robots) {
      if (rob.mota_local) values[{rob.robot, 0}].push_back(*rob.mota_local);
      if (rob.mota_global) values[{rob.robot, 1}].push_back(*rob.mota_global);
    }
  }
  json rows = json::array();
  for (const auto& [key, v] : values) {
    const SummaryStats st = summarize(v);
    rows.push_back({{"robot_id", key.first},
                    {"scope", key.second == 0 ? "local" : "global"},
                    {"n", st.n},
                    {"mean", st.mean},
                    {"median", st.median},
                    {"std", st.std},
                    {"min", st.min},
                    {"max", st.max}});
  }
  return rows;
}

json cell_json(ConsensusMode mode, std::optional<int> latency, double drift, const std::vector<const RunReport*>& runs) {
  json seeds = json::array();
  for (const RunReport* r : runs) seeds.push_back(r->seed);
  return {{"mode", std::string(to_string(mode))},
          {"latency", optional_json(latency)},
          {"drift_scale", drift},
          {"runs", runs.size()},
          {"seeds", seeds},
          {"summary", cell_summary(runs)}};
}

std::string format_drift(double d) { return fmt::format("{:g}", d); }

}  // namespace

double localization_sigma(const RobotSpec& robot, Tick tick) {
  const auto& d = robot.drift;
  const double t = static_cast<double>(std::max<Tick>(tick, 0));
  const double lever = 0.5 * robot.lidar.max_range;
  const double var = 0.5 * d.initial_bias.squaredNorm() + d.bias_walk_std * d.bias_walk_std * t +
                     d.heading_walk_std * d.heading_walk_std * t * lever * lever + kSigmaLocFloor * kSigmaLocFloor;
  return std::sqrt(var);
}

RunReport run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  if (auto issues = validate(config); !issues.empty()) throw ValidationError(std::move(issues));

  const ModelParams model = make_model_params(config);
  const ConsensusParams cparams = make_consensus_params(config);
  World world(config.world);
  Network network(config.links, derive_seed(config.world.rng_seed, {0x7E7}));

  const std::size_t n_robots = config.world.robots.size();
  std::vector<RobotAgent> agents;
  agents.reserve(n_robots);
  for (std::size_t i = 0; i < n_robots; ++i) {
    agents.emplace_back(static_cast<RobotId>(i), config, model, cparams, options.covariance_sink);
  }

  RunLogs logs;
  logs.enabled = options.output_dir.has_value();
  logs.header();

  RunReport report;
  report.mode = config.consensus.mode;
  report.seed = config.world.rng_seed;
  report.latency = common_latency(config.links);
  report.drift_scale = options.drift_scale;
  report.robots.resize(n_robots);
  std::vector<MatchHistory> local_hist(n_robots), global_hist(n_robots);
  for (std::size_t i = 0; i < n_robots; ++i) report.robots[i].robot = static_cast<RobotId>(i);

  while (!world.finished()) {
    const WorldSnapshot snap = world.step();
    const Tick tick = snap.tick;

    if (logs.enabled) {
      for (std::size_t k = 0; k < snap.true_target_positions.size(); ++k) {
        log_pose(logs.ground_truth, tick, "target", k, snap.true_target_positions[k], 0.0);
      }
      for (std::size_t k = 0; k < n_robots; ++k) {
        log_pose(logs.ground_truth, tick, "robot", k, snap.true_robot_poses[k].position,
                 snap.true_robot_poses[k].heading);
        log_pose(logs.ground_truth, tick, "robot_believed", k, snap.believed_robot_poses[k].position,
                 snap.believed_robot_poses[k].heading);
      }
    }

    std::vector<double> sigmas(n_robots);
    for (std::size_t i = 0; i < n_robots; ++i) sigmas[i] = localization_sigma(config.world.robots[i], tick);

    for (std::size_t i = 0; i < n_robots; ++i) {
      for (const auto& m : agents[i].local_step(snap, tick, sigmas[i], logs)) network.broadcast(m, tick);
    }
    for (std::size_t i = 0; i < n_robots; ++i) {
      const auto inbox = network.poll(static_cast<RobotId>(i), tick);
      const auto global = agents[i].fuse(inbox, tick, sigmas[i], logs);

      std::vector<FrameMatch> matches;
      auto& rob = report.robots[i];
      rob.local_frames.push_back(score_frame(tick, snap.true_target_positions, agents[i].local_view(),
                                             config.evaluation.match_radius, local_hist[i], &matches));
      rob.global_frames.push_back(
          score_frame(tick, snap.true_target_positions, global, config.evaluation.match_radius, global_hist[i]));
      if (logs.enabled) {
        for (const auto& fm : matches) {
          fmt::format_to(std::back_inserter(logs.errors), "{},{},{},{:.6f}\n", tick, i, fm.gt_index, fm.distance);
        }
      }
    }
  }

  report.ticks = world.tick();
  for (auto& rob : report.robots) {
    rob.mota_local = try_mota(rob.local_frames);
    rob.mota_global = try_mota(rob.global_frames);
  }
  for (std::size_t l = 0; l < config.links.size(); ++l) report.links.push_back({config.links[l], network.counters(l)});
  report.in_flight_at_end = network.in_flight();

  if (options.output_dir) {
    const auto& dir = *options.output_dir;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error(fmt::format("{}: cannot create directory: {}", dir.string(), ec.message()));
    write_text_file(dir / "config.json", to_json(config).dump(2) + "\n");
    write_buffer(dir / "ground_truth.csv", logs.ground_truth);
    write_buffer(dir / "detections.csv", logs.detections);
    write_buffer(dir / "tracks.csv", logs.tracks);
    write_buffer(dir / "consensus.csv", logs.consensus);
    write_buffer(dir / "errors.csv", logs.errors);
    const json rj = run_report_json(report);
    write_text_file(dir / "report.json", rj.dump(2) + "\n");
    write_text_file(dir / "report.txt", render_report_table(rj));
  }
  return report;
}

ExperimentConfig cell_config(const ExperimentConfig& base, ConsensusMode mode, std::uint64_t seed,
                             std::optional<int> latency, std::optional<double> drift_scale) {
  ExperimentConfig c = base;
  c.sweep.reset();
  c.consensus.mode = mode;
  c.world.rng_seed = seed;
  if (latency) {
    for (auto& l : c.links) l.base_latency = *latency;
  }
  if (drift_scale) {
    for (auto& r : c.world.robots) {
      r.drift.bias_walk_std *= *drift_scale;
      r.drift.heading_walk_std *= *drift_scale;
    }
  }
  return c;
}

std::vector<SweepRun> expand_sweep(const SweepSpec& sweep) {
  std::vector<std::optional<int>> lats;
  for (int l : sweep.latencies) lats.emplace_back(l);
  if (lats.empty()) lats.emplace_back(std::nullopt);
  std::vector<std::optional<double>> drifts;
  for (double d : sweep.drift_scales) drifts.emplace_back(d);
  if (drifts.empty()) drifts.emplace_back(std::nullopt);

  std::vector<SweepRun> runs;
  for (auto mode : sweep.modes) {
    for (const auto& lat : lats) {
      for (const auto& drift : drifts) {
        for (auto seed : sweep.seeds) {
          SweepRun r{mode, seed, lat, drift, {}};
          r.dir_name = fmt::format("{}_lat{}_drift{}_seed{}", to_string(mode), lat ? fmt::format("{}", *lat) : "cfg",
                                   drift ? format_drift(*drift) : "1", seed);
          runs.push_back(std::move(r));
        }
      }
    }
  }
  return runs;
}

SweepResult run_sweep(const ExperimentConfig& config, SweepExecution execution,
                      const std::optional<std::filesystem::path>& output_dir) {
  if (auto issues = validate(config); !issues.empty()) throw ValidationError(std::move(issues));
  if (!config.sweep) throw ValidationError({"sweep: missing sweep section"});

  SweepResult result;
  result.runs = expand_sweep(*config.sweep);
  result.reports.resize(result.runs.size());
  std::vector<std::exception_ptr> errors(result.runs.size());

  if (output_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*output_dir, ec);
    if (ec) throw std::runtime_error(fmt::format("{}: cannot create directory: {}", output_dir->string(), ec.message()));
  }

  const auto n = static_cast<std::ptrdiff_t>(result.runs.size());
  const bool parallel = execution == SweepExecution::parallel;
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& run = result.runs[static_cast<std::size_t>(i)];
    try {
      RunOptions opts;
      if (output_dir) opts.output_dir = *output_dir / run.dir_name;
      opts.drift_scale = run.drift_scale.value_or(1.0);
      result.reports[static_cast<std::size_t>(i)] =
          run_experiment(cell_config(config, run.mode, run.seed, run.latency, run.drift_scale), opts);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  if (output_dir) {
    write_text_file(*output_dir / "config.json", to_json(config).dump(2) + "\n");
    const json rj = sweep_report_json(result);
    write_text_file(*output_dir / "report.json", rj.dump(2) + "\n");
    write_text_file(*output_dir / "report.txt", render_report_table(rj));
  }
  return result;
}

json run_report_json(const RunReport& report) {
  json robots = json::array();
  for (const auto& r : report.robots) {
    robots.push_back({{"robot_id", r.robot},
                      {"local", score_json(r.local_frames, r.mota_local)},
                      {"global", score_json(r.global_frames, r.mota_global)}});
  }
  json links = json::array();
  for (const auto& l : report.links) {
    links.push_back({{"from", l.link.from},
                     {"to", l.link.to},
                     {"base_latency", l.link.base_latency},
                     {"sent", l.counters.sent},
                     {"delivered", l.counters.delivered},
                     {"dropped", l.counters.dropped}});
  }
  return {{"kind", "run"},
          {"mode", std::string(to_string(report.mode))},
          {"seed", report.seed},
          {"ticks", report.ticks},
          {"latency", optional_json(report.latency)},
          {"drift_scale", report.drift_scale},
          {"robots", robots},
          {"links", links},
          {"in_flight_at_end", report.in_flight_at_end},
          {"cells", json::array({cell_json(report.mode, report.latency, report.drift_scale, {&report})})}};
}

json sweep_report_json(const SweepResult& result) {
  json runs = json::array();
  // Cells in first-appearance order of the expanded grid.
  std::vector<std::tuple<ConsensusMode, std::optional<int>, double>> order;
  std::map<std::tuple<int, int, double>, std::vector<const RunReport*>> groups;
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    const auto& run = result.runs[i];
    const auto& rep = result.reports[i];
    json robots = json::array();
    for (const auto& r : rep.robots) {
      robots.push_back({{"robot_id", r.robot},
                        {"mota_local", optional_json(r.mota_local)},
                        {"mota_global", optional_json(r.mota_global)}});
    }
    runs.push_back({{"dir", run.dir_name},
                    {"mode", std::string(to_string(run.mode))},
                    {"seed", run.seed},
                    {"latency", optional_json(rep.latency)},
                    {"drift_scale", rep.drift_scale},
                    {"robots", robots}});
    const auto key = std::make_tuple(static_cast<int>(run.mode), rep.latency.value_or(-1), rep.drift_scale);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.emplace_back(run.mode, rep.latency, rep.drift_scale);
    it->second.push_back(&rep);
  }
  json cells = json::array();
  for (const auto& [mode, lat, drift] : order) {
    cells.push_back(cell_json(mode, lat, drift, groups.at({static_cast<int>(mode), lat.value_or(-1), drift})));
  }
  return {{"kind", "sweep"}, {"runs", runs}, {"cells", cells}};
}

namespace {

struct CellKey {
  std::optional<int> latency;
  double drift = 1.0;
  auto tie() const { return std::make_tuple(latency.value_or(-1), drift); }
  bool operator<(const CellKey& o) const { return tie() < o.tie(); }
};

std::optional<int> json_latency(const json& v) {
  return v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
}

std::string range_text(double lo, double hi) { return fmt::format("[{:.3f}, {:.3f}]", lo, hi); }

}  // namespace

std::string render_report_table(const json& report) {
  // (latency, drift) -> robot -> scope -> mode -> summary row
  std::map<CellKey, std::map<int, std::map<std::string, std::map<std::string, json>>>> table;
  for (const auto& cell : report.at("cells")) {
    const CellKey key{json_latency(cell.at("latency")), cell.at("drift_scale").get<double>()};
    auto& slot = table[key];
    for (const auto& row : cell.at("summary")) {
      slot[row.at("robot_id").get<int>()][row.at("scope").get<std::string>()][cell.at("mode").get<std::string>()] = row;
    }
  }

  std::string out;
  auto line = [&out](std::string_view robot, std::string_view method, std::string_view mean, std::string_view median,
                     std::string_view sd, std::string_view range) {
    out += fmt::format("{:<9} {:<20} {:>8} {:>8} {:>8} {:>18}\n", robot, method, mean, median, sd, range);
  };
  for (const auto& [key, robots] : table) {
    out += fmt::format("latency={} drift_scale={}\n", key.latency ? fmt::format("{}", *key.latency) : "mixed",
                       format_drift(key.drift));
    line("Robot", "Method", "Mean", "Median", "Std Dev", "Range");
    for (const auto& [robot, scopes] : robots) {
      const std::string rlabel = fmt::format("Robot {}", robot);
      for (const char* scope : {"local", "global"}) {
        auto sit = scopes.find(scope);
        if (sit == scopes.end()) continue;
        const auto& modes = sit->second;
        const std::string scope_label = std::string(scope) == "local" ? "Local" : "Global";
        for (const char* mode : {"standard", "adaptive"}) {
          auto mit = modes.find(mode);
          if (mit == modes.end()) continue;
          const json& r = mit->second;
          const std::string mlabel =
              fmt::format("{} ({})", std::string(mode) == "standard" ? "Standard" : "Adaptive", scope_label);
          line(rlabel, mlabel, fmt::format("{:.3f}", r.at("mean").get<double>()),
               fmt::format("{:.3f}", r.at("median").get<double>()), fmt::format("{:.3f}", r.at("std").get<double>()),
               range_text(r.at("min").get<double>(), r.at("max").get<double>()));
        }
        if (modes.count("standard") && modes.count("adaptive")) {
          const double d = modes.at("adaptive").at("mean").get<double>() - modes.at("standard").at("mean").get<double>();
          line(rlabel, "Delta Mean", fmt::format("{:+.3f}", d), "", "", "");
        }
      }
    }
    out += "\n";
  }
  return out;
}

std::vector<DeltaRow> compare_reports(const json& a, const json& b) {
  using Key = std::tuple<int, double, int, std::string>;
  auto flatten = [](const json& rep, std::string_view name) {
    if (!rep.is_object() || !rep.contains("cells")) {
      throw std::runtime_error(fmt::format("report {}: no cells section", name));
    }
    std::map<Key, std::pair<std::optional<int>, double>> out;
    for (const auto& cell : rep.at("cells")) {
      const auto lat = json_latency(cell.at("latency"));
      const double drift = cell.at("drift_scale").get<double>();
      for (const auto& row : cell.at("summary")) {
        const Key k{lat.value_or(-1), drift, row.at("robot_id").get<int>(), row.at("scope").get<std::string>()};
        if (!out.emplace(k, std::make_pair(lat, row.at("mean").get<double>())).second) {
          throw std::runtime_error(
              fmt::format("report {}: several cells share latency/drift/robot/scope; compare single-mode reports", name));
        }
      }
    }
    return out;
  };
  const auto fa = flatten(a, "A");
  const auto fb = flatten(b, "B");
  if (fa.size() != fb.size()) throw std::runtime_error("reports differ in robot/cell structure");
  std::vector<DeltaRow> rows;
  for (const auto& [k, va] : fa) {
    auto it = fb.find(k);
    if (it == fb.end()) throw std::runtime_error("reports differ in robot/cell structure");
    DeltaRow r;
    r.latency = va.first;
    r.drift_scale = std::get<1>(k);
    r.robot = std::get<2>(k);
    r.scope = std::get<3>(k);
    r.mean_a = va.second;
    r.mean_b = it->second.second;
    r.delta = r.mean_b - r.mean_a;
    rows.push_back(std::move(r));
  }
  return rows;
}

json delta_json(const std::vector<DeltaRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"latency", optional_json(r.latency)},
                   {"drift_scale", r.drift_scale},
                   {"robot_id", r.robot},
                   {"scope", r.scope},
                   {"mean_a", r.mean_a},
                   {"mean_b", r.mean_b},
                   {"delta", r.delta}});
  }
  return {{"kind", "compare"}, {"rows", out}};
}

std::string render_delta_table(const std::vector<DeltaRow>& rows) {
  std::string out = fmt::format("{:>8} {:>6} {:<9} {:<7} {:>8} {:>8} {:>10}\n", "latency", "drift", "Robot", "Scope",
                                "Mean A", "Mean B", "Delta Mean");
  for (const auto& r : rows) {
    out += fmt::format("{:>8} {:>6} {:<9} {:<7} {:>8.3f} {:>8.3f} {:>+10.3f}\n",
                       r.latency ? fmt::format("{}", *r.latency) : "-", format_drift(r.drift_scale),
                       fmt::format("Robot {}", r.robot), r.scope, r.mean_a, r.mean_b, r.delta);
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("{}: cannot open for writing", path.string()));
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error(fmt::format("{}: write failed", path.string()));
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("{}: cannot open", path.string()));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace dkcf
