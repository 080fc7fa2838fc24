#pragma once

// One inspection episode: scene, robot, maps, face ledgers, and the
// semantic schedule, stepped at the control rate.

#include "srli/agent.hpp"
#include "srli/config.hpp"
#include "srli/mapping.hpp"
#include "srli/reward.hpp"
#include "srli/scene.hpp"
#include "srli/sensors.hpp"

#include <chrono>
#include <limits>
#include <memory>

namespace srli {

enum class Termination : std::uint8_t { running = 0, crash = 1, timeout = 2 };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::running: return "running";
    case Termination::crash: return "crash";
    case Termination::timeout: return "timeout";
  }
  return "?";
}

struct ScheduleEntry {
  int label = 1;
  double budget = std::numeric_limits<double>::infinity();  // seconds after the timer starts
};

inline std::string format_schedule(const std::vector<ScheduleEntry>& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i)
    out += (i ? "," : "") + std::to_string(s[i].label) + ":" + format_double(s[i].budget);
  return out;
}

// "1:50,2:50" or "1,2" (no budget: never switches away).
inline std::vector<ScheduleEntry> parse_schedule(const std::string& text) {
  std::vector<ScheduleEntry> out;
  if (KeyValueConfig::trim(text).empty()) return out;
  for (const auto& item : KeyValueConfig::split(text, ',')) {
    ScheduleEntry e;
    const auto colon = item.find(':');
    e.label = KeyValueConfig::convert<int>(KeyValueConfig::trim(item.substr(0, colon)));
    if (colon != std::string::npos) {
      const std::string b = KeyValueConfig::trim(item.substr(colon + 1));
      e.budget = (b == "inf") ? std::numeric_limits<double>::infinity() : KeyValueConfig::convert<double>(b);
    }
    if (e.label <= 0 || !(e.budget > 0)) throw InvalidArgument("bad schedule entry '" + item + "'");
    out.push_back(e);
  }
  return out;
}

struct EpisodeConfig {
  double episode_length = 90.0;
  RoomSpec room;
  double d_ref = 1.0;  // overrides reward.d_ref
  std::array<double, 4> w_max{1.0, 1.0, 1.0, 1.0};
  NoiseParams noise;
  RewardParams reward;
  DynamicsParams dynamics;
  CameraModel camera;
  LidarModel lidar;
  double voxel_resolution = 0.1;
  int local_grid_size = kLocalGridSize;
  std::vector<ScheduleEntry> semantic_schedule;  // empty: every semantic label in order, no budget
  double schedule_margin = 0.2;
  double spawn_clearance = 0.5;
  int spawn_attempts = 10000;
  std::uint64_t seed = 0;

  RewardParams reward_params() const {
    RewardParams r = reward;
    r.d_ref = d_ref;
    return r;
  }

  int max_steps() const { return static_cast<int>(std::lround(episode_length / dynamics.control_dt)); }

  void validate() const {
    if (!(episode_length > 0)) throw InvalidArgument("episode_length must be positive");
    room.validate();
    noise.validate();
    reward_params().validate();
    dynamics.validate();
    camera.validate();
    lidar.validate();
    for (double w : w_max)
      if (!(w >= 0)) throw InvalidArgument("w_max entries must be non-negative");
    if (!(voxel_resolution > 0)) throw InvalidArgument("voxel_resolution must be positive");
    if (local_grid_size < 1 || local_grid_size % 2 == 0) throw InvalidArgument("local_grid_size must be odd");
    if (!(schedule_margin >= 0)) throw InvalidArgument("schedule margin must be non-negative");
    if (!(spawn_clearance > dynamics.collision_radius))
      throw InvalidArgument("spawn_clearance must exceed the collision radius");
  }
};

inline std::string episode_config_text(const EpisodeConfig& c) {
  ConfigWriter w;
  w.put("episode_length", c.episode_length);
  w.put("seed", c.seed);
  w.put("d_ref", c.d_ref);
  w.put_list("w_max", c.w_max);
  w.put("room.length", c.room.length);
  w.put("room.width", c.room.width);
  w.put("room.height", c.room.height);
  w.put("room.obstacle_count", c.room.obstacle_count);
  w.put("room.semantic_count", c.room.semantic_count);
  w.put("room.semantic_shape", std::string(c.room.semantic_shape == SemanticShape::cuboid ? "cuboid" : "cylinder"));
  w.put("room.semantic_min_size", c.room.semantic_min_size);
  w.put("room.semantic_max_size", c.room.semantic_max_size);
  w.put("noise.wrench_std", c.noise.wrench_std);
  w.put("noise.wrench_std_angular", c.noise.wrench_std_angular);
  w.put("noise.position_halfwidth", c.noise.position_halfwidth);
  w.put("noise.orientation_halfwidth", c.noise.orientation_halfwidth);
  w.put("noise.velocity_halfwidth", c.noise.velocity_halfwidth);
  w.put("noise.angular_velocity_halfwidth", c.noise.angular_velocity_halfwidth);
  w.put("noise.depth_k_sigma", c.noise.depth_k_sigma);
  w.put("noise.mask_dropout", c.noise.mask_dropout);
  w.put("reward.alpha", c.reward.alpha);
  w.put("reward.beta", c.reward.beta);
  w.put("reward.gamma", c.reward.gamma);
  w.put("reward.delta", c.reward.delta);
  w.put("reward.d_coll", c.reward.d_coll);
  w.put("reward.focus_fraction", c.reward.focus_fraction);
  w.put("reward.mode", std::string(c.reward.mode == FaceRewardMode::increment ? "increment" : "literal"));
  w.put("dynamics.tau_v", c.dynamics.tau_v);
  w.put("dynamics.tau_w", c.dynamics.tau_w);
  w.put("dynamics.physics_dt", c.dynamics.physics_dt);
  w.put("dynamics.control_dt", c.dynamics.control_dt);
  w.put("dynamics.collision_radius", c.dynamics.collision_radius);
  w.put("camera.h_fov_deg", c.camera.h_fov_deg);
  w.put("camera.v_fov_deg", c.camera.v_fov_deg);
  w.put("camera.width", c.camera.width);
  w.put("camera.height", c.camera.height);
  w.put("camera.max_range", c.camera.max_range);
  w.put("lidar.h_fov_deg", c.lidar.h_fov_deg);
  w.put("lidar.v_fov_deg", c.lidar.v_fov_deg);
  w.put("lidar.h_rays", c.lidar.h_rays);
  w.put("lidar.v_rays", c.lidar.v_rays);
  w.put("lidar.max_range", c.lidar.max_range);
  w.put("map.resolution", c.voxel_resolution);
  w.put("map.local_size", c.local_grid_size);
  w.put("schedule", format_schedule(c.semantic_schedule));
  w.put("schedule.margin", c.schedule_margin);
  w.put("spawn.clearance", c.spawn_clearance);
  w.put("spawn.attempts", c.spawn_attempts);
  return w.str();
}

// Applies every episode key present in `kv`; other keys are left for the caller.
inline void apply_episode_config(KeyValueConfig& kv, EpisodeConfig& c) {
  kv.read("episode_length", c.episode_length);
  kv.read("seed", c.seed);
  kv.read("d_ref", c.d_ref);
  kv.read("w_max", c.w_max);
  kv.read("room.length", c.room.length);
  kv.read("room.width", c.room.width);
  kv.read("room.height", c.room.height);
  kv.read("room.obstacle_count", c.room.obstacle_count);
  kv.read("room.semantic_count", c.room.semantic_count);
  kv.read_with("room.semantic_shape", c.room.semantic_shape, [](const std::string& s) {
    if (s == "cuboid") return SemanticShape::cuboid;
    if (s == "cylinder") return SemanticShape::cylinder;
    throw InvalidArgument("expected cuboid or cylinder");
  });
  kv.read("room.semantic_min_size", c.room.semantic_min_size);
  kv.read("room.semantic_max_size", c.room.semantic_max_size);
  kv.read("noise.wrench_std", c.noise.wrench_std);
  kv.read("noise.wrench_std_angular", c.noise.wrench_std_angular);
  kv.read("noise.position_halfwidth", c.noise.position_halfwidth);
  kv.read("noise.orientation_halfwidth", c.noise.orientation_halfwidth);
  kv.read("noise.velocity_halfwidth", c.noise.velocity_halfwidth);
  kv.read("noise.angular_velocity_halfwidth", c.noise.angular_velocity_halfwidth);
  kv.read("noise.depth_k_sigma", c.noise.depth_k_sigma);
  kv.read("noise.mask_dropout", c.noise.mask_dropout);
  kv.read("reward.alpha", c.reward.alpha);
  kv.read("reward.beta", c.reward.beta);
  kv.read("reward.gamma", c.reward.gamma);
  kv.read("reward.delta", c.reward.delta);
  kv.read("reward.d_coll", c.reward.d_coll);
  kv.read("reward.focus_fraction", c.reward.focus_fraction);
  kv.read_with("reward.mode", c.reward.mode, [](const std::string& s) {
    if (s == "increment") return FaceRewardMode::increment;
    if (s == "literal") return FaceRewardMode::literal;
    throw InvalidArgument("expected increment or literal");
  });
  kv.read("dynamics.tau_v", c.dynamics.tau_v);
  kv.read("dynamics.tau_w", c.dynamics.tau_w);
  kv.read("dynamics.physics_dt", c.dynamics.physics_dt);
  kv.read("dynamics.control_dt", c.dynamics.control_dt);
  kv.read("dynamics.collision_radius", c.dynamics.collision_radius);
  kv.read("camera.h_fov_deg", c.camera.h_fov_deg);
  kv.read("camera.v_fov_deg", c.camera.v_fov_deg);
  kv.read("camera.width", c.camera.width);
  kv.read("camera.height", c.camera.height);
  kv.read("camera.max_range", c.camera.max_range);
  kv.read("lidar.h_fov_deg", c.lidar.h_fov_deg);
  kv.read("lidar.v_fov_deg", c.lidar.v_fov_deg);
  kv.read("lidar.h_rays", c.lidar.h_rays);
  kv.read("lidar.v_rays", c.lidar.v_rays);
  kv.read("lidar.max_range", c.lidar.max_range);
  kv.read("map.resolution", c.voxel_resolution);
  kv.read("map.local_size", c.local_grid_size);
  kv.read_with("schedule", c.semantic_schedule, parse_schedule);
  kv.read("schedule.margin", c.schedule_margin);
  kv.read("spawn.clearance", c.spawn_clearance);
  kv.read("spawn.attempts", c.spawn_attempts);
}

inline EpisodeConfig parse_episode_config(const std::string& text, const std::string& source = "<text>") {
  KeyValueConfig kv = KeyValueConfig::parse_text(text, source);
  EpisodeConfig c;
  apply_episode_config(kv, c);
  kv.reject_unused();
  return c;
}

// Tracks which semantic is under inspection. Each label's timer starts on
// the first frame where a mask pixel lies inside the inspection band; once
// its budget has elapsed the next label becomes active.
class SemanticScheduler {
 public:
  struct Event {
    int label = 0;
    double trigger_time = std::numeric_limits<double>::quiet_NaN();
    double switch_time = std::numeric_limits<double>::quiet_NaN();
  };

  SemanticScheduler() = default;
  SemanticScheduler(std::vector<ScheduleEntry> entries, double d_ref, double margin)
      : entries_(std::move(entries)), d_ref_(d_ref), margin_(margin) {
    if (entries_.empty()) throw InvalidArgument("semantic schedule must not be empty");
    for (const auto& e : entries_) events_.push_back(Event{e.label});
  }

  int active_label() const { return entries_.empty() ? 0 : entries_[index_].label; }
  std::size_t active_index() const { return index_; }
  bool finished() const { return finished_; }
  bool timer_started() const { return !std::isnan(events_[index_].trigger_time); }
  const std::vector<Event>& events() const { return events_; }
  const std::vector<ScheduleEntry>& entries() const { return entries_; }

  // Returns true when this frame switched the active label.
  bool advance(const SegMask& mask, const DepthImage& depth, double t) {
    if (entries_.empty() || finished_) return false;
    Event& ev = events_[index_];
    if (std::isnan(ev.trigger_time)) {
      for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask.data[i]) continue;
        const double d = depth.data[i];
        if (d > 0 && std::abs(d - d_ref_) <= margin_) {
          ev.trigger_time = t;
          break;
        }
      }
      if (std::isnan(ev.trigger_time)) return false;
    }
    // Small slack absorbs accumulated rounding in t.
    if (t + 1e-9 < ev.trigger_time + entries_[index_].budget) return false;
    ev.switch_time = t;
    if (index_ + 1 < entries_.size()) {
      ++index_;
    } else {
      finished_ = true;
    }
    return true;
  }

 private:
  std::vector<ScheduleEntry> entries_;
  std::vector<Event> events_;
  std::size_t index_ = 0;
  bool finished_ = false;
  double d_ref_ = 1.0;
  double margin_ = 0.2;
};

struct Observation {
  std::array<float, 13> state{};
  std::array<float, 4> prev_action{};
  int depth_width = 0;
  int depth_height = 0;
  std::vector<float> masked_depth;    // row-major, 0 wherever the mask is 0
  int grid_size = 0;
  std::vector<std::int8_t> local_occ;  // (i*n + j)*n + k; i forward, j left, k up
  std::vector<float> local_svs;
};

struct StepInfo {
  int step = 0;
  double time = 0.0;
  double coverage = 0.0;  // coverage functional of the active label's ledger
  int active_label = 0;
  std::uint64_t visits = 0;  // N_t used for the search term
  bool label_switched = false;  // active label changed on this step
  bool dynamics_fault = false;
  int clamped = 0;
};

struct StepResult {
  Observation observation;
  RewardBreakdown reward;
  Termination termination = Termination::running;
  StepInfo info;
};

// Wall-clock time spent in each stage of step(), summed over the episode(s).
struct StageTimings {
  double dynamics = 0, lidar = 0, map = 0, render = 0, reward = 0, observation = 0;
  std::uint64_t steps = 0;
  double total() const { return dynamics + lidar + map + render + reward + observation; }
  StageTimings& operator+=(const StageTimings& o) {
    dynamics += o.dynamics;
    lidar += o.lidar;
    map += o.map;
    render += o.render;
    reward += o.reward;
    observation += o.observation;
    steps += o.steps;
    return *this;
  }
};

class Env {
 public:
  Env() : Env(EpisodeConfig{}) {}
  explicit Env(EpisodeConfig config) : cfg_(std::move(config)) {
    cfg_.validate();
    camera_rays_ = cfg_.camera.rays();
    lidar_rays_ = cfg_.lidar.rays();
    focus_ = focus_mask(cfg_.camera.width, cfg_.camera.height, cfg_.reward.focus_fraction);
  }

  const EpisodeConfig& config() const { return cfg_; }

  // Generates the room from `seed` and spawns the robot.
  Observation reset(std::uint64_t seed) {
    cfg_.seed = seed;
    RoomSpec spec = cfg_.room;
    spec.seed = seed;
    return reset(std::make_shared<const Scene>(generate_room(spec)));
  }

  Observation reset() { return reset(cfg_.seed); }

  // Uses a prepared scene; `spawn` bypasses spawn sampling when given.
  Observation reset(std::shared_ptr<const Scene> scene, std::optional<Pose> spawn = std::nullopt) {
    if (!scene) throw InvalidArgument("scene must not be null");
    scene_ = std::move(scene);
    dyn_rng_.seed(derive_seed(cfg_.seed, "dynamics"));
    obs_rng_.seed(derive_seed(cfg_.seed, "observation"));
    occ_ = GlobalOccupancy(cfg_.voxel_resolution);
    visits_ = VisitGrid(cfg_.voxel_resolution);
    Aabb region = scene_->bounds();
    region.lo -= Vec3::Constant(1.0);
    region.hi += Vec3::Constant(1.0);
    occ_.reserve_region(region);
    visits_.reserve_region(region);

    std::vector<ScheduleEntry> schedule = cfg_.semantic_schedule;
    if (schedule.empty())
      for (int label : scene_->semantic_labels()) schedule.push_back({label});
    if (schedule.empty()) throw InvalidArgument("scene has no semantic object to inspect");
    ledgers_.clear();
    const RewardParams rp = cfg_.reward_params();
    for (const auto& e : schedule) {
      auto obj = scene_->semantic_object(e.label);
      if (!obj) throw InvalidArgument("schedule label " + std::to_string(e.label) + " is not in the scene");
      const std::size_t nf = scene_->object(*obj).mesh.face_count();
      ledgers_.emplace(e.label, FaceLedger(*obj, nf, rp.alpha_for(nf)));
    }
    scheduler_ = SemanticScheduler(schedule, cfg_.d_ref, cfg_.schedule_margin);

    state_ = RobotState{};
    if (spawn) {
      state_.p = spawn->position;
      state_.q = spawn->orientation;
    } else {
      const Pose p = sample_spawn();
      state_.p = p.position;
      state_.q = p.orientation;
    }
    step_ = 0;
    time_ = 0.0;
    termination_ = Termination::running;
    prev_action_ = {0, 0, 0, 0};

    sense();
    LocalContext local = extract_local(occ_, visits_, body_pose(), cfg_.local_grid_size);
    return observe(local);
  }

  StepResult step(const Action& raw) {
    if (!scene_) throw StateError("step() before reset()");
    if (termination_ != Termination::running) throw StateError("step() after episode termination");
    using clock = std::chrono::steady_clock;
    auto lap = [t0 = clock::now()]() mutable {
      const auto t1 = clock::now();
      const double s = std::chrono::duration<double>(t1 - t0).count();
      t0 = t1;
      return s;
    };
    StepResult res;
    // Actions travel as f32 on the wire and in replays; quantize so a
    // recorded episode replays bit-exactly.
    Action a;
    for (int i = 0; i < 4; ++i) a[i] = static_cast<double>(static_cast<float>(raw[i]));
    const ActionCommand cmd = scale_action(a, cfg_.w_max, &res.info.clamped);
    for (int i = 0; i < 4; ++i) prev_action_[i] = std::isfinite(a[i]) ? std::clamp(a[i], -1.0, 1.0) : 0.0;

    bool crashed = false;
    try {
      for (int k = 0; k < cfg_.dynamics.substeps() && !crashed; ++k) {
        state_ = step_dynamics(state_, cmd, cfg_.dynamics, cfg_.noise, dyn_rng_, 1);
        crashed = in_contact(state_.p);
      }
    } catch (const DynamicsFault&) {
      crashed = true;
      res.info.dynamics_fault = true;
    }
    ++step_;
    time_ = step_ * cfg_.dynamics.control_dt;
    timing_.dynamics += lap();

    if (!res.info.dynamics_fault) sense();
    lap();

    const RewardParams rp = cfg_.reward_params();
    FaceLedger& ledger = ledgers_.at(scheduler_.active_label());
    if (!res.info.dynamics_fault) res.reward.f = ledger.update(render_.faces, render_.depth, focus_, rp);
    LocalContext local = extract_local(occ_, visits_, body_pose(), cfg_.local_grid_size);
    res.reward.v = semantic_search_reward(local.visits, rp);
    res.reward.p = collision_penalty(local, cfg_.voxel_resolution, rp);
    res.info.visits = local.visits;
    if (!res.info.dynamics_fault) local.add_visit(visits_.record_visit(state_.p));
    res.info.coverage = ledger.coverage_functional();
    const int before = scheduler_.active_label();
    scheduler_.advance(render_.mask, render_.depth, time_);
    res.info.active_label = scheduler_.active_label();
    res.info.label_switched = res.info.active_label != before;
    timing_.reward += lap();

    if (crashed) {
      termination_ = Termination::crash;
    } else if (step_ >= cfg_.max_steps()) {
      termination_ = Termination::timeout;
    }
    res.termination = termination_;
    res.info.step = step_;
    res.info.time = time_;
    res.observation = observe(local);
    timing_.observation += lap();
    ++timing_.steps;
    return res;
  }

  Pose body_pose() const { return Pose{state_.p, state_.q}; }
  Pose camera_pose() const { return body_pose().compose(cfg_.camera.offset); }
  const RobotState& state() const { return state_; }
  const Scene& scene() const { return *scene_; }
  std::shared_ptr<const Scene> scene_ptr() const { return scene_; }
  int step_count() const { return step_; }
  double time() const { return time_; }
  Termination termination() const { return termination_; }
  const GlobalOccupancy& occupancy() const { return occ_; }
  const VisitGrid& visits() const { return visits_; }
  const RenderOutput& last_render() const { return render_; }
  const SegMask& focus() const { return focus_; }
  const SemanticScheduler& scheduler() const { return scheduler_; }
  const FaceLedger& ledger(int label) const { return ledgers_.at(label); }
  const FaceLedger& active_ledger() const { return ledgers_.at(scheduler_.active_label()); }
  const std::map<int, FaceLedger>& ledgers() const { return ledgers_; }
  const StageTimings& timings() const { return timing_; }
  void reset_timings() { timing_ = {}; }

  bool in_contact(const Vec3& p) const {
    const double r = cfg_.dynamics.collision_radius;
    return !scene_->interior().contains(p) || scene_->distance(p, r + 1e-6) <= r;
  }

 private:
  Pose sample_spawn() {
    Rng rng(derive_seed(cfg_.seed, "spawn"));
    const Aabb& room = scene_->interior();
    const double m = cfg_.spawn_clearance;
    for (int attempt = 0; attempt < cfg_.spawn_attempts; ++attempt) {
      const Vec3 p(uniform(rng, room.lo.x() + m, room.hi.x() - m), uniform(rng, room.lo.y() + m, room.hi.y() - m),
                   uniform(rng, room.lo.z() + m, room.hi.z() - m));
      const double yaw = uniform(rng, -kPi, kPi);
      bool inside = false;
      for (std::size_t o = 0; o < scene_->objects().size() && !inside; ++o)
        inside = scene_->object(o).kind != ObjectKind::wall && scene_->object_box(o).contains(p);
      if (inside) continue;
      if (scene_->distance(p, m) < m) continue;
      return Pose{p, yaw_quat(yaw)};
    }
    throw GenerationError("no collision-free spawn pose after " + std::to_string(cfg_.spawn_attempts) + " attempts",
                          cfg_.seed);
  }

  // Lidar scan, map update, and clean render at the current pose.
  void sense() {
    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    auto lap = [&t0] {
      const auto t1 = clock::now();
      const double s = std::chrono::duration<double>(t1 - t0).count();
      t0 = t1;
      return s;
    };
    const PointCloud cloud = lidar_scan(*scene_, cfg_.lidar, body_pose(), lidar_rays_);
    timing_.lidar += lap();
    integrate_pointcloud(occ_, cloud.origin, cloud);
    timing_.map += lap();
    render_ = render(*scene_, cfg_.camera, camera_pose(), scheduler_.active_label(), camera_rays_);
    timing_.render += lap();
  }

  Observation observe(const LocalContext& local) {
    Observation o;
    const RobotState noisy = perturb_state_observation(state_, cfg_.noise, obs_rng_);
    const auto flat = noisy.flatten();
    for (int i = 0; i < 13; ++i) o.state[i] = static_cast<float>(flat[i]);
    for (int i = 0; i < 4; ++i) o.prev_action[i] = static_cast<float>(prev_action_[i]);
    const DepthImage depth = apply_depth_noise(render_.depth, obs_rng_, cfg_.noise.depth_k_sigma);
    const SegMask mask = cfg_.noise.mask_dropout > 0 ? apply_mask_dropout(render_.mask, obs_rng_, cfg_.noise.mask_dropout)
                                                     : render_.mask;
    o.depth_width = depth.width;
    o.depth_height = depth.height;
    o.masked_depth.resize(depth.size());
    for (std::size_t i = 0; i < depth.size(); ++i) o.masked_depth[i] = mask.data[i] ? depth.data[i] : 0.0f;
    o.grid_size = local.n;
    o.local_occ = local.occupancy;
    o.local_svs.resize(local.svs.size());
    for (std::size_t i = 0; i < local.svs.size(); ++i) o.local_svs[i] = static_cast<float>(local.svs[i]);
    return o;
  }

  EpisodeConfig cfg_;
  std::vector<Vec3> camera_rays_;
  std::vector<Vec3> lidar_rays_;
  SegMask focus_;
  std::shared_ptr<const Scene> scene_;
  Rng dyn_rng_;
  Rng obs_rng_;
  GlobalOccupancy occ_{0.1};
  VisitGrid visits_{0.1};
  std::map<int, FaceLedger> ledgers_;
  SemanticScheduler scheduler_;
  RobotState state_;
  std::array<double, 4> prev_action_{};
  RenderOutput render_;
  int step_ = 0;
  double time_ = 0.0;
  Termination termination_ = Termination::running;
  StageTimings timing_;
};

// ---- replay files --------------------------------------------------------

inline constexpr std::uint16_t kReplayVersion = 1;

struct ReplayRecord {
  std::array<float, 4> action{};
  std::array<float, 3> reward{};  // f, v, p
  std::uint8_t termination = 0;
  bool operator==(const ReplayRecord&) const = default;
};

struct Replay {
  std::string config_text;
  std::uint64_t seed = 0;
  std::vector<ReplayRecord> records;
};

inline ReplayRecord make_replay_record(const Action& a, const StepResult& r) {
  ReplayRecord rec;
  for (int i = 0; i < 4; ++i) rec.action[i] = static_cast<float>(a[i]);
  rec.reward = {static_cast<float>(r.reward.f), static_cast<float>(r.reward.v), static_cast<float>(r.reward.p)};
  rec.termination = static_cast<std::uint8_t>(r.termination);
  return rec;
}

// "SRLR" | u16 version | u64 seed | u32 config length | config text |
// records of 4 f32 action, 3 f32 reward, u8 termination until end of file.
inline void write_replay(std::ostream& out, const Replay& r) {
  out.write("SRLR", 4);
  put_le<std::uint16_t>(out, kReplayVersion);
  put_le<std::uint64_t>(out, r.seed);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.config_text.size()));
  out.write(r.config_text.data(), static_cast<std::streamsize>(r.config_text.size()));
  for (const auto& rec : r.records) {
    for (float a : rec.action) put_le<float>(out, a);
    for (float x : rec.reward) put_le<float>(out, x);
    put_le<std::uint8_t>(out, rec.termination);
  }
}

inline Replay read_replay(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "SRLR") throw InvalidArgument("not a replay file (bad magic)");
  const auto version = get_le<std::uint16_t>(in);
  if (version != kReplayVersion) throw InvalidArgument("unsupported replay version " + std::to_string(version));
  Replay r;
  r.seed = get_le<std::uint64_t>(in);
  const auto len = get_le<std::uint32_t>(in);
  r.config_text.resize(len);
  if (!in.read(r.config_text.data(), len)) throw InvalidArgument("truncated input");
  while (in.peek() != std::char_traits<char>::eof()) {
    ReplayRecord rec;
    for (float& a : rec.action) a = get_le<float>(in);
    for (float& x : rec.reward) x = get_le<float>(in);
    rec.termination = get_le<std::uint8_t>(in);
    if (rec.termination > 2) throw InvalidArgument("bad termination code in replay");
    r.records.push_back(rec);
  }
  return r;
}

inline void save_replay(const std::string& path, const Replay& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  write_replay(out, r);
  if (!out) throw IoError(path, "write failed");
}

inline Replay load_replay(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open replay file");
  try {
    return read_replay(in);
  } catch (const InvalidArgument& e) {
    throw IoError(path, e.what());
  }
}

struct ReplayCheck {
  std::size_t steps = 0;
  std::optional<std::size_t> first_mismatch;
  bool ok() const { return !first_mismatch; }
};

// Re-runs the recorded actions and compares every reward and termination.
inline ReplayCheck verify_replay(const Replay& r) {
  Env env(parse_episode_config(r.config_text, "<replay config>"));
  env.reset(r.seed);
  ReplayCheck check;
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    const auto& rec = r.records[i];
    if (env.termination() != Termination::running) {
      check.first_mismatch = i;
      break;
    }
    const Action a{rec.action[0], rec.action[1], rec.action[2], rec.action[3]};
    const StepResult res = env.step(a);
    ++check.steps;
    if (!(make_replay_record(a, res) == rec)) {
      check.first_mismatch = i;
      break;
    }
  }
  return check;
}

}  // namespace srli
