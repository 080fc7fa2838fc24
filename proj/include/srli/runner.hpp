#pragma once

// Batch evaluation: scripted policies, the feasible-coverage oracle,
// coverage metrics, parallel episode execution, and throughput benchmarks.

#include "srli/env.hpp"

#include <atomic>
#include <condition_variable>
#include <functional>
#include <iomanip>
#include <mutex>
#include <thread>

namespace srli {

// ---- feasible coverage ---------------------------------------------------

struct FeasibilityParams {
  double grid = 0.2;       // viewpoint spacing, m
  int yaw_bins = 16;
  double clearance = 0.15;  // viewpoints closer than this to any surface are discarded
  CameraModel camera;
  double focus_fraction = 0.5;
};

struct FeasibleSet {
  std::vector<std::uint8_t> feasible;  // per face
  std::size_t count = 0;
  std::size_t viewpoints = 0;
  double fraction() const { return feasible.empty() ? 0.0 : double(count) / double(feasible.size()); }
};

// A face is feasible when some collision-free grid viewpoint sees its
// centroid unoccluded, at a range inside [d_ref - band, d_ref + band], and
// inside the focus area for one of the yaw bins (camera level).
inline FeasibleSet feasible_coverage(const Scene& scene, std::uint32_t object_id, double d_ref, double band,
                                     const FeasibilityParams& fp = {}) {
  if (!(fp.grid > 0) || fp.yaw_bins < 1) throw InvalidArgument("bad feasibility sampling parameters");
  if (!(band >= 0) || !(d_ref > band)) throw InvalidArgument("need 0 <= band < d_ref");
  const SceneObject& obj = scene.object(object_id);
  const std::size_t nf = obj.mesh.face_count();
  FeasibleSet out;
  out.feasible.assign(nf, 0);
  std::vector<Vec3> centroids(nf);
  for (std::size_t f = 0; f < nf; ++f) centroids[f] = obj.to_world(obj.mesh.face_centroid(f));

  const int fw = std::max(1, static_cast<int>(std::floor(fp.camera.width * fp.focus_fraction)));
  const int fh = std::max(1, static_cast<int>(std::floor(fp.camera.height * fp.focus_fraction)));
  const double tan_h = (fw / 2.0) / fp.camera.fx();
  const double tan_v = (fh / 2.0) / fp.camera.fy();
  const double reach = d_ref + band;

  Aabb region = scene.object_box(object_id);
  region.lo -= Vec3::Constant(reach);
  region.hi += Vec3::Constant(reach);
  region.lo = region.lo.cwiseMax(scene.interior().lo);
  region.hi = region.hi.cwiseMin(scene.interior().hi);
  const Vec3 origin = region.lo;
  const Eigen::Vector3i cells = ((region.hi - region.lo) / fp.grid).array().floor().cast<int>();

  std::vector<double> yaw_cos(fp.yaw_bins), yaw_sin(fp.yaw_bins);
  for (int b = 0; b < fp.yaw_bins; ++b) {
    yaw_cos[b] = std::cos(2 * kPi * b / fp.yaw_bins);
    yaw_sin[b] = std::sin(2 * kPi * b / fp.yaw_bins);
  }

  for (int ix = 0; ix <= cells.x(); ++ix)
    for (int iy = 0; iy <= cells.y(); ++iy)
      for (int iz = 0; iz <= cells.z(); ++iz) {
        const Vec3 v = origin + fp.grid * Vec3(ix, iy, iz);
        bool blocked = false;
        for (std::size_t o = 0; o < scene.objects().size() && !blocked; ++o)
          blocked = scene.object(o).kind != ObjectKind::wall && scene.object_box(o).contains(v);
        if (blocked || scene.distance(v, fp.clearance) <= fp.clearance) continue;
        ++out.viewpoints;
        for (std::size_t f = 0; f < nf; ++f) {
          if (out.feasible[f]) continue;
          const Vec3 d = centroids[f] - v;
          const double r = d.norm();
          if (r < d_ref - band || r > d_ref + band) continue;
          bool in_focus = false;
          for (int b = 0; b < fp.yaw_bins && !in_focus; ++b) {
            // Centroid in the camera frame of a level camera yawed to bin b.
            const double x = yaw_cos[b] * d.x() + yaw_sin[b] * d.y();
            const double y = -yaw_sin[b] * d.x() + yaw_cos[b] * d.y();
            in_focus = x > 0 && std::abs(y) <= tan_h * x && std::abs(d.z()) <= tan_v * x;
          }
          if (!in_focus) continue;
          const auto hit = scene.raycast(v, d / r, r + 1e-6);
          if (hit && hit->object_id == object_id && hit->face_id == f) {
            out.feasible[f] = 1;
            ++out.count;
          }
        }
      }
  return out;
}

// Faces inspected within the band: seen by the ledger with a best distance
// no farther than `band` from d_ref.
inline std::size_t covered_faces(const FaceLedger& ledger, double d_ref, double band,
                                 const std::vector<std::uint8_t>* mask = nullptr) {
  std::size_t n = 0;
  for (std::size_t f = 0; f < ledger.face_count(); ++f)
    if ((!mask || (*mask)[f]) && ledger.seen(f) && std::abs(ledger.best_distance(f) - d_ref) <= band + 1e-12) ++n;
  return n;
}

// ---- policies --------------------------------------------------------------

class Policy {
 public:
  virtual ~Policy() = default;
  virtual void reset(std::uint64_t seed) = 0;
  virtual Action act(const Observation& obs) = 0;
  // Called when the environment switches to a new semantic target.
  virtual void retarget() {}
};

class RandomPolicy : public Policy {
 public:
  void reset(std::uint64_t seed) override { rng_.seed(derive_seed(seed, "random-policy")); }
  Action act(const Observation&) override {
    Action a;
    for (double& x : a) x = uniform(rng_, -1.0, 1.0);
    return a;
  }

 private:
  Rng rng_;
};

struct OrbitParams {
  double tangential_speed = 0.35;  // m/s along the orbit
  double radial_gain = 1.0;
  double max_radial_speed = 0.4;
  double yaw_gain = 2.0;
  double sweep_speed = 0.12;     // m/s of the altitude sweep
  double sweep_margin = 0.15;    // m beyond the estimated target top and bottom
  double search_yaw_rate = 0.8;  // rad/s while searching
  double walk_speed = 0.5;
  double guard_radius = 0.8;     // occupied cells inside this shape the command
  double stop_radius = 0.4;      // no approach at all inside this range
  double altitude_margin = 0.4;  // kept from floor and ceiling
};

// Scripted inspection baseline. Searches by turning in place and then
// wandering; once the target is seen it keeps a world-frame box estimate
// from the masked depth, holds the nearest visible surface at d_ref, strafes
// around the box, and sweeps altitude over the box height.
class OrbitPolicy : public Policy {
 public:
  explicit OrbitPolicy(const EpisodeConfig& cfg, OrbitParams p = {})
      : cam_(cfg.camera), res_(cfg.voxel_resolution), d_ref_(cfg.d_ref), w_max_(cfg.w_max),
        dt_(cfg.dynamics.control_dt), room_height_(cfg.room.height), p_(p), rays_(cfg.camera.rays()) {}

  void reset(std::uint64_t seed) override {
    rng_.seed(derive_seed(seed, "orbit-policy"));
    retarget();
    orbit_dir_ = 1.0;
  }

  void retarget() override {
    box_ = Aabb{};
    seen_ = false;
    searched_ = 0.0;
    walk_heading_ = std::numeric_limits<double>::quiet_NaN();
    walk_timer_ = 0;
    z_ref_ = std::numeric_limits<double>::quiet_NaN();
    sweep_dir_ = 1.0;
    stalled_ = 0;
    flip_cooldown_ = 0;
  }

  bool target_seen() const { return seen_; }
  const Aabb& target_box() const { return box_; }

  Action act(const Observation& obs) override {
    const Vec3 p(obs.state[0], obs.state[1], obs.state[2]);
    const double yaw = yaw_of(Quat(obs.state[3], obs.state[4], obs.state[5], obs.state[6]));
    const Eigen::Matrix3d R = yaw_quat(yaw).toRotationMatrix();

    // Reconstruct the visible target surface.
    std::vector<float> depths;
    double u_sum = 0.0;
    for (int v = 0; v < obs.depth_height; ++v)
      for (int u = 0; u < obs.depth_width; ++u) {
        const float d = obs.masked_depth[std::size_t(v) * obs.depth_width + u];
        if (d <= 0.0f) continue;
        const Vec3 local = cam_.offset.position + cam_.offset.orientation * (rays_[std::size_t(v) * cam_.width + u] * d);
        box_.grow(p + R * local);
        depths.push_back(d);
        u_sum += u;
      }
    const bool visible = depths.size() >= 3;
    if (visible) seen_ = true;

    Vec3 v_world = Vec3::Zero();
    double yaw_rate = 0.0;
    if (seen_) {
      const Vec3 c = 0.5 * (box_.lo + box_.hi);
      Vec3 rvec(p.x() - c.x(), p.y() - c.y(), 0.0);
      double dist = rvec.norm();
      if (dist < 1e-6) {
        rvec = Vec3(1, 0, 0);
        dist = 1e-6;
      }
      const Vec3 rhat = rvec / dist;
      double range;
      if (visible) {
        const std::size_t k = depths.size() / 10;
        std::nth_element(depths.begin(), depths.begin() + k, depths.end());
        range = depths[k];
      } else {
        const Vec3 q = p.cwiseMax(box_.lo).cwiseMin(box_.hi);
        range = std::hypot(p.x() - q.x(), p.y() - q.y());
      }
      const double v_rad = std::clamp(p_.radial_gain * (d_ref_ - range), -p_.max_radial_speed, p_.max_radial_speed);
      const Vec3 that = orbit_dir_ * Vec3(-rhat.y(), rhat.x(), 0.0);
      v_world = rhat * v_rad + that * p_.tangential_speed;

      double yaw_err;
      if (visible) {
        const double u_c = u_sum / depths.size() + 0.5;
        yaw_err = std::atan2(obs.depth_width / 2.0 - u_c, cam_.fx());
      } else {
        yaw_err = wrap_angle(std::atan2(c.y() - p.y(), c.x() - p.x()) - yaw);
      }
      yaw_rate = p_.yaw_gain * yaw_err + orbit_dir_ * p_.tangential_speed / std::max(dist, 0.5);

      // Altitude sweep across the target's height.
      const double z_lo = std::max(p_.altitude_margin, box_.lo.z() - p_.sweep_margin);
      const double z_hi = std::min(room_height_ - p_.altitude_margin, box_.hi.z() + p_.sweep_margin);
      if (std::isnan(z_ref_)) z_ref_ = std::clamp(p.z(), z_lo, std::max(z_lo, z_hi));
      z_ref_ += sweep_dir_ * p_.sweep_speed * dt_;
      if (z_ref_ >= z_hi) {
        z_ref_ = z_hi;
        sweep_dir_ = -1.0;
      } else if (z_ref_ <= z_lo) {
        z_ref_ = z_lo;
        sweep_dir_ = 1.0;
      }
      v_world.z() = std::clamp(1.0 * (z_ref_ - p.z()), -0.3, 0.3);
    } else if (searched_ < 2 * kPi) {
      searched_ += p_.search_yaw_rate * dt_;
      yaw_rate = p_.search_yaw_rate;
    } else {
      if (std::isnan(walk_heading_) || walk_timer_ <= 0) {
        walk_heading_ = uniform(rng_, -kPi, kPi);
        walk_timer_ = 40;
      }
      --walk_timer_;
      v_world = Vec3(std::cos(walk_heading_), std::sin(walk_heading_), 0.0) * p_.walk_speed;
      const double mid = 0.5 * room_height_;
      v_world.z() = std::clamp(0.5 * (mid - p.z()), -0.2, 0.2);
      yaw_rate = 0.6;
    }

    // Body-frame command, then shaped by nearby occupied cells.
    Vec3 v_body = R.transpose() * v_world;
    const Vec3 wanted = v_body;
    v_body = guard(obs, v_body);
    if (seen_) {
      // A blocked orbit reverses direction.
      const Vec3 t_body = R.transpose() * (orbit_dir_ * Vec3(-(p.y() - 0.5 * (box_.lo.y() + box_.hi.y())),
                                                             p.x() - 0.5 * (box_.lo.x() + box_.hi.x()), 0.0));
      const double tn = t_body.norm();
      if (tn > 1e-9 && flip_cooldown_ <= 0) {
        const double want = wanted.dot(t_body) / tn;
        const double got = v_body.dot(t_body) / tn;
        stalled_ = (want > 0.1 && got < 0.4 * want) ? stalled_ + 1 : 0;
        if (stalled_ >= 5) {
          orbit_dir_ = -orbit_dir_;
          stalled_ = 0;
          flip_cooldown_ = 50;
        }
      }
      --flip_cooldown_;
    } else if (v_body.norm() < 0.3 * wanted.norm()) {
      walk_timer_ = 0;
    }

    Action a;
    const double cmd[4] = {v_body.x(), v_body.y(), v_body.z(), yaw_rate};
    for (int i = 0; i < 4; ++i) a[i] = w_max_[i] > 0 ? std::clamp(cmd[i] / w_max_[i], -1.0, 1.0) : 0.0;
    return a;
  }

  // Limits the velocity component toward each occupied cell in the guard
  // radius: full speed at the rim, zero at stop_radius, pushed away inside
  // it. Cells are applied farthest first so the nearest one has the last word.
  Vec3 guard(const Observation& obs, Vec3 v) const {
    const int n = obs.grid_size;
    const int c = n / 2;
    const int reach = static_cast<int>(std::ceil(p_.guard_radius / res_));
    std::vector<std::pair<double, Vec3>> near;
    for (int i = std::max(0, c - reach); i <= std::min(n - 1, c + reach); ++i)
      for (int j = std::max(0, c - reach); j <= std::min(n - 1, c + reach); ++j)
        for (int k = std::max(0, c - reach); k <= std::min(n - 1, c + reach); ++k) {
          if (obs.local_occ[(std::size_t(i) * n + j) * n + k] != 1) continue;
          const Vec3 off = res_ * Vec3(i - c, j - c, k - c);
          const double r = off.norm();
          if (r <= p_.guard_radius && r > 1e-9) near.emplace_back(r, off / r);
        }
    std::stable_sort(near.begin(), near.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [r, nhat] : near) {
      const double allowed =
          std::clamp((r - p_.stop_radius) / (p_.guard_radius - p_.stop_radius), 0.0, 1.0) * p_.walk_speed;
      const double toward = v.dot(nhat);
      if (toward > allowed) v -= nhat * (toward - allowed);
      if (r < p_.stop_radius) v -= nhat * 0.05;
    }
    // Opposing cells can undo each other's corrections; hold still then.
    for (const auto& [r, nhat] : near)
      if (r < p_.stop_radius && v.dot(nhat) > 0) return Vec3::Zero();
    return v;
  }

 private:
  CameraModel cam_;
  double res_;
  double d_ref_;
  std::array<double, 4> w_max_;
  double dt_;
  double room_height_;
  OrbitParams p_;
  std::vector<Vec3> rays_;
  Rng rng_;
  Aabb box_;
  bool seen_ = false;
  double searched_ = 0.0;
  double walk_heading_ = 0.0;
  int walk_timer_ = 0;
  double z_ref_ = 0.0;
  double sweep_dir_ = 1.0;
  double orbit_dir_ = 1.0;
  int stalled_ = 0;
  int flip_cooldown_ = 0;
};

enum class PolicyKind { random, orbit, bridge };

inline PolicyKind parse_policy_kind(const std::string& s) {
  if (s == "random") return PolicyKind::random;
  if (s == "orbit") return PolicyKind::orbit;
  if (s == "bridge") return PolicyKind::bridge;
  throw InvalidArgument("unknown policy '" + s + "' (expected random, orbit, or bridge)");
}

inline const char* to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::random: return "random";
    case PolicyKind::orbit: return "orbit";
    case PolicyKind::bridge: return "bridge";
  }
  return "?";
}

inline std::unique_ptr<Policy> make_policy(PolicyKind kind, const EpisodeConfig& cfg) {
  switch (kind) {
    case PolicyKind::random: return std::make_unique<RandomPolicy>();
    case PolicyKind::orbit: return std::make_unique<OrbitPolicy>(cfg);
    case PolicyKind::bridge: break;
  }
  throw InvalidArgument("the bridge policy is driven by an external client; use serve()");
}

// ---- batch execution -----------------------------------------------------

struct BatchConfig {
  int env_count = 512;
  int episodes_per_env = 6;
  std::vector<int> curriculum{0, 4, 9, 14, 19};  // obstacle counts; empty: use episode.room
  PolicyKind policy = PolicyKind::orbit;
  std::string output_path;  // per-step CSV; empty: none
  std::uint64_t master_seed = 0;
  EpisodeConfig episode;
  int threads = 0;            // 0: hardware concurrency
  double coverage_band = 0.2;  // evaluation band around d_ref, m
  FeasibilityParams feasibility;
  double time_bin = 1.0;  // s

  void validate() const {
    if (env_count < 1 || episodes_per_env < 1) throw InvalidArgument("env_count and episodes_per_env must be positive");
    if (threads < 0) throw InvalidArgument("threads must be non-negative");
    if (!(time_bin > 0)) throw InvalidArgument("time_bin must be positive");
    for (int c : curriculum)
      if (c < 0 || c > episode.room.max_obstacles) throw InvalidArgument("curriculum obstacle count out of range");
    episode.validate();
  }

  std::vector<int> levels() const {
    return curriculum.empty() ? std::vector<int>{episode.room.obstacle_count} : curriculum;
  }
};

inline std::uint64_t episode_seed(std::uint64_t master, int obstacles, int env_id, int episode) {
  return derive_seed(derive_seed(master, "level", static_cast<std::uint64_t>(obstacles)), "episode",
                     (static_cast<std::uint64_t>(env_id) << 20) | static_cast<std::uint64_t>(episode));
}

struct MetricsRow {
  int obstacles = 0;
  int env_id = 0;
  int episode = 0;
  int step = 0;
  double time = 0.0;
  double coverage = 0.0;  // fraction of feasible faces inspected
  RewardBreakdown reward;
  double functional = 0.0;  // F of the active ledger
  Termination termination = Termination::running;
};

inline constexpr const char* kMetricsHeader = "obstacles,env_id,episode,step,time,coverage,f,v,p,F,termination";

inline void write_metrics_row(std::ostream& out, const MetricsRow& r) {
  out << r.obstacles << ',' << r.env_id << ',' << r.episode << ',' << r.step << ',' << format_double(r.time) << ','
      << format_double(r.coverage) << ',' << format_double(r.reward.f) << ',' << format_double(r.reward.v) << ','
      << format_double(r.reward.p) << ',' << format_double(r.functional) << ',' << to_string(r.termination) << '\n';
}

struct EpisodeSummary {
  int obstacles = 0;
  int env_id = 0;
  int episode = 0;
  std::uint64_t seed = 0;
  int steps = 0;
  Termination termination = Termination::running;
  bool dynamics_fault = false;
  double final_coverage = 0.0;
  double feasible_fraction = 0.0;  // feasible faces / all faces
  double functional = 0.0;
  double return_sum = 0.0;
  std::vector<double> coverage_by_bin;  // coverage at the end of each time bin
};

struct EpisodeRun {
  EpisodeSummary summary;
  std::vector<MetricsRow> rows;
};

// Runs one episode with a scripted policy and tracks coverage of the
// feasible faces of every scheduled target.
inline EpisodeRun run_episode(Env& env, Policy& policy, std::uint64_t seed, const BatchConfig& bc, bool keep_rows,
                              int obstacles = 0, int env_id = 0, int episode = 0) {
  EpisodeRun run;
  EpisodeSummary& s = run.summary;
  s.obstacles = obstacles;
  s.env_id = env_id;
  s.episode = episode;
  s.seed = seed;
  Observation obs = env.reset(seed);
  policy.reset(seed);
  const double d_ref = env.config().d_ref;
  FeasibilityParams fp = bc.feasibility;
  fp.camera = env.config().camera;
  fp.focus_fraction = env.config().reward.focus_fraction;
  fp.clearance = env.config().dynamics.collision_radius;
  std::map<int, FeasibleSet> feasible;
  std::size_t total_faces = 0, total_feasible = 0;
  for (const auto& [label, ledger] : env.ledgers()) {
    feasible[label] = feasible_coverage(env.scene(), ledger.object_id(), d_ref, bc.coverage_band, fp);
    total_faces += ledger.face_count();
    total_feasible += feasible[label].count;
  }
  s.feasible_fraction = total_faces ? double(total_feasible) / total_faces : 0.0;
  auto coverage = [&] {
    if (total_feasible == 0) return 0.0;
    std::size_t covered = 0;
    for (const auto& [label, ledger] : env.ledgers())
      covered += covered_faces(ledger, d_ref, bc.coverage_band, &feasible[label].feasible);
    return double(covered) / double(total_feasible);
  };
  const int bins = static_cast<int>(std::ceil(env.config().episode_length / bc.time_bin - 1e-9));
  s.coverage_by_bin.assign(bins, 0.0);
  double cov = 0.0;
  while (env.termination() == Termination::running) {
    const Action a = policy.act(obs);
    StepResult r = env.step(a);
    if (r.info.label_switched) policy.retarget();
    cov = coverage();
    s.return_sum += r.reward.total();
    s.dynamics_fault = s.dynamics_fault || r.info.dynamics_fault;
    const int bin = std::min(bins - 1, static_cast<int>(std::ceil(r.info.time / bc.time_bin - 1e-9)) - 1);
    if (bin >= 0) s.coverage_by_bin[bin] = cov;
    if (keep_rows)
      run.rows.push_back(MetricsRow{obstacles, env_id, episode, r.info.step, r.info.time, cov, r.reward,
                                    r.info.coverage, r.termination});
    obs = std::move(r.observation);
  }
  // Curves hold their last value after termination.
  for (int b = 1; b < bins; ++b)
    if (b * bc.time_bin >= env.time() - 1e-9) s.coverage_by_bin[b] = std::max(s.coverage_by_bin[b], s.coverage_by_bin[b - 1]);
  s.steps = env.step_count();
  s.termination = env.termination();
  s.final_coverage = cov;
  s.functional = env.active_ledger().coverage_functional();
  return run;
}

struct LevelReport {
  int obstacles = 0;
  std::size_t episodes = 0;
  double mean_coverage = 0.0;
  double crash_pct = 0.0;
  double timeout_pct = 0.0;
  std::size_t dynamics_faults = 0;
  double mean_feasible_fraction = 0.0;
  std::vector<double> bin_mean, bin_p5, bin_p95;
};

struct CoverageReport {
  std::vector<LevelReport> levels;
  std::vector<EpisodeSummary> episodes;
  double time_bin = 1.0;
};

// Linear-interpolated percentile of an unsorted sample.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * double(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(v.size() - 1, lo + 1);
  return v[lo] + (v[hi] - v[lo]) * (pos - double(lo));
}

inline CoverageReport summarize(std::vector<EpisodeSummary> episodes, double time_bin) {
  CoverageReport rep;
  rep.time_bin = time_bin;
  std::map<int, std::vector<const EpisodeSummary*>> by_level;
  for (const auto& e : episodes) by_level[e.obstacles].push_back(&e);
  for (const auto& [obst, eps] : by_level) {
    LevelReport lr;
    lr.obstacles = obst;
    lr.episodes = eps.size();
    std::size_t crash = 0, timeout = 0;
    std::size_t bins = 0;
    for (const auto* e : eps) {
      lr.mean_coverage += e->final_coverage;
      lr.mean_feasible_fraction += e->feasible_fraction;
      crash += e->termination == Termination::crash;
      timeout += e->termination == Termination::timeout;
      lr.dynamics_faults += e->dynamics_fault;
      bins = std::max(bins, e->coverage_by_bin.size());
    }
    const double n = double(eps.size());
    lr.mean_coverage /= n;
    lr.mean_feasible_fraction /= n;
    const std::size_t terminated = crash + timeout;
    lr.crash_pct = terminated ? 100.0 * double(crash) / double(terminated) : 0.0;
    lr.timeout_pct = terminated ? 100.0 * double(timeout) / double(terminated) : 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
      std::vector<double> col;
      for (const auto* e : eps)
        col.push_back(b < e->coverage_by_bin.size() ? e->coverage_by_bin[b] : e->final_coverage);
      double m = 0;
      for (double x : col) m += x;
      lr.bin_mean.push_back(m / double(col.size()));
      lr.bin_p5.push_back(percentile(col, 5));
      lr.bin_p95.push_back(percentile(col, 95));
    }
    rep.levels.push_back(std::move(lr));
  }
  rep.episodes = std::move(episodes);
  return rep;
}

inline void write_report(std::ostream& out, const CoverageReport& rep) {
  out << std::fixed << std::setprecision(1);
  out << "obstacles  episodes  coverage%  crash%  timeout%  dyn_faults  feasible%\n";
  for (const auto& l : rep.levels)
    out << std::setw(9) << l.obstacles << std::setw(10) << l.episodes << std::setw(11) << 100 * l.mean_coverage
        << std::setw(8) << l.crash_pct << std::setw(10) << l.timeout_pct << std::setw(12) << l.dynamics_faults
        << std::setw(11) << 100 * l.mean_feasible_fraction << '\n';
  out.unsetf(std::ios::floatfield);
}

// Coverage-over-time bands: one row per (level, bin).
inline void write_curves_csv(std::ostream& out, const CoverageReport& rep) {
  out << "obstacles,time,mean,p5,p95\n";
  for (const auto& l : rep.levels)
    for (std::size_t b = 0; b < l.bin_mean.size(); ++b)
      out << l.obstacles << ',' << format_double((b + 1) * rep.time_bin) << ',' << format_double(l.bin_mean[b])
          << ',' << format_double(l.bin_p5[b]) << ',' << format_double(l.bin_p95[b]) << '\n';
}

// Runs jobs 0..n-1 on up to `threads` workers; `f(job)` must only touch
// job-local state.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& f) {
  const std::size_t workers =
      std::min<std::size_t>(n, threads > 0 ? std::size_t(threads) : std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Executes every (level, env, episode) and aggregates. Rows reach the CSV in
// (level, env_id, episode, step) order regardless of scheduling.
inline CoverageReport run_batch(const BatchConfig& bc) {
  bc.validate();
  if (bc.policy == PolicyKind::bridge) throw InvalidArgument("run_batch drives scripted policies only; use serve()");
  const std::vector<int> levels = bc.levels();
  const std::size_t jobs = levels.size() * std::size_t(bc.env_count);

  std::unique_ptr<std::ofstream> csv;
  if (!bc.output_path.empty()) {
    csv = std::make_unique<std::ofstream>(bc.output_path);
    if (!*csv) throw IoError(bc.output_path, "cannot open for writing");
    *csv << kMetricsHeader << '\n';
  }
  std::vector<std::vector<EpisodeSummary>> summaries(jobs);
  std::vector<std::string> pending(jobs);
  std::vector<std::uint8_t> done(jobs, 0);
  std::size_t flushed = 0;
  std::mutex mu;

  parallel_for(jobs, bc.threads, [&](std::size_t job) {
    const int obstacles = levels[job / bc.env_count];
    const int env_id = static_cast<int>(job % bc.env_count);
    EpisodeConfig ec = bc.episode;
    ec.room.obstacle_count = obstacles;
    Env env(ec);
    auto policy = make_policy(bc.policy, ec);
    std::ostringstream rows;
    for (int ep = 0; ep < bc.episodes_per_env; ++ep) {
      const std::uint64_t seed = episode_seed(bc.master_seed, obstacles, env_id, ep);
      EpisodeRun run = run_episode(env, *policy, seed, bc, csv != nullptr, obstacles, env_id, ep);
      for (const auto& r : run.rows) write_metrics_row(rows, r);
      summaries[job].push_back(std::move(run.summary));
    }
    if (!csv) return;
    std::lock_guard lock(mu);
    pending[job] = rows.str();
    done[job] = 1;
    while (flushed < jobs && done[flushed]) {
      *csv << pending[flushed];
      std::string().swap(pending[flushed]);
      ++flushed;
    }
  });
  if (csv) {
    csv->flush();
    if (!*csv) throw IoError(bc.output_path, "write failed");
  }
  std::vector<EpisodeSummary> all;
  for (auto& v : summaries)
    for (auto& s : v) all.push_back(std::move(s));
  return summarize(std::move(all), bc.time_bin);
}

// One scripted episode captured as a replay: config, seed, and the action
// and reward stream.
inline Replay record_episode(const EpisodeConfig& cfg, std::uint64_t seed, PolicyKind kind) {
  Replay rep{episode_config_text(cfg), seed, {}};
  Env env(parse_episode_config(rep.config_text, "<replay config>"));
  auto policy = make_policy(kind, env.config());
  Observation obs = env.reset(seed);
  policy->reset(seed);
  while (env.termination() == Termination::running) {
    const Action a = policy->act(obs);
    StepResult r = env.step(a);
    if (r.info.label_switched) policy->retarget();
    rep.records.push_back(make_replay_record(a, r));
    obs = std::move(r.observation);
  }
  return rep;
}

// ---- throughput ------------------------------------------------------------

struct BenchReport {
  int env_count = 0;
  int threads = 0;
  std::uint64_t total_steps = 0;
  double seconds = 0.0;
  double steps_per_sec = 0.0;
  std::uint64_t single_steps = 0;
  double single_seconds = 0.0;
  double single_steps_per_sec = 0.0;
  StageTimings stages;  // summed over all parallel environments
};

// Steps `env_count` environments with random actions for `total_steps`
// steps in all (split evenly), resetting terminated episodes, then repeats
// the same per-env share on a single environment for the single-context rate.
inline BenchReport bench(int env_count, std::uint64_t total_steps, int threads = 0, EpisodeConfig cfg = {},
                         std::uint64_t seed = 1) {
  if (env_count < 1) throw InvalidArgument("env_count must be positive");
  BenchReport rep;
  rep.env_count = env_count;
  rep.threads = threads > 0 ? threads : int(std::max(1u, std::thread::hardware_concurrency()));
  rep.total_steps = total_steps;
  if (total_steps == 0) return rep;

  auto run_env = [&](int env_id, std::uint64_t steps, StageTimings& out) {
    Env env(cfg);
    RandomPolicy policy;
    int episode = 0;
    Observation obs = env.reset(episode_seed(seed, cfg.room.obstacle_count, env_id, episode));
    policy.reset(seed + env_id);
    for (std::uint64_t s = 0; s < steps; ++s) {
      if (env.termination() != Termination::running)
        obs = env.reset(episode_seed(seed, cfg.room.obstacle_count, env_id, ++episode));
      obs = env.step(policy.act(obs)).observation;
    }
    out = env.timings();
  };

  std::vector<std::uint64_t> share(env_count, total_steps / env_count);
  for (std::uint64_t i = 0; i < total_steps % env_count; ++i) ++share[i];
  std::vector<StageTimings> timings(env_count);
  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(env_count, rep.threads, [&](std::size_t e) { run_env(int(e), share[e], timings[e]); });
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rep.steps_per_sec = rep.seconds > 0 ? double(total_steps) / rep.seconds : 0.0;
  for (const auto& t : timings) rep.stages += t;

  rep.single_steps = std::max<std::uint64_t>(1, share[0]);
  StageTimings single;
  const auto t1 = std::chrono::steady_clock::now();
  run_env(0, rep.single_steps, single);
  rep.single_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
  rep.single_steps_per_sec = rep.single_seconds > 0 ? double(rep.single_steps) / rep.single_seconds : 0.0;
  return rep;
}

inline void write_bench_report(std::ostream& out, const BenchReport& r) {
  out << "envs " << r.env_count << "  threads " << r.threads << "  steps " << r.total_steps << '\n';
  if (r.total_steps == 0) {
    out << "no samples\n";
    return;
  }
  out << std::fixed << std::setprecision(1);
  out << "parallel      " << r.steps_per_sec << " steps/s (" << std::setprecision(3) << r.seconds << " s)\n";
  out << std::setprecision(1) << "single env    " << r.single_steps_per_sec << " steps/s\n";
  const double n = double(std::max<std::uint64_t>(1, r.stages.steps));
  out << std::setprecision(3) << "per-step stage time (ms):\n";
  const std::pair<const char*, double> rows[] = {{"dynamics", r.stages.dynamics}, {"lidar", r.stages.lidar},
                                                 {"map", r.stages.map},           {"render", r.stages.render},
                                                 {"reward", r.stages.reward},     {"observation", r.stages.observation}};
  for (const auto& [name, sec] : rows) out << "  " << std::left << std::setw(12) << name << std::right << 1e3 * sec / n << '\n';
  out << "  " << std::left << std::setw(12) << "total" << std::right << 1e3 * r.stages.total() / n << '\n';
  out.unsetf(std::ios::floatfield);
}

}  // namespace srli
