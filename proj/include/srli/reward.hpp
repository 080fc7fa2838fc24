#pragma once

// Step reward: face-coverage term from a per-face ledger, semantic-search
// term from local visit counts, and the proximity penalty.

#include "srli/mapping.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace srli {

enum class FaceRewardMode {
  increment,  // pay n - s_f, so the episode sum equals the coverage functional
  literal,    // pay the full new score n on every improvement
};

struct RewardParams {
  double alpha = 0.0;  // <= 0 selects 1 / N_f of the inspected mesh
  double beta = std::log(2.0) / (0.25 * 0.25);
  double gamma = 0.1;
  double delta = 0.01;
  double d_ref = 1.0;
  double d_coll = 0.3;
  double focus_fraction = 0.5;
  FaceRewardMode mode = FaceRewardMode::increment;

  double alpha_for(std::size_t face_count) const {
    return alpha > 0 ? alpha : 1.0 / static_cast<double>(face_count);
  }

  void validate() const {
    if (!(beta > 0 && gamma > 0 && delta > 0)) throw InvalidArgument("beta, gamma, delta must be positive");
    if (!(d_ref > 0)) throw InvalidArgument("d_ref must be positive");
    if (!(d_coll > 0)) throw InvalidArgument("d_coll must be positive");
    if (!(focus_fraction > 0 && focus_fraction <= 1)) throw InvalidArgument("focus_fraction must be in (0, 1]");
  }
};

struct RewardBreakdown {
  double f = 0.0;
  double v = 0.0;
  double p = 0.0;
  double total() const { return f + v + p; }
};

// Centered rectangle of floor(fraction * dims) pixels; when the leftover
// margin is odd, the extra pixel goes after the rectangle.
inline SegMask focus_mask(int width, int height, double fraction = 0.5) {
  if (width <= 0 || height <= 0) throw InvalidArgument("focus mask dimensions must be positive");
  SegMask m(width, height, 0);
  const int fw = std::max(1, static_cast<int>(std::floor(width * fraction)));
  const int fh = std::max(1, static_cast<int>(std::floor(height * fraction)));
  const int u0 = (width - fw) / 2;
  const int v0 = (height - fh) / 2;
  for (int v = v0; v < v0 + fh; ++v)
    for (int u = u0; u < u0 + fw; ++u) m.at(u, v) = 1;
  return m;
}

// Per-face best observation distance and current score for one semantic
// object.
class FaceLedger {
 public:
  FaceLedger() = default;
  FaceLedger(std::uint32_t object_id, std::size_t face_count, double alpha)
      : object_id_(object_id),
        alpha_(alpha),
        best_(face_count, std::numeric_limits<double>::quiet_NaN()),
        score_(face_count, 0.0),
        sum_(face_count, 0.0),
        hits_(face_count, 0) {}

  std::uint32_t object_id() const { return object_id_; }
  std::size_t face_count() const { return best_.size(); }
  double alpha() const { return alpha_; }
  bool seen(std::size_t f) const { return !std::isnan(best_[f]); }
  double best_distance(std::size_t f) const { return best_[f]; }
  double score(std::size_t f) const { return score_[f]; }
  const std::vector<double>& scores() const { return score_; }

  // Sum of per-face scores; equals the covered fraction when alpha = 1/N_f
  // and every face was seen at d_ref.
  double coverage_functional() const { return functional_; }

  std::size_t seen_count() const {
    std::size_t n = 0;
    for (double d : best_) n += !std::isnan(d);
    return n;
  }

  // Applies one frame and returns the face reward for it. Only pixels inside
  // `focus` whose face belongs to this ledger's object participate; each
  // visible face is judged on the mean depth of its participating pixels.
  double update(const FaceIndexImage& faces, const DepthImage& depth, const SegMask& focus,
                const RewardParams& params) {
    if (!faces.same_shape(depth) || !faces.same_shape(focus))
      throw InvalidArgument("face, depth, and focus images must share a shape");
    touched_.clear();
    const auto obj = static_cast<std::int32_t>(object_id_);
    for (std::size_t i = 0; i < faces.size(); ++i) {
      const FaceRef& fr = faces.data[i];
      if (fr.object != obj || !focus.data[i]) continue;
      const auto f = static_cast<std::size_t>(fr.face);
      if (f >= best_.size()) throw InvalidArgument("face index out of range for ledger");
      if (hits_[f] == 0) touched_.push_back(f);
      sum_[f] += depth.data[i];
      ++hits_[f];
    }
    std::sort(touched_.begin(), touched_.end());
    double reward = 0.0;
    for (std::size_t f : touched_) {
      const double d = sum_[f] / hits_[f];
      sum_[f] = 0.0;
      hits_[f] = 0;
      const double err = std::abs(d - params.d_ref);
      const bool improves = std::isnan(best_[f]) || err < std::abs(best_[f] - params.d_ref);
      if (!improves) continue;
      const double n = alpha_ * std::exp(-params.beta * (d - params.d_ref) * (d - params.d_ref));
      reward += params.mode == FaceRewardMode::increment ? n - score_[f] : n;
      score_[f] = n;
      best_[f] = d;
    }
    functional_ = 0.0;
    for (double s : score_) functional_ += s;
    return reward;
  }

 private:
  std::uint32_t object_id_ = 0;
  double alpha_ = 0.0;
  std::vector<double> best_;
  std::vector<double> score_;
  std::vector<double> sum_;
  std::vector<std::uint32_t> hits_;
  std::vector<std::size_t> touched_;
  double functional_ = 0.0;
};

inline double update_face_rewards(FaceLedger& ledger, const FaceIndexImage& faces, const DepthImage& depth,
                                  const SegMask& focus, const RewardParams& params) {
  return ledger.update(faces, depth, focus, params);
}

inline double semantic_search_reward(std::uint64_t visits, const RewardParams& params) {
  return params.gamma * std::exp(-params.delta * static_cast<double>(visits));
}

// -1 when any occupied cell center lies strictly closer than d_coll to the
// window center, else 0.
inline double collision_penalty(const std::vector<std::int8_t>& occupancy, int n, double resolution,
                                const RewardParams& params) {
  const int c = n / 2;
  const int reach = static_cast<int>(std::ceil(params.d_coll / resolution));
  const double limit = params.d_coll - 1e-9;
  for (int i = std::max(0, c - reach); i <= std::min(n - 1, c + reach); ++i)
    for (int j = std::max(0, c - reach); j <= std::min(n - 1, c + reach); ++j)
      for (int k = std::max(0, c - reach); k <= std::min(n - 1, c + reach); ++k) {
        if (occupancy[(std::size_t(i) * n + j) * n + k] != 1) continue;
        const double d = resolution * std::sqrt(double((i - c) * (i - c) + (j - c) * (j - c) + (k - c) * (k - c)));
        if (d < limit) return -1.0;
      }
  return 0.0;
}

inline double collision_penalty(const LocalContext& local, double resolution, const RewardParams& params) {
  return collision_penalty(local.occupancy, local.n, resolution, params);
}

}  // namespace srli
