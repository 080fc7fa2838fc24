#pragma once

// Reference implementations used only by tests. Each one computes its answer
// along a different route from the library code it checks.

#include "srli/mapping.hpp"
#include "srli/reward.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

namespace srli::oracle {

// Cells crossed by segment a -> b: gather every grid-plane crossing, sort
// them, and sample the cell at the midpoint of each interval.
inline std::vector<CellIndex> segment_cells(const VoxelFrame& frame, const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  const double r = frame.resolution();
  std::vector<double> ts{0.0, 1.0};
  for (int k = 0; k < 3; ++k) {
    if (d[k] == 0.0) continue;
    const double sa = (a[k] - frame.origin()[k]) / r;
    const double sb = (b[k] - frame.origin()[k]) / r;
    for (long long m = static_cast<long long>(std::floor(std::min(sa, sb))) + 1;
         m <= static_cast<long long>(std::floor(std::max(sa, sb))); ++m) {
      const double plane = frame.origin()[k] + m * r;
      const double t = (plane - a[k]) / d[k];
      if (t > 0.0 && t < 1.0) ts.push_back(t);
    }
  }
  std::sort(ts.begin(), ts.end());
  std::vector<CellIndex> cells;
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    if (ts[i + 1] - ts[i] <= 0.0) continue;
    const double mid = 0.5 * (ts[i] + ts[i + 1]);
    const CellIndex c = frame.cell_of(a + mid * d);
    if (cells.empty() || cells.back() != c) cells.push_back(c);
  }
  const CellIndex last = frame.cell_of(b);
  if (cells.empty() || cells.back() != last) cells.push_back(last);
  return cells;
}

// Coverage functional recomputed from the full frame history: each face keeps
// the first frame whose mean focus depth is closest to d_ref.
class LedgerRescan {
 public:
  LedgerRescan(std::uint32_t object_id, std::size_t face_count, double alpha)
      : object_id_(object_id), face_count_(face_count), alpha_(alpha) {}

  void push(const FaceIndexImage& faces, const DepthImage& depth) {
    frames_.push_back({faces, depth});
  }

  double functional(const SegMask& focus, const RewardParams& params, std::size_t frames) const {
    std::vector<double> best(face_count_, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t t = 0; t < frames; ++t) {
      std::map<int, std::pair<double, int>> acc;
      const auto& [faces, depth] = frames_[t];
      for (int v = 0; v < faces.height; ++v)
        for (int u = 0; u < faces.width; ++u) {
          const FaceRef fr = faces.at(u, v);
          if (fr.object != static_cast<int>(object_id_) || !focus.at(u, v)) continue;
          acc[fr.face].first += depth.at(u, v);
          acc[fr.face].second += 1;
        }
      for (const auto& [f, sd] : acc) {
        const double d = sd.first / sd.second;
        if (std::isnan(best[f]) || std::abs(d - params.d_ref) < std::abs(best[f] - params.d_ref)) best[f] = d;
      }
    }
    double total = 0.0;
    for (double d : best)
      if (!std::isnan(d)) total += alpha_ * std::exp(-params.beta * (d - params.d_ref) * (d - params.d_ref));
    return total;
  }

  std::size_t size() const { return frames_.size(); }

 private:
  std::uint32_t object_id_;
  std::size_t face_count_;
  double alpha_;
  std::vector<std::pair<FaceIndexImage, DepthImage>> frames_;
};

// Point-to-mesh distance by scanning every triangle of every object.
inline double mesh_distance(const Scene& scene, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& obj : scene.objects())
    for (std::size_t f = 0; f < obj.mesh.face_count(); ++f) {
      const auto [a, b, c] = obj.mesh.triangle(f);
      const Vec3 q = closest_point_on_triangle(p, obj.to_world(a), obj.to_world(b), obj.to_world(c));
      best = std::min(best, (q - p).norm());
    }
  return best;
}

}  // namespace srli::oracle
