#pragma once

// Bounding volume hierarchy over a triangle soup with (object, face) payload.
// Answers nearest-hit ray queries and nearest-surface distance queries.

#include "srli/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace srli {

struct Triangle {
  Vec3 a, b, c;
  std::uint32_t object_id = 0;
  std::uint32_t face_id = 0;
};

struct RayHit {
  double t = std::numeric_limits<double>::infinity();
  std::uint32_t object_id = 0;
  std::uint32_t face_id = 0;
};

// Strict ordering used for tie-breaks: smallest t, then (object, face).
inline bool hit_before(const RayHit& x, const RayHit& y) {
  if (x.t != y.t) return x.t < y.t;
  if (x.object_id != y.object_id) return x.object_id < y.object_id;
  return x.face_id < y.face_id;
}

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void grow(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void grow(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  bool empty() const { return lo.x() > hi.x(); }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
  double half_area() const {
    if (empty()) return 0.0;
    const Vec3 e = extent();
    return e.x() * e.y() + e.y() * e.z() + e.z() * e.x();
  }
  bool contains(const Vec3& p, double margin = 0.0) const {
    return (p.array() >= lo.array() - margin).all() && (p.array() <= hi.array() + margin).all();
  }
  bool overlaps(const Aabb& o) const {
    return (lo.array() <= o.hi.array()).all() && (o.lo.array() <= hi.array()).all();
  }
  double squared_distance(const Vec3& p) const {
    const Vec3 d = (lo - p).cwiseMax(Vec3::Zero()).cwiseMax(p - hi);
    return d.squaredNorm();
  }
};

// Two-sided Moller-Trumbore. Returns the ray parameter in (t_min, t_max] or
// nothing.
inline std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir,
                                                const Triangle& tri, double t_max,
                                                double t_min = 1e-9) {
  const Vec3 e1 = tri.b - tri.a;
  const Vec3 e2 = tri.c - tri.a;
  const Vec3 pv = dir.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < 1e-14) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 tv = origin - tri.a;
  // Small barycentric slack so rays through shared edges and vertices of a
  // closed mesh cannot slip between neighbouring triangles.
  constexpr double eps = 1e-9;
  const double u = tv.dot(pv) * inv;
  if (u < -eps || u > 1.0 + eps) return std::nullopt;
  const Vec3 qv = tv.cross(e1);
  const double v = dir.dot(qv) * inv;
  if (v < -eps || u + v > 1.0 + eps) return std::nullopt;
  const double t = e2.dot(qv) * inv;
  if (t <= t_min || t > t_max) return std::nullopt;
  return t;
}

// Closest point on a triangle to p (Ericson, Real-Time Collision Detection 5.1.5).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

// Reference answer: tests every triangle.
inline std::optional<RayHit> brute_force_raycast(std::span<const Triangle> tris, const Vec3& origin,
                                                 const Vec3& dir, double t_max) {
  std::optional<RayHit> best;
  for (const auto& tri : tris) {
    if (auto t = intersect_triangle(origin, dir, tri, t_max)) {
      RayHit h{*t, tri.object_id, tri.face_id};
      if (!best || hit_before(h, *best)) best = h;
    }
  }
  return best;
}

class Bvh {
 public:
  Bvh() = default;

  explicit Bvh(std::vector<Triangle> tris) : tris_(std::move(tris)) {
    if (tris_.empty()) return;
    std::vector<Item> items(tris_.size());
    for (std::size_t i = 0; i < tris_.size(); ++i) {
      items[i].index = static_cast<std::uint32_t>(i);
      items[i].box.grow(tris_[i].a);
      items[i].box.grow(tris_[i].b);
      items[i].box.grow(tris_[i].c);
      items[i].centroid = items[i].box.center();
    }
    nodes_.reserve(2 * tris_.size());
    nodes_.emplace_back();
    build(0, items, 0, items.size());
    std::vector<Triangle> ordered;
    ordered.reserve(tris_.size());
    for (const auto& it : items) ordered.push_back(tris_[it.index]);
    tris_ = std::move(ordered);
  }

  std::span<const Triangle> triangles() const { return tris_; }
  std::size_t node_count() const { return nodes_.size(); }
  Aabb bounds() const { return nodes_.empty() ? Aabb{} : nodes_[0].box; }

  std::optional<RayHit> raycast(const Vec3& origin, const Vec3& dir, double t_max) const {
    std::optional<RayHit> best;
    if (nodes_.empty()) return best;
    const SlabRay ray(origin, dir);
    double best_t = t_max;
    std::array<std::uint32_t, 64> stack;
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      const Node& n = nodes_[stack[--sp]];
      if (n.count > 0) {
        for (std::uint32_t i = n.first; i < n.first + n.count; ++i) {
          const Triangle& tri = tris_[i];
          if (auto t = intersect_triangle(origin, dir, tri, best_t)) {
            RayHit h{*t, tri.object_id, tri.face_id};
            if (!best || hit_before(h, *best)) {
              best = h;
              best_t = h.t;
            }
          }
        }
        continue;
      }
      // Boxes are tested against a slightly inflated bound so that hits tied
      // with the current best are never pruned.
      const double limit = best_t + 1e-9 * (1.0 + best_t);
      const std::uint32_t l = n.first, r = n.first + 1;
      const double tl = slab_entry(nodes_[l].box, ray, limit);
      const double tr = slab_entry(nodes_[r].box, ray, limit);
      // Push the farther child first so the nearer one is processed next.
      if (tl <= tr) {
        if (tr <= limit) stack[sp++] = r;
        if (tl <= limit) stack[sp++] = l;
      } else {
        if (tl <= limit) stack[sp++] = l;
        if (tr <= limit) stack[sp++] = r;
      }
    }
    return best;
  }

  struct NearestResult {
    double distance = std::numeric_limits<double>::infinity();
    Vec3 point = Vec3::Zero();
    std::uint32_t object_id = 0;
    std::uint32_t face_id = 0;
  };

  // Nearest surface point to p; distance is infinite when nothing lies within max_distance.
  NearestResult nearest(const Vec3& p,
                        double max_distance = std::numeric_limits<double>::infinity()) const {
    NearestResult res;
    if (nodes_.empty()) return res;
    double best2 = max_distance * max_distance;
    std::array<std::uint32_t, 64> stack;
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      const Node& n = nodes_[stack[--sp]];
      if (n.box.squared_distance(p) > best2) continue;
      if (n.count > 0) {
        for (std::uint32_t i = n.first; i < n.first + n.count; ++i) {
          const Triangle& tri = tris_[i];
          const Vec3 q = closest_point_on_triangle(p, tri.a, tri.b, tri.c);
          const double d2 = (q - p).squaredNorm();
          if (d2 < best2 || (d2 == best2 && std::isinf(res.distance))) {
            best2 = d2;
            res.distance = std::sqrt(d2);
            res.point = q;
            res.object_id = tri.object_id;
            res.face_id = tri.face_id;
          }
        }
        continue;
      }
      const double dl = nodes_[n.first].box.squared_distance(p);
      const double dr = nodes_[n.first + 1].box.squared_distance(p);
      if (dl <= dr) {
        stack[sp++] = n.first + 1;
        stack[sp++] = n.first;
      } else {
        stack[sp++] = n.first;
        stack[sp++] = n.first + 1;
      }
    }
    return res;
  }

 private:
  struct Node {
    Aabb box;
    std::uint32_t first = 0;  // child index (inner) or first triangle (leaf)
    std::uint32_t count = 0;  // 0 for inner nodes
  };
  struct Item {
    Aabb box;
    Vec3 centroid;
    std::uint32_t index;
  };

  static constexpr std::size_t kLeafSize = 4;
  static constexpr int kBins = 12;

  struct SlabRay {
    double o[3], inv[3];
    bool flat[3];  // direction component is zero
    bool neg[3];
    SlabRay(const Vec3& origin, const Vec3& dir) {
      for (int k = 0; k < 3; ++k) {
        o[k] = origin[k];
        flat[k] = dir[k] == 0.0;
        inv[k] = 1.0 / dir[k];
        neg[k] = inv[k] < 0;
      }
    }
  };

  static double slab_entry(const Aabb& b, const SlabRay& r, double t_max) {
    double t0 = 0.0, t1 = t_max;
    for (int k = 0; k < 3; ++k) {
      if (r.flat[k]) {
        if (r.o[k] < b.lo[k] || r.o[k] > b.hi[k]) return std::numeric_limits<double>::infinity();
        continue;
      }
      const double ta = ((r.neg[k] ? b.hi[k] : b.lo[k]) - r.o[k]) * r.inv[k];
      const double tb = ((r.neg[k] ? b.lo[k] : b.hi[k]) - r.o[k]) * r.inv[k];
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
    }
    // Slack keeps hits lying exactly on a box face.
    return t0 <= t1 + 1e-9 * (1.0 + t1) ? t0 : std::numeric_limits<double>::infinity();
  }

  void build(std::uint32_t node, std::vector<Item>& items, std::size_t begin, std::size_t end) {
    Aabb box, cbox;
    for (std::size_t i = begin; i < end; ++i) {
      box.grow(items[i].box);
      cbox.grow(items[i].centroid);
    }
    nodes_[node].box = box;
    const std::size_t n = end - begin;
    auto make_leaf = [&] {
      nodes_[node].first = static_cast<std::uint32_t>(begin);
      nodes_[node].count = static_cast<std::uint32_t>(n);
    };
    if (n <= kLeafSize) return make_leaf();

    // Binned SAH over the widest centroid axis.
    const Vec3 ext = cbox.extent();
    int axis = 0;
    if (ext.y() > ext[axis]) axis = 1;
    if (ext.z() > ext[axis]) axis = 2;
    std::size_t mid = begin + n / 2;
    if (ext[axis] > 0.0) {
      std::array<Aabb, kBins> bins;
      std::array<std::size_t, kBins> counts{};
      const double scale = kBins / ext[axis];
      auto bin_of = [&](const Item& it) {
        return std::min(kBins - 1, static_cast<int>((it.centroid[axis] - cbox.lo[axis]) * scale));
      };
      for (std::size_t i = begin; i < end; ++i) {
        const int b = bin_of(items[i]);
        bins[b].grow(items[i].box);
        ++counts[b];
      }
      std::array<double, kBins - 1> cost{};
      Aabb acc;
      std::size_t cnt = 0;
      for (int i = 0; i < kBins - 1; ++i) {
        acc.grow(bins[i]);
        cnt += counts[i];
        cost[i] = acc.half_area() * double(cnt);
      }
      acc = Aabb{};
      cnt = 0;
      for (int i = kBins - 1; i > 0; --i) {
        acc.grow(bins[i]);
        cnt += counts[i];
        cost[i - 1] += acc.half_area() * double(cnt);
      }
      int best = 0;
      for (int i = 1; i < kBins - 1; ++i)
        if (cost[i] < cost[best]) best = i;
      auto it = std::partition(items.begin() + begin, items.begin() + end,
                               [&](const Item& x) { return bin_of(x) <= best; });
      mid = static_cast<std::size_t>(it - items.begin());
    }
    if (mid == begin || mid == end) {
      mid = begin + n / 2;
      std::nth_element(items.begin() + begin, items.begin() + mid, items.begin() + end,
                       [&](const Item& x, const Item& y) {
                         if (x.centroid[axis] != y.centroid[axis])
                           return x.centroid[axis] < y.centroid[axis];
                         return x.index < y.index;
                       });
    }
    const auto left = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    nodes_.emplace_back();
    nodes_[node].first = left;
    nodes_[node].count = 0;
    build(left, items, begin, mid);
    build(left + 1, items, mid, end);
  }

  std::vector<Triangle> tris_;
  std::vector<Node> nodes_;
};

}  // namespace srli
