#pragma once

// World-frame tri-state occupancy and visit counts on a sparse voxel grid,
// and the ego-centric n^3 windows (occupancy + spatial visit score) the
// policy observes.

#include "srli/sensors.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <unordered_map>
#include <vector>

namespace srli {

using CellIndex = Eigen::Vector3i;

// Packs a cell index into 64 bits (21 bits per axis, offset binary).
inline std::uint64_t pack_cell(const CellIndex& c) {
  constexpr std::int64_t kOff = 1 << 20;
  return (std::uint64_t(c.x() + kOff) << 42) | (std::uint64_t(c.y() + kOff) << 21) |
         std::uint64_t(c.z() + kOff);
}

// Sparse grid stored as hashed 16^3 blocks. Absent cells read as `Default`.
template <typename T, T Default>
class BlockGrid {
 public:
  static constexpr int kBits = 4;
  static constexpr int kSide = 1 << kBits;
  static constexpr int kMask = kSide - 1;
  using Block = std::array<T, kSide * kSide * kSide>;

  T get(const CellIndex& c) const {
    if (cached(c)) return (*cache_)[offset(c)];
    const CellIndex b = block_of(c);
    Block* blk = lookup(b);
    if (!blk) return Default;
    remember(b, blk);
    return (*blk)[offset(c)];
  }

  T& ref(const CellIndex& c) {
    if (cached(c)) return (*cache_)[offset(c)];
    return (*acquire(block_of(c)))[offset(c)];
  }

  // Blocks overlapping the inclusive cell range [lo, hi] are then found
  // through a flat table instead of the hash. Contents are unchanged.
  void set_dense_region(const CellIndex& lo, const CellIndex& hi) {
    dense_lo_ = CellIndex(lo.x() >> kBits, lo.y() >> kBits, lo.z() >> kBits);
    dense_dim_ = CellIndex(hi.x() >> kBits, hi.y() >> kBits, hi.z() >> kBits) - dense_lo_ + CellIndex::Ones();
    if ((dense_dim_.array() <= 0).any()) dense_dim_.setZero();
    table_.assign(std::size_t(dense_dim_.x()) * dense_dim_.y() * dense_dim_.z(), nullptr);
    for (auto& [key, blk] : blocks_)
      if (Block** slot = dense_slot(unpack_block(key))) *slot = blk.get();
  }

  void clear() {
    blocks_.clear();
    std::fill(table_.begin(), table_.end(), nullptr);
    cache_ = nullptr;
  }

  std::size_t block_count() const { return blocks_.size(); }

  // Visits every allocated block: f(block_origin_cell, block).
  template <typename F>
  void for_each_block(F&& f) const {
    for (const auto& [key, blk] : blocks_) f(CellIndex(unpack_block(key) * kSide), *blk);
  }

 private:
  static CellIndex block_of(const CellIndex& c) { return CellIndex(c.x() >> kBits, c.y() >> kBits, c.z() >> kBits); }
  static CellIndex unpack_block(std::uint64_t key) {
    constexpr std::int64_t kOff = 1 << 20;
    constexpr std::uint64_t m = (1ULL << 21) - 1;
    return CellIndex(int(std::int64_t((key >> 42) & m) - kOff), int(std::int64_t((key >> 21) & m) - kOff),
                     int(std::int64_t(key & m) - kOff));
  }
  static int offset(const CellIndex& c) {
    return ((c.x() & kMask) << (2 * kBits)) | ((c.y() & kMask) << kBits) | (c.z() & kMask);
  }
  // Table slot for block coordinates inside the dense region, else null.
  Block** dense_slot(const CellIndex& b) const {
    if (table_.empty()) return nullptr;
    const CellIndex r = b - dense_lo_;
    if (unsigned(r.x()) >= unsigned(dense_dim_.x()) || unsigned(r.y()) >= unsigned(dense_dim_.y()) ||
        unsigned(r.z()) >= unsigned(dense_dim_.z()))
      return nullptr;
    return const_cast<Block**>(&table_[(std::size_t(r.x()) * dense_dim_.y() + r.y()) * dense_dim_.z() + r.z()]);
  }
  Block* lookup(const CellIndex& b) const {
    if (Block** slot = dense_slot(b)) return *slot;
    auto it = blocks_.find(pack_cell(b));
    return it == blocks_.end() ? nullptr : it->second.get();
  }
  [[gnu::noinline]] Block* acquire(const CellIndex& b) {
    Block* blk = lookup(b);
    if (!blk) {
      auto fresh = std::make_unique<Block>();
      fresh->fill(Default);
      blk = fresh.get();
      blocks_.emplace(pack_cell(b), std::move(fresh));
      if (Block** slot = dense_slot(b)) *slot = blk;
    }
    remember(b, blk);
    return blk;
  }
  bool cached(const CellIndex& c) const {
    return cache_ && (c.x() >> kBits) == cache_b_[0] && (c.y() >> kBits) == cache_b_[1] &&
           (c.z() >> kBits) == cache_b_[2];
  }
  void remember(const CellIndex& b, Block* blk) const {
    cache_b_ = {b.x(), b.y(), b.z()};
    cache_ = blk;
  }

  std::unordered_map<std::uint64_t, std::unique_ptr<Block>> blocks_;
  mutable std::array<int, 3> cache_b_{};
  mutable Block* cache_ = nullptr;
  std::vector<Block*> table_;
  CellIndex dense_lo_ = CellIndex::Zero();
  CellIndex dense_dim_ = CellIndex::Zero();
};

enum class Occupancy : std::int8_t { unknown = -1, free = 0, occupied = 1 };

class VoxelFrame {
 public:
  explicit VoxelFrame(double resolution = 0.1, Vec3 origin = Vec3::Zero())
      : resolution_(resolution), origin_(origin) {
    if (!(resolution > 0)) throw InvalidArgument("voxel resolution must be positive");
  }
  double resolution() const { return resolution_; }
  const Vec3& origin() const { return origin_; }

  CellIndex cell_of(const Vec3& p) const {
    const Vec3 s = (p - origin_) / resolution_;
    return CellIndex(int(std::floor(s.x())), int(std::floor(s.y())), int(std::floor(s.z())));
  }
  Vec3 center_of(const CellIndex& c) const {
    return origin_ + (c.cast<double>() + Vec3::Constant(0.5)) * resolution_;
  }

 private:
  double resolution_;
  Vec3 origin_;
};

class GlobalOccupancy : public VoxelFrame {
 public:
  using VoxelFrame::VoxelFrame;

  Occupancy get(const CellIndex& c) const { return static_cast<Occupancy>(cells_.get(c)); }
  Occupancy at(const Vec3& p) const { return get(cell_of(p)); }
  void set(const CellIndex& c, Occupancy s) { cells_.ref(c) = static_cast<std::int8_t>(s); }
  void clear() { cells_.clear(); }
  // Speeds up access inside `box`; any region stays addressable.
  void reserve_region(const Aabb& box) { cells_.set_dense_region(cell_of(box.lo), cell_of(box.hi)); }

  const BlockGrid<std::int8_t, -1>& cells() const { return cells_; }

 private:
  BlockGrid<std::int8_t, -1> cells_;
};

class VisitGrid : public VoxelFrame {
 public:
  using VoxelFrame::VoxelFrame;

  std::uint32_t count(const CellIndex& c) const { return counts_.get(c); }
  std::uint64_t total() const { return total_; }

  // Returns the cell that was incremented.
  CellIndex record_visit(const Vec3& position) {
    const CellIndex c = cell_of(position);
    ++counts_.ref(c);
    ++total_;
    return c;
  }
  void clear() {
    counts_.clear();
    total_ = 0;
  }
  void reserve_region(const Aabb& box) { counts_.set_dense_region(cell_of(box.lo), cell_of(box.hi)); }

 private:
  BlockGrid<std::uint32_t, 0> counts_;
  std::uint64_t total_ = 0;
};

// Cells crossed by the segment a -> b, in order, ending with the cell that
// contains b (Amanatides & Woo). `f(cell, is_last)` is called per cell.
template <typename F>
void traverse_segment(const VoxelFrame& frame, const Vec3& a, const Vec3& b, F&& f) {
  CellIndex cell = frame.cell_of(a);
  const CellIndex end = frame.cell_of(b);
  const Vec3 d = b - a;
  const double r = frame.resolution();
  std::array<int, 3> step{}, remaining{};
  std::array<double, 3> t_max{}, t_delta{};
  for (int k = 0; k < 3; ++k) {
    step[k] = end[k] > cell[k] ? 1 : (end[k] < cell[k] ? -1 : 0);
    remaining[k] = std::abs(end[k] - cell[k]);
    if (step[k] == 0 || d[k] == 0.0) {
      t_max[k] = std::numeric_limits<double>::infinity();
      t_delta[k] = std::numeric_limits<double>::infinity();
      continue;
    }
    const double boundary = frame.origin()[k] + (cell[k] + (step[k] > 0 ? 1 : 0)) * r;
    t_max[k] = (boundary - a[k]) / d[k];
    t_delta[k] = r / std::abs(d[k]);
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  int cx = cell.x(), cy = cell.y(), cz = cell.z();
  int rx = remaining[0], ry = remaining[1], rz = remaining[2];
  double tx = t_max[0], ty = t_max[1], tz = t_max[2];
  for (int left = rx + ry + rz; left > 0; --left) {
    f(CellIndex(cx, cy, cz), false);
    // Exhausted axes sit at infinity; ties go to the lowest axis.
    if (tx <= ty && tx <= tz) {
      cx += step[0];
      tx = --rx > 0 ? tx + t_delta[0] : inf;
    } else if (ty < tx && ty <= tz) {
      cy += step[1];
      ty = --ry > 0 ? ty + t_delta[1] : inf;
    } else {
      cz += step[2];
      tz = --rz > 0 ? tz + t_delta[2] : inf;
    }
  }
  cell = CellIndex(cx, cy, cz);
  f(cell, true);
}

// Carves free space along every ray, then marks return cells occupied.
// Occupied wins when a cell is both carved and hit within one cloud.
inline void integrate_pointcloud(GlobalOccupancy& map, const Vec3& sensor_origin,
                                 const PointCloud& cloud) {
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const bool is_hit = cloud.hit.empty() || cloud.hit[i];
    traverse_segment(map, sensor_origin, cloud.points[i], [&](const CellIndex& c, bool last) {
      if (!last || !is_hit) map.set(c, Occupancy::free);
    });
  }
  for (std::size_t i = 0; i < cloud.points.size(); ++i)
    if (cloud.hit.empty() || cloud.hit[i]) map.set(map.cell_of(cloud.points[i]), Occupancy::occupied);
}

inline constexpr int kLocalGridSize = 21;

// Ego-centric window. Index (i, j, k) runs along body x (forward), body y
// (left), and z (up); flat index is (i * n + j) * n + k; the robot sits in
// the center cell.
struct LocalContext {
  int n = kLocalGridSize;
  std::vector<std::int8_t> occupancy;  // -1 unknown, 0 free, 1 occupied
  std::vector<double> svs;             // -p ln p per cell
  std::vector<std::uint32_t> counts;   // sampled visit counts
  std::vector<std::uint64_t> sampled;  // packed global cell per local cell
  std::uint64_t visits = 0;            // N_t: visits to distinct global cells in the window

  std::size_t index(int i, int j, int k) const { return (std::size_t(i) * n + j) * n + k; }
  int center() const { return n / 2; }

  void recompute_svs() {
    svs.assign(counts.size(), 0.0);
    if (visits == 0) return;
    const double total = static_cast<double>(visits);
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (counts[c] == 0) continue;
      const double p = counts[c] / total;
      svs[c] = -p * std::log(p);
    }
  }

  // Accounts for one new visit to `cell` without resampling the window.
  void add_visit(const CellIndex& cell) {
    const std::uint64_t key = pack_cell(cell);
    bool touched = false;
    for (std::size_t c = 0; c < sampled.size(); ++c)
      if (sampled[c] == key) {
        ++counts[c];
        touched = true;
      }
    if (touched) {
      ++visits;
      recompute_svs();
    }
  }
};

enum class LocalAlignment { yaw_only, full };

// Samples both global grids at the centers of an n^3 window around the body
// pose (nearest cell, no interpolation).
inline LocalContext extract_local(const GlobalOccupancy& occ, const VisitGrid& visits,
                                  const Pose& body, int n = kLocalGridSize,
                                  LocalAlignment align = LocalAlignment::yaw_only) {
  if (n < 1 || n % 2 == 0) throw InvalidArgument("local grid size must be odd and positive");
  LocalContext ctx;
  ctx.n = n;
  const std::size_t total = std::size_t(n) * n * n;
  ctx.occupancy.resize(total);
  ctx.counts.resize(total);
  ctx.sampled.resize(total);
  const Eigen::Matrix3d R = align == LocalAlignment::yaw_only
                                ? yaw_quat(yaw_of(body.orientation)).toRotationMatrix()
                                : body.orientation.toRotationMatrix();
  const double r = occ.resolution();
  const int c = n / 2;
  const Vec3 ex = R.col(0) * r, ey = R.col(1) * r, ez = R.col(2) * r;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> seen;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Vec3 row = body.position + ex * (i - c) + ey * (j - c);
      for (int k = 0; k < n; ++k) {
        const Vec3 p = row + ez * (k - c);
        const std::size_t idx = ctx.index(i, j, k);
        const CellIndex oc = occ.cell_of(p);
        ctx.occupancy[idx] = static_cast<std::int8_t>(occ.get(oc));
        const CellIndex vc = visits.cell_of(p);
        ctx.sampled[idx] = pack_cell(vc);
        ctx.counts[idx] = visits.count(vc);
        if (ctx.counts[idx]) seen.emplace_back(ctx.sampled[idx], ctx.counts[idx]);
      }
    }
  // Nearest-cell sampling can hit one global cell from two window cells;
  // N_t counts each global cell once.
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  for (const auto& [key, count] : seen) ctx.visits += count;
  ctx.recompute_svs();
  return ctx;
}

// Flat binary snapshot of the known region:
//   "SRLM" | u16 version | f64 origin[3] | f64 resolution | i32 min_cell[3] |
//   u32 dims[3] | i8 cells[dims.x*dims.y*dims.z]  (x fastest, then y, then z)
// All little-endian.
inline constexpr std::uint16_t kMapSnapshotVersion = 1;


inline void write_map_snapshot(std::ostream& out, const GlobalOccupancy& map) {
  CellIndex lo = CellIndex::Constant(std::numeric_limits<int>::max());
  CellIndex hi = CellIndex::Constant(std::numeric_limits<int>::min());
  map.cells().for_each_block([&](const CellIndex& origin, const auto&) {
    lo = lo.cwiseMin(origin);
    hi = hi.cwiseMax(origin + CellIndex::Constant(BlockGrid<std::int8_t, -1>::kSide - 1));
  });
  if (map.cells().block_count() == 0) lo = hi = CellIndex::Zero();
  const CellIndex dims = map.cells().block_count() == 0 ? CellIndex::Zero() : CellIndex(hi - lo + CellIndex::Ones());
  out.write("SRLM", 4);
  put_le<std::uint16_t>(out, kMapSnapshotVersion);
  for (int k = 0; k < 3; ++k) put_le<double>(out, map.origin()[k]);
  put_le<double>(out, map.resolution());
  for (int k = 0; k < 3; ++k) put_le<std::int32_t>(out, lo[k]);
  for (int k = 0; k < 3; ++k) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dims[k]));
  for (int z = 0; z < dims.z(); ++z)
    for (int y = 0; y < dims.y(); ++y)
      for (int x = 0; x < dims.x(); ++x)
        out.put(static_cast<char>(map.get(lo + CellIndex(x, y, z))));
}

inline GlobalOccupancy read_map_snapshot(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "SRLM", 4) != 0)
    throw InvalidArgument("not a map snapshot");
  if (get_le<std::uint16_t>(in) != kMapSnapshotVersion)
    throw InvalidArgument("unsupported map snapshot version");
  Vec3 origin;
  for (int k = 0; k < 3; ++k) origin[k] = get_le<double>(in);
  const double res = get_le<double>(in);
  CellIndex lo;
  for (int k = 0; k < 3; ++k) lo[k] = get_le<std::int32_t>(in);
  std::array<std::uint32_t, 3> dims{};
  for (auto& d : dims) d = get_le<std::uint32_t>(in);
  GlobalOccupancy map(res, origin);
  for (std::uint32_t z = 0; z < dims[2]; ++z)
    for (std::uint32_t y = 0; y < dims[1]; ++y)
      for (std::uint32_t x = 0; x < dims[0]; ++x) {
        char v;
        if (!in.get(v)) throw InvalidArgument("truncated map snapshot");
        if (v != -1) map.set(lo + CellIndex(int(x), int(y), int(z)), static_cast<Occupancy>(v));
      }
  return map;
}

}  // namespace srli
