#include "srli/mapping.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

using namespace srli;

namespace {

PointCloud single_ray(const Vec3& origin, const Vec3& end, bool hit = true) {
  PointCloud pc;
  pc.origin = origin;
  pc.points = {end};
  pc.hit = {std::uint8_t(hit)};
  return pc;
}

std::vector<CellIndex> dda_cells(const VoxelFrame& f, const Vec3& a, const Vec3& b) {
  std::vector<CellIndex> out;
  traverse_segment(f, a, b, [&](const CellIndex& c, bool) { out.push_back(c); });
  return out;
}

}  // namespace

TEST(Integrate, SingleRayCarvesThenMarksHit) {
  GlobalOccupancy map(0.1);
  integrate_pointcloud(map, Vec3::Zero(), single_ray(Vec3::Zero(), Vec3(1, 0, 0)));
  for (int x = 0; x < 10; ++x) EXPECT_EQ(map.get(CellIndex(x, 0, 0)), Occupancy::free) << x;
  EXPECT_EQ(map.get(CellIndex(10, 0, 0)), Occupancy::occupied);
  EXPECT_EQ(map.at(Vec3(1.0, 0, 0)), Occupancy::occupied);
  EXPECT_EQ(map.get(CellIndex(11, 0, 0)), Occupancy::unknown);
  EXPECT_EQ(map.get(CellIndex(-1, 0, 0)), Occupancy::unknown);
  EXPECT_EQ(map.get(CellIndex(5, 1, 0)), Occupancy::unknown);
  // The carved cells are exactly the oracle's cells before the hit.
  const auto cells = oracle::segment_cells(map, Vec3::Zero(), Vec3(1, 0, 0));
  ASSERT_EQ(cells.size(), 11u);
  for (int x = 0; x <= 10; ++x) EXPECT_EQ(cells[x], CellIndex(x, 0, 0));
}

TEST(Integrate, EmptyCloudLeavesMapUnchanged) {
  GlobalOccupancy map(0.1);
  integrate_pointcloud(map, Vec3::Zero(), PointCloud{});
  EXPECT_EQ(map.cells().block_count(), 0u);
}

TEST(Integrate, OpposingRaysCarveCorridor) {
  GlobalOccupancy map(0.1);
  const Vec3 o(0.05, 0.05, 0.05);
  PointCloud pc;
  pc.origin = o;
  pc.points = {Vec3(1.05, 0.05, 0.05), Vec3(-0.95, 0.05, 0.05)};
  pc.hit = {1, 1};
  integrate_pointcloud(map, o, pc);
  EXPECT_EQ(map.get(CellIndex(10, 0, 0)), Occupancy::occupied);
  EXPECT_EQ(map.get(CellIndex(-10, 0, 0)), Occupancy::occupied);
  for (int x = -9; x <= 9; ++x) EXPECT_EQ(map.get(CellIndex(x, 0, 0)), Occupancy::free) << x;
}

TEST(Integrate, MaxRangeMissCarvesWholeRay) {
  GlobalOccupancy map(0.1);
  integrate_pointcloud(map, Vec3::Zero(), single_ray(Vec3::Zero(), Vec3(0, 0.55, 0), false));
  for (int y = 0; y <= 5; ++y) EXPECT_EQ(map.get(CellIndex(0, y, 0)), Occupancy::free);
}

TEST(Integrate, OccupiedWinsWithinOneCloud) {
  GlobalOccupancy map(0.1);
  PointCloud pc;
  pc.origin = Vec3(0.05, 0.05, 0.05);
  pc.points = {Vec3(0.55, 0.05, 0.05), Vec3(1.05, 0.05, 0.05)};  // second ray crosses the first's hit
  pc.hit = {1, 1};
  integrate_pointcloud(map, pc.origin, pc);
  EXPECT_EQ(map.get(CellIndex(5, 0, 0)), Occupancy::occupied);
  // A later cloud carving through it frees it again.
  integrate_pointcloud(map, pc.origin, single_ray(pc.origin, Vec3(1.05, 0.05, 0.05)));
  EXPECT_EQ(map.get(CellIndex(5, 0, 0)), Occupancy::free);
}

TEST(Traverse, MatchesPlaneCrossingOracle) {
  Rng rng(77);
  for (double res : {0.1, 0.25}) {
    VoxelFrame frame(res, Vec3(0.013, -0.2, 0.05));
    for (int i = 0; i < 1000; ++i) {
      const Vec3 a(uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -3, 3));
      const Vec3 b = a + Vec3(uniform(rng, -4, 4), uniform(rng, -4, 4), uniform(rng, -4, 4));
      EXPECT_EQ(dda_cells(frame, a, b), oracle::segment_cells(frame, a, b)) << "ray " << i;
    }
  }
}

TEST(Traverse, DegenerateSegments) {
  VoxelFrame frame(0.1);
  const auto same = dda_cells(frame, Vec3(0.05, 0.05, 0.05), Vec3(0.07, 0.02, 0.09));
  ASSERT_EQ(same.size(), 1u);
  const auto axis = dda_cells(frame, Vec3(0.05, 0.05, 0.05), Vec3(0.05, 0.05, -0.55));
  ASSERT_EQ(axis.size(), 7u);
  EXPECT_EQ(axis.back(), CellIndex(0, 0, -6));
}

TEST(Integrate, TriStateClosure) {
  GlobalOccupancy map(0.1);
  Rng rng(8);
  std::set<std::uint64_t> known;
  for (int round = 0; round < 20; ++round) {
    PointCloud pc;
    pc.origin = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    for (int i = 0; i < 50; ++i) {
      pc.points.push_back(pc.origin + Vec3(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2)));
      pc.hit.push_back(rng() % 2);
    }
    integrate_pointcloud(map, pc.origin, pc);
    map.cells().for_each_block([&](const CellIndex& origin, const auto& blk) {
      for (std::size_t i = 0; i < blk.size(); ++i) {
        EXPECT_TRUE(blk[i] == -1 || blk[i] == 0 || blk[i] == 1);
        const CellIndex c = origin + CellIndex(int(i >> 8), int((i >> 4) & 15), int(i & 15));
        if (blk[i] != -1) known.insert(pack_cell(c));
      }
    });
    for (std::uint64_t k : known) {
      constexpr std::int64_t off = 1 << 20;
      constexpr std::uint64_t m = (1ULL << 21) - 1;
      const CellIndex c(int(std::int64_t((k >> 42) & m) - off), int(std::int64_t((k >> 21) & m) - off),
                        int(std::int64_t(k & m) - off));
      EXPECT_NE(map.get(c), Occupancy::unknown);
    }
  }
  EXPECT_GT(known.size(), 100u);
}

TEST(Visits, Counting) {
  VisitGrid visits(0.1);
  for (int i = 0; i < 10; ++i) visits.record_visit(Vec3(0.31, 0.42, 0.53));
  EXPECT_EQ(visits.count(visits.cell_of(Vec3(0.31, 0.42, 0.53))), 10u);

  VisitGrid line(0.1);
  for (int i = 0; i < 10; ++i) line.record_visit(Vec3(0.05 + 0.1 * i, 0.05, 0.05));
  for (int i = 0; i < 10; ++i) EXPECT_EQ(line.count(CellIndex(i, 0, 0)), 1u);
  EXPECT_EQ(line.total(), 10u);

  VisitGrid two(0.1);
  two.record_visit(Vec3(0.01, 0.01, 0.01));
  two.record_visit(Vec3(0.09, 0.09, 0.09));
  EXPECT_EQ(two.count(CellIndex(0, 0, 0)), 2u);
}

TEST(ExtractLocal, RotatedSampling) {
  GlobalOccupancy occ(0.1);
  VisitGrid visits(0.1);
  const Vec3 robot(0.05, 0.05, 0.05);
  occ.set(occ.cell_of(robot + Vec3(0, 1.0, 0)), Occupancy::occupied);
  Pose pose{robot, yaw_quat(kPi / 2)};
  const LocalContext ctx = extract_local(occ, visits, pose);
  ASSERT_EQ(ctx.occupancy.size(), 9261u);
  EXPECT_EQ(ctx.occupancy[ctx.index(20, 10, 10)], 1);
  int occupied = 0;
  for (auto v : ctx.occupancy) occupied += v == 1;
  EXPECT_EQ(occupied, 1);
  // Unyawed, the same cell shows up on the +y (left) axis.
  const LocalContext flat = extract_local(occ, visits, Pose{robot, Quat::Identity()});
  EXPECT_EQ(flat.occupancy[flat.index(10, 20, 10)], 1);
  EXPECT_EQ(flat.occupancy[flat.index(10, 10, 10)], -1);
}

TEST(ExtractLocal, SvsEdgeCases) {
  GlobalOccupancy occ(0.1);
  VisitGrid visits(0.1);
  const Pose pose{Vec3(0.05, 0.05, 0.05), Quat::Identity()};
  LocalContext ctx = extract_local(occ, visits, pose);
  EXPECT_EQ(ctx.visits, 0u);
  for (double s : ctx.svs) EXPECT_EQ(s, 0.0);

  for (int i = 0; i < 7; ++i) visits.record_visit(Vec3(0.35, 0.05, 0.05));
  ctx = extract_local(occ, visits, pose);
  EXPECT_EQ(ctx.visits, 7u);
  for (double s : ctx.svs) EXPECT_EQ(s, 0.0);
}

TEST(ExtractLocal, UniformVisitsGiveLogMOverM) {
  for (int m : {2, 3, 10, 50}) {
    GlobalOccupancy occ(0.1);
    VisitGrid visits(0.1);
    for (int i = 0; i < m; ++i)
      for (int rep = 0; rep < 3; ++rep) visits.record_visit(Vec3(-0.45 + 0.1 * (i % 10), 0.05 + 0.1 * (i / 10), 0.05));
    const LocalContext ctx = extract_local(occ, visits, Pose{Vec3(0.05, 0.05, 0.05), Quat::Identity()});
    EXPECT_EQ(ctx.visits, std::uint64_t(3 * m));
    int nonzero = 0;
    std::uint64_t sum = 0;
    for (std::size_t c = 0; c < ctx.svs.size(); ++c) {
      sum += ctx.counts[c];
      EXPECT_LE(ctx.svs[c], std::exp(-1.0) + 1e-15);
      if (ctx.counts[c] == 0) continue;
      ++nonzero;
      EXPECT_NEAR(ctx.svs[c], std::log(double(m)) / m, 1e-12);
    }
    EXPECT_EQ(nonzero, m);
    EXPECT_EQ(sum, ctx.visits);
  }
}

TEST(ExtractLocal, IncrementalVisitMatchesResampling) {
  GlobalOccupancy occ(0.1);
  VisitGrid visits(0.1);
  Rng rng(12);
  Vec3 p(0.3, 0.2, 1.0);
  for (int step = 0; step < 200; ++step) {
    p += Vec3(uniform(rng, -0.08, 0.08), uniform(rng, -0.08, 0.08), uniform(rng, -0.03, 0.03));
    const Pose pose{p, yaw_quat(uniform(rng, -kPi, kPi))};
    LocalContext ctx = extract_local(occ, visits, pose);
    ctx.add_visit(visits.record_visit(p));
    const LocalContext fresh = extract_local(occ, visits, pose);
    ASSERT_EQ(ctx.visits, fresh.visits);
    EXPECT_EQ(ctx.counts, fresh.counts);
    for (std::size_t c = 0; c < ctx.svs.size(); ++c) EXPECT_NEAR(ctx.svs[c], fresh.svs[c], 1e-15);
  }
}

TEST(ExtractLocal, RejectsEvenWindow) {
  GlobalOccupancy occ(0.1);
  VisitGrid visits(0.1);
  EXPECT_THROW(extract_local(occ, visits, Pose{}, 20), InvalidArgument);
}

TEST(MapSnapshot, RoundTrip) {
  GlobalOccupancy map(0.1, Vec3(0.5, -0.25, 0));
  Rng rng(3);
  PointCloud pc;
  pc.origin = Vec3(1, 1, 1);
  for (int i = 0; i < 200; ++i) {
    pc.points.push_back(pc.origin + Vec3(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -1, 1)));
    pc.hit.push_back(1);
  }
  integrate_pointcloud(map, pc.origin, pc);
  std::stringstream buf;
  write_map_snapshot(buf, map);
  const GlobalOccupancy back = read_map_snapshot(buf);
  EXPECT_EQ(back.resolution(), map.resolution());
  EXPECT_EQ(back.origin(), map.origin());
  for (int i = 0; i < 5000; ++i) {
    const CellIndex c(int(rng() % 60) - 20, int(rng() % 60) - 20, int(rng() % 40) - 10);
    EXPECT_EQ(back.get(c), map.get(c));
  }
  std::stringstream bad("XXXX");
  EXPECT_THROW(read_map_snapshot(bad), InvalidArgument);
}
