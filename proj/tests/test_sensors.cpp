#include "srli/sensors.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace srli;

namespace {

Aabb big_box() {
  Aabb b;
  b.grow(Vec3::Constant(-50));
  b.grow(Vec3::Constant(50));
  return b;
}

SceneObject box_object(const Vec3& center, const Vec3& size, int label = 0) {
  SceneObject o;
  o.kind = ObjectKind::box;
  o.dims = size;
  o.mesh = label > 0 ? semantic_target_mesh(size) : box_mesh(size);
  o.position = center;
  o.semantic_label = label;
  return o;
}

// Sphere whose vertex rings sit exactly on the lidar's ray directions, so
// every ray passes through a vertex and sees the true radius.
TriMesh lidar_aligned_sphere(double radius, const LidarModel& lidar) {
  TriMesh m;
  const int rings = lidar.v_rays;
  const int slices = lidar.h_rays;
  m.vertices.emplace_back(0, 0, radius);
  for (const Vec3& d : lidar.rays()) m.vertices.push_back(radius * d);
  m.vertices.emplace_back(0, 0, -radius);
  const int south = static_cast<int>(m.vertices.size()) - 1;
  // rays() runs elevation-major from the bottom; ring r counts from the top.
  auto at = [&](int r, int i) { return 1 + (rings - 1 - r) * slices + (i % slices); };
  for (int i = 0; i < slices; ++i) m.faces.push_back({0, at(0, i), at(0, i + 1)});
  for (int r = 0; r + 1 < rings; ++r)
    for (int i = 0; i < slices; ++i) {
      m.faces.push_back({at(r, i), at(r + 1, i), at(r + 1, i + 1)});
      m.faces.push_back({at(r, i), at(r + 1, i + 1), at(r, i + 1)});
    }
  for (int i = 0; i < slices; ++i) m.faces.push_back({south, at(rings - 1, i + 1), at(rings - 1, i)});
  return m;
}

}  // namespace

TEST(CameraModel, DefaultsAndValidation) {
  CameraModel cam;
  EXPECT_EQ(cam.width, 96);
  EXPECT_EQ(cam.height, 54);
  cam.validate();
  // Edge pixel rays sit half a pixel inside the image plane edge.
  const Vec3 left = cam.ray(0, 27);
  EXPECT_NEAR(left.y() / left.x(), 47.5 / 48.0 * std::tan(43.5 * kPi / 180), 1e-12);
  EXPECT_NEAR(cam.fx(), 48.0 / std::tan(43.5 * kPi / 180), 1e-12);
  cam.h_fov_deg = 180;
  EXPECT_THROW(cam.validate(), InvalidArgument);
  cam = CameraModel{};
  cam.width = 0;
  EXPECT_THROW(cam.validate(), InvalidArgument);
}

TEST(CameraModel, ProjectInvertsRay) {
  CameraModel cam;
  for (int v : {0, 13, 40, 53})
    for (int u : {0, 20, 77, 95}) {
      auto px = cam.project(cam.ray(u, v) * 3.0);
      ASSERT_TRUE(px);
      EXPECT_NEAR(px->first, u + 0.5, 1e-9);
      EXPECT_NEAR(px->second, v + 0.5, 1e-9);
    }
}

TEST(Render, EmptySpaceGivesZeroImages) {
  const Scene s({box_object(Vec3(-5, 0, 0), Vec3(1, 1, 1), 1)}, big_box());
  CameraModel cam;
  const RenderOutput r = render(s, cam, Pose{}, 1);
  for (float d : r.depth.data) EXPECT_EQ(d, 0.0f);
  for (auto m : r.mask.data) EXPECT_EQ(m, 0);
  for (const auto& f : r.faces.data) EXPECT_FALSE(f.valid());
}

TEST(Render, PerpendicularWallRange) {
  const Scene s({box_object(Vec3(2.5, 0, 0), Vec3(1, 20, 20))}, big_box());
  CameraModel odd;
  odd.width = 97;
  odd.height = 55;
  const RenderOutput r = render(s, odd, Pose{}, 1);
  EXPECT_NEAR(r.depth.at(48, 27), 2.0, 1e-6);

  CameraModel cam;
  const RenderOutput r2 = render(s, cam, Pose{}, 1);
  for (int v : {26, 27})
    for (int u : {47, 48}) EXPECT_NEAR(r2.depth.at(u, v), 2.0, 1e-3);
  // Euclidean range grows off-axis.
  EXPECT_GT(r2.depth.at(0, 0), r2.depth.at(48, 27));
}

TEST(Render, ImagesAreMutuallyConsistent) {
  const Scene s({box_object(Vec3(2.5, 0, 0), Vec3(1, 1, 1), 1), box_object(Vec3(4, 1, 0), Vec3(1, 1, 3)),
                 box_object(Vec3(6, 0, 0), Vec3(1, 30, 30))},
                big_box());
  CameraModel cam;
  Pose pose;
  pose.orientation = yaw_quat(0.1);
  const RenderOutput r = render(s, cam, pose, 1);
  std::size_t mask_px = 0, semantic_px = 0;
  for (std::size_t i = 0; i < r.depth.size(); ++i) {
    mask_px += r.mask.data[i];
    semantic_px += r.faces.data[i].valid() && s.label_of(r.faces.data[i].object) == 1;
    EXPECT_EQ(r.depth.data[i] == 0.0f, !r.faces.data[i].valid());
    EXPECT_EQ(r.mask.data[i] == 1, r.faces.data[i].valid() && r.faces.data[i].object == 0);
    EXPECT_GE(r.depth.data[i], 0.0f);
    EXPECT_LE(r.depth.data[i], cam.max_range);
  }
  EXPECT_EQ(mask_px, semantic_px);
  EXPECT_GT(mask_px, 100u);
  // The semantic is centered: the center pixel sees it.
  EXPECT_EQ(r.mask.at(48, 27), 1);
  // A different active label yields an empty mask over the same geometry.
  const RenderOutput other = render(s, cam, pose, 2);
  for (auto m : other.mask.data) EXPECT_EQ(m, 0);
  EXPECT_EQ(other.depth.data, r.depth.data);
}

TEST(Render, RespectsMaxRange) {
  const Scene s({box_object(Vec3(12, 0, 0), Vec3(1, 40, 40))}, big_box());
  CameraModel cam;
  const RenderOutput r = render(s, cam, Pose{}, 0);
  for (float d : r.depth.data) EXPECT_EQ(d, 0.0f);
  cam.max_range = 20;
  EXPECT_NEAR(render(s, cam, Pose{}, 0).depth.at(48, 27), 11.5, 0.01);
}

TEST(Lidar, SphereRoomReturnsRadius) {
  LidarModel lidar;
  SceneObject shell;
  shell.kind = ObjectKind::imported;
  shell.mesh = lidar_aligned_sphere(3.0, lidar);
  const Scene s({shell}, big_box());
  const PointCloud pc = lidar_scan(s, lidar, Pose{});
  ASSERT_EQ(pc.points.size(), std::size_t(lidar.h_rays * lidar.v_rays));
  for (std::size_t i = 0; i < pc.points.size(); ++i) {
    EXPECT_EQ(pc.hit[i], 1);
    EXPECT_NEAR(pc.points[i].norm(), 3.0, 1e-6);
  }
}

TEST(Lidar, VerticalFieldOfView) {
  LidarModel lidar;
  const double lim = std::sin(45.0 * kPi / 180.0) + 1e-12;
  double top = -1;
  for (const Vec3& r : lidar.rays()) {
    EXPECT_LE(std::abs(r.z()), lim);
    EXPECT_NEAR(r.norm(), 1.0, 1e-12);
    top = std::max(top, r.z());
  }
  EXPECT_NEAR(top, std::sin(kPi / 4), 1e-12);
  lidar.h_rays = 0;
  EXPECT_THROW(lidar.validate(), InvalidArgument);
}

TEST(Lidar, ScanMatchesPerRayBruteForce) {
  RoomSpec spec;
  spec.seed = 17;
  spec.obstacle_count = 9;
  const Scene s = generate_room(spec);
  LidarModel lidar;
  Pose pose;
  pose.position = Vec3(spec.length / 2, spec.width / 2, spec.height / 2);
  pose.orientation = yaw_quat(0.7);
  const PointCloud pc = lidar_scan(s, lidar, pose);
  const auto rays = lidar.rays();
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const Vec3 d = pose.orientation * rays[i];
    auto h = s.raycast_brute_force(pose.position, d, lidar.max_range);
    ASSERT_EQ(bool(pc.hit[i]), h.has_value());
    const Vec3 expected = h ? h->point : Vec3(pose.position + lidar.max_range * d);
    EXPECT_NEAR((pc.points[i] - expected).norm(), 0.0, 1e-12);
  }
}

TEST(DepthNoise, ZeroSigmaIsIdentity) {
  DepthImage img(4, 3, 1.5f);
  img.at(1, 1) = 0.0f;
  Rng rng(1);
  EXPECT_EQ(apply_depth_noise(img, rng, 0.0).data, img.data);
  EXPECT_THROW(apply_depth_noise(img, rng, -0.1), InvalidArgument);
}

TEST(DepthNoise, StandardDeviationScalesWithDepth) {
  const int n = 100000;
  DepthImage img(n, 1, 2.0f);
  Rng rng(2024);
  const DepthImage noisy = apply_depth_noise(img, rng, 0.01);
  double mean = 0, sq = 0;
  for (float d : noisy.data) mean += d;
  mean /= n;
  for (float d : noisy.data) sq += (d - mean) * (d - mean);
  const double sd = std::sqrt(sq / (n - 1));
  EXPECT_NEAR(sd, 0.02, 0.02 * 0.05);
  EXPECT_NEAR(mean, 2.0, 0.001);
}

TEST(DepthNoise, InvalidPixelsStayZeroAndDeterministic) {
  DepthImage img(50, 50, 0.0f);
  for (int u = 0; u < 50; ++u) img.at(u, 10) = 1.0f;
  Rng a(5), b(5);
  const DepthImage na = apply_depth_noise(img, a, 0.5);
  const DepthImage nb = apply_depth_noise(img, b, 0.5);
  EXPECT_EQ(na.data, nb.data);
  for (int v = 0; v < 50; ++v)
    for (int u = 0; u < 50; ++u) {
      if (v == 10) {
        EXPECT_GE(na.at(u, v), 0.0f);
      } else {
        EXPECT_EQ(na.at(u, v), 0.0f);
      }
    }
}

TEST(MaskDropout, Extremes) {
  SegMask m(10, 10, 1);
  Rng rng(3);
  EXPECT_EQ(apply_mask_dropout(m, rng, 0.0).data, m.data);
  for (auto x : apply_mask_dropout(m, rng, 1.0).data) EXPECT_EQ(x, 0);
}

TEST(DebugImages, WritesNetpbmHeaders) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "srli_img_test";
  fs::create_directories(dir);
  DepthImage d(96, 54, 5.0f);
  SegMask m(96, 54, 1);
  write_depth_pgm((dir / "d.pgm").string(), d, 10.0);
  write_mask_pbm((dir / "m.pbm").string(), m);
  std::ifstream pd(dir / "d.pgm", std::ios::binary), pm(dir / "m.pbm", std::ios::binary);
  std::string magic;
  pd >> magic;
  EXPECT_EQ(magic, "P5");
  pm >> magic;
  EXPECT_EQ(magic, "P4");
  EXPECT_EQ(fs::file_size(dir / "d.pgm"), std::string("P5\n96 54\n255\n").size() + 96 * 54);
  EXPECT_EQ(fs::file_size(dir / "m.pbm"), std::string("P4\n96 54\n").size() + 12 * 54);
  fs::remove_all(dir);
}
