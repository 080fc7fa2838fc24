#include "srli/scene.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <set>

using namespace srli;

namespace {

// Edges keyed on welded vertex positions; a closed surface uses each edge
// exactly twice.
bool closed_surface(const TriMesh& m) {
  auto key = [](const Vec3& v) {
    return std::array<long long, 3>{std::llround(v.x() * 1e6), std::llround(v.y() * 1e6),
                                    std::llround(v.z() * 1e6)};
  };
  std::map<std::pair<std::array<long long, 3>, std::array<long long, 3>>, int> edges;
  for (std::size_t f = 0; f < m.face_count(); ++f) {
    const auto t = m.triangle(f);
    for (int e = 0; e < 3; ++e) {
      auto a = key(t[e]), b = key(t[(e + 1) % 3]);
      if (b < a) std::swap(a, b);
      ++edges[{a, b}];
    }
  }
  for (const auto& [e, n] : edges)
    if (n != 2) return false;
  return true;
}

Scene single_box_scene(const Vec3& center, const Vec3& size, int label = 0) {
  SceneObject o;
  o.kind = ObjectKind::box;
  o.dims = size;
  o.mesh = box_mesh(size);
  o.position = center;
  o.semantic_label = label;
  Aabb interior;
  interior.grow(Vec3::Constant(-10));
  interior.grow(Vec3::Constant(10));
  return Scene({o}, interior);
}

}  // namespace

TEST(PrimitiveMesh, UnitCube) {
  const TriMesh m = box_mesh(Vec3(1, 1, 1));
  EXPECT_EQ(m.face_count(), 12u);
  EXPECT_NEAR(m.surface_area(), 6.0, 1e-12);
  EXPECT_TRUE(closed_surface(m));
}

TEST(PrimitiveMesh, SemanticTargetHasSixtyFaces) {
  for (const Vec3& size : {Vec3(1, 1, 1), Vec3(0.5, 1.4, 0.7), Vec3(2, 0.3, 1.1)}) {
    const TriMesh m = semantic_target_mesh(size);
    EXPECT_EQ(m.face_count(), std::size_t(kSemanticTargetFaces));
    EXPECT_NEAR(m.surface_area(), 2 * (size.x() * size.y() + size.y() * size.z() + size.x() * size.z()), 1e-12);
    EXPECT_TRUE(closed_surface(m));
    m.validate();
  }
  EXPECT_EQ(cylinder_mesh(0.5, 1.0, 15).face_count(), 60u);
}

TEST(PrimitiveMesh, SphereAreaConvergesToClosedForm) {
  const double r = 1.5;
  const double exact = 4.0 * kPi * r * r;
  for (int s : {16, 24, 32, 64}) {
    const TriMesh m = sphere_mesh(r, s);
    EXPECT_NEAR(m.surface_area() / exact, 1.0, 0.05) << "segments " << s;
    EXPECT_TRUE(closed_surface(m));
  }
  // Finer tessellation is strictly closer.
  EXPECT_GT(sphere_mesh(r, 32).surface_area(), sphere_mesh(r, 16).surface_area());
}

TEST(PrimitiveMesh, CylinderIsClosed) {
  const TriMesh m = cylinder_mesh(0.4, 2.0, 16);
  EXPECT_EQ(m.face_count(), 64u);
  EXPECT_TRUE(closed_surface(m));
}

TEST(PrimitiveMesh, RejectsBadDimensions) {
  EXPECT_THROW(box_mesh(Vec3(0, 1, 1)), InvalidArgument);
  EXPECT_THROW(box_mesh(Vec3(1, -1, 1)), InvalidArgument);
  EXPECT_THROW(cylinder_mesh(0.0, 1.0), InvalidArgument);
  EXPECT_THROW(cylinder_mesh(1.0, 1.0, 7), InvalidArgument);
  EXPECT_THROW(sphere_mesh(-1.0), InvalidArgument);
  EXPECT_THROW(sphere_mesh(1.0, 4), InvalidArgument);
}

TEST(TriMeshValidate, CatchesBadIndicesAndDegenerateFaces) {
  TriMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  m.faces = {{0, 1, 3}};
  EXPECT_THROW(m.validate(), InvalidArgument);
  m.faces = {{0, 1, 1}};
  EXPECT_THROW(m.validate(), InvalidArgument);
  m.faces.clear();
  EXPECT_THROW(m.validate(), InvalidArgument);
}

TEST(GenerateRoom, DeterministicForSeed) {
  RoomSpec spec;
  spec.seed = 42;
  spec.obstacle_count = 9;
  const Scene a = generate_room(spec);
  const Scene b = generate_room(spec);
  EXPECT_EQ(scene_manifest(a), scene_manifest(b));
  const auto ta = a.bvh().triangles(), tb = b.bvh().triangles();
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_EQ(ta[i].a, tb[i].a);
    EXPECT_EQ(ta[i].b, tb[i].b);
    EXPECT_EQ(ta[i].c, tb[i].c);
    EXPECT_EQ(ta[i].object_id, tb[i].object_id);
    EXPECT_EQ(ta[i].face_id, tb[i].face_id);
  }
  spec.seed = 43;
  EXPECT_NE(scene_manifest(generate_room(spec)), scene_manifest(a));
}

TEST(GenerateRoom, ObjectCounts) {
  RoomSpec spec;
  spec.seed = 7;
  spec.obstacle_count = 0;
  const Scene empty = generate_room(spec);
  ASSERT_EQ(empty.objects().size(), 7u);  // six wall slabs + one semantic
  int walls = 0;
  for (const auto& o : empty.objects()) walls += o.kind == ObjectKind::wall;
  EXPECT_EQ(walls, 6);
  EXPECT_EQ(empty.semantic_labels(), std::vector<int>{1});

  spec.obstacle_count = 9;
  const Scene nine = generate_room(spec);
  int obstacles = 0, semantics = 0;
  for (const auto& o : nine.objects()) {
    if (o.kind == ObjectKind::wall) continue;
    (o.semantic_label > 0 ? semantics : obstacles)++;
  }
  EXPECT_EQ(obstacles, 9);
  EXPECT_EQ(semantics, 1);
}

TEST(GenerateRoom, PlacementInvariants) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    RoomSpec spec;
    spec.seed = seed;
    spec.length = 4 + (seed % 17);
    spec.width = 4 + (seed * 7 % 17);
    spec.height = 2 + (seed % 7);
    spec.obstacle_count = static_cast<int>(seed % 20);
    spec.semantic_count = 1 + static_cast<int>(seed % 3);
    const Scene s = generate_room(spec);
    std::vector<Aabb> semantic_boxes;
    for (std::size_t i = 0; i < s.objects().size(); ++i) {
      const SceneObject& o = s.object(i);
      EXPECT_NEAR(o.orientation.norm(), 1.0, 1e-6);
      if (o.kind == ObjectKind::wall) continue;
      const Aabb box = s.object_box(i);
      EXPECT_TRUE(s.interior().contains(box.lo, 1e-9) && s.interior().contains(box.hi, 1e-9))
          << "seed " << seed << " object " << i;
      if (o.semantic_label > 0) {
        EXPECT_EQ(o.mesh.face_count(), std::size_t(kSemanticTargetFaces));
        semantic_boxes.push_back(box);
      }
    }
    for (std::size_t i = 0; i < s.objects().size(); ++i) {
      const SceneObject& o = s.object(i);
      if (o.kind == ObjectKind::wall || o.semantic_label > 0) continue;
      for (const auto& sb : semantic_boxes) EXPECT_FALSE(sb.overlaps(s.object_box(i))) << "seed " << seed;
    }
    auto labels = s.semantic_labels();
    EXPECT_EQ(std::set<int>(labels.begin(), labels.end()).size(), labels.size());
  }
}

TEST(GenerateRoom, InvalidSpecAndPlacementFailure) {
  RoomSpec spec;
  spec.length = 3.0;
  EXPECT_THROW(generate_room(spec), InvalidArgument);
  spec = RoomSpec{};
  spec.obstacle_count = 20;
  EXPECT_THROW(generate_room(spec), InvalidArgument);

  spec = RoomSpec{};
  spec.length = spec.width = 4.0;
  spec.height = 2.0;
  spec.semantic_min_size = 2.5;
  spec.semantic_max_size = 3.0;
  spec.seed = 99;
  try {
    generate_room(spec);
    FAIL() << "expected GenerationError";
  } catch (const GenerationError& e) {
    EXPECT_EQ(e.seed(), 99u);
  }
}

TEST(Raycast, CubeTwoMetersAhead) {
  const Scene s = single_box_scene(Vec3(2, 0, 0), Vec3(1, 1, 1));
  auto hit = s.raycast(Vec3::Zero(), Vec3::UnitX(), 100.0);
  ASSERT_TRUE(hit);
  EXPECT_NEAR(hit->t, 1.5, 1e-12);
  EXPECT_NEAR(hit->point.x(), 1.5, 1e-12);
  EXPECT_EQ(hit->object_id, 0u);
  EXPECT_FALSE(s.raycast(Vec3::Zero(), -Vec3::UnitX(), 100.0));
  EXPECT_FALSE(s.raycast(Vec3::Zero(), Vec3::UnitX(), 1.4));
}

TEST(Raycast, BvhMatchesBruteForceOnRandomRays) {
  RoomSpec spec;
  spec.seed = 5;
  spec.obstacle_count = 19;
  spec.semantic_count = 3;
  const Scene s = generate_room(spec);
  Rng rng(1234);
  std::normal_distribution<double> n01;
  const Aabb in = s.interior();
  int hits = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 o(uniform(rng, in.lo.x(), in.hi.x()), uniform(rng, in.lo.y(), in.hi.y()),
                 uniform(rng, in.lo.z(), in.hi.z()));
    const Vec3 d = Vec3(n01(rng), n01(rng), n01(rng)).normalized();
    const double tmax = uniform(rng, 0.5, 30.0);
    auto a = s.raycast(o, d, tmax);
    auto b = s.raycast_brute_force(o, d, tmax);
    ASSERT_EQ(a.has_value(), b.has_value()) << "ray " << i;
    if (!a) continue;
    ++hits;
    EXPECT_EQ(a->t, b->t);
    EXPECT_EQ(a->object_id, b->object_id);
    EXPECT_EQ(a->face_id, b->face_id);
    EXPECT_EQ(a->label, b->label);
  }
  EXPECT_GT(hits, 5000);
}

TEST(Raycast, TiesResolveToSmallestObjectThenFace) {
  // Two coincident boxes: every hit is a tie on t.
  SceneObject a;
  a.mesh = box_mesh(Vec3(1, 1, 1));
  a.dims = Vec3(1, 1, 1);
  a.position = Vec3(3, 0, 0);
  SceneObject b = a;
  Aabb in;
  in.grow(Vec3::Constant(-5));
  in.grow(Vec3::Constant(5));
  const Scene s({a, b}, in);
  auto hit = s.raycast(Vec3(0, 0.1, 0.2), Vec3::UnitX(), 10);
  ASSERT_TRUE(hit);
  EXPECT_EQ(hit->object_id, 0u);
  auto ref = s.raycast_brute_force(Vec3(0, 0.1, 0.2), Vec3::UnitX(), 10);
  EXPECT_EQ(hit->face_id, ref->face_id);
}

TEST(SceneIndex, CoversEveryTriangleOnceWithDenseFaceIds) {
  RoomSpec spec;
  spec.seed = 11;
  spec.obstacle_count = 6;
  spec.semantic_count = 2;
  const Scene s = generate_room(spec);
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> seen;
  for (const auto& t : s.bvh().triangles()) ++seen[{t.object_id, t.face_id}];
  std::size_t total = 0;
  for (std::size_t o = 0; o < s.objects().size(); ++o) {
    const std::size_t nf = s.object(o).mesh.face_count();
    total += nf;
    for (std::uint32_t f = 0; f < nf; ++f) EXPECT_EQ((seen[{std::uint32_t(o), f}]), 1);
  }
  EXPECT_EQ(seen.size(), total);
}

TEST(SceneIndex, NearestDistanceMatchesBruteForce) {
  RoomSpec spec;
  spec.seed = 3;
  spec.obstacle_count = 12;
  const Scene s = generate_room(spec);
  Rng rng(9);
  for (int i = 0; i < 300; ++i) {
    const Vec3 p(uniform(rng, 0, spec.length), uniform(rng, 0, spec.width), uniform(rng, 0, spec.height));
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : s.bvh().triangles())
      best = std::min(best, (closest_point_on_triangle(p, t.a, t.b, t.c) - p).norm());
    EXPECT_NEAR(s.distance(p), best, 1e-12);
  }
}

TEST(SceneManifest, RoundTripsThroughFiles) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "srli_scene_test";
  fs::create_directories(dir);
  RoomSpec spec;
  spec.seed = 21;
  spec.obstacle_count = 5;
  const Scene generated = generate_room(spec);

  // Add an imported mesh so the .obj path is exercised.
  std::vector<SceneObject> objects = generated.objects();
  SceneObject imported;
  imported.kind = ObjectKind::imported;
  imported.mesh = sphere_mesh(0.3, 12);
  imported.position = Vec3(1, 1, 1);
  objects.push_back(imported);
  const Scene s(objects, generated.interior());

  const std::string path = (dir / "scene.txt").string();
  save_scene(path, s);
  const Scene loaded = load_scene(path);
  ASSERT_EQ(loaded.objects().size(), s.objects().size());
  Rng rng(4);
  std::normal_distribution<double> n01;
  for (int i = 0; i < 500; ++i) {
    const Vec3 o(uniform(rng, 0.5, 3), uniform(rng, 0.5, 3), uniform(rng, 0.5, 2));
    const Vec3 d = Vec3(n01(rng), n01(rng), n01(rng)).normalized();
    auto a = s.raycast(o, d, 50), b = loaded.raycast(o, d, 50);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) {
      EXPECT_NEAR(a->t, b->t, 1e-9);
      EXPECT_EQ(a->object_id, b->object_id);
      EXPECT_EQ(a->label, b->label);
    }
  }
  fs::remove_all(dir);
}

TEST(SceneManifest, MissingFilesAreReported) {
  EXPECT_THROW(load_scene("/nonexistent/scene.txt"), IoError);
  EXPECT_THROW(load_obj("/nonexistent/mesh.obj"), IoError);
}

TEST(ObjParse, FanTriangulatesAndAcceptsSlashForms) {
  std::istringstream in("# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\nf -4 -3 -2\n");
  const TriMesh m = parse_obj(in);
  ASSERT_EQ(m.face_count(), 3u);
  EXPECT_EQ(m.faces[1], (std::array<int, 3>{0, 2, 3}));
  EXPECT_EQ(m.faces[2], (std::array<int, 3>{0, 1, 2}));
}

TEST(SceneConstruction, RejectsDuplicateLabelsAndBadQuaternions) {
  SceneObject a;
  a.mesh = box_mesh(Vec3(1, 1, 1));
  a.semantic_label = 1;
  SceneObject b = a;
  b.position = Vec3(3, 0, 0);
  Aabb in;
  in.grow(Vec3::Constant(-5));
  in.grow(Vec3::Constant(5));
  EXPECT_THROW(Scene({a, b}, in), InvalidArgument);
  b.semantic_label = 2;
  b.orientation = Quat(1.1, 0, 0, 0);
  EXPECT_THROW(Scene({a, b}, in), InvalidArgument);
}
