#pragma once

// Room scenes: procedural generation, ray queries, and manifest I/O.

#include "srli/bvh.hpp"
#include "srli/mesh.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace srli {

enum class ObjectKind { box, cylinder, sphere, wall, imported };

inline const char* to_string(ObjectKind k) {
  switch (k) {
    case ObjectKind::box: return "box";
    case ObjectKind::cylinder: return "cylinder";
    case ObjectKind::sphere: return "sphere";
    case ObjectKind::wall: return "wall";
    case ObjectKind::imported: return "imported";
  }
  return "?";
}

inline ObjectKind parse_object_kind(const std::string& s) {
  if (s == "box") return ObjectKind::box;
  if (s == "cylinder") return ObjectKind::cylinder;
  if (s == "sphere") return ObjectKind::sphere;
  if (s == "wall") return ObjectKind::wall;
  if (s == "imported") return ObjectKind::imported;
  throw InvalidArgument("unknown object kind '" + s + "'");
}

struct SceneObject {
  TriMesh mesh;  // local frame
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
  int semantic_label = 0;  // 0: plain obstacle
  ObjectKind kind = ObjectKind::box;
  // Primitive parameters, kept so a manifest can rebuild the mesh:
  // box/wall: size; cylinder: (radius, height, segments); sphere: (radius, segments, 0);
  // semantic box: (sx, sy, sz) with the 60-face tessellation.
  Vec3 dims = Vec3::Zero();
  std::string mesh_path;  // imported meshes only

  Vec3 to_world(const Vec3& local) const { return orientation * local + position; }
};

enum class SemanticShape { cuboid, cylinder };

struct RoomSpec {
  double length = 10.0;
  double width = 10.0;
  double height = 4.0;
  int obstacle_count = 0;
  int semantic_count = 1;
  std::uint64_t seed = 0;
  SemanticShape semantic_shape = SemanticShape::cuboid;
  double semantic_min_size = 0.5;
  double semantic_max_size = 1.5;

  // Validation limits.
  double min_side = 4.0, max_side = 20.0;
  double min_height = 2.0, max_height = 8.0;
  int max_obstacles = 19;

  void validate() const {
    auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
    if (!in(length, min_side, max_side) || !in(width, min_side, max_side))
      throw InvalidArgument("room length/width outside [" + std::to_string(min_side) + ", " +
                            std::to_string(max_side) + "]");
    if (!in(height, min_height, max_height))
      throw InvalidArgument("room height outside [" + std::to_string(min_height) + ", " +
                            std::to_string(max_height) + "]");
    if (obstacle_count < 0 || obstacle_count > max_obstacles)
      throw InvalidArgument("obstacle_count must be in [0, " + std::to_string(max_obstacles) + "]");
    if (semantic_count < 1) throw InvalidArgument("semantic_count must be >= 1");
    if (!(semantic_min_size > 0.0) || semantic_max_size < semantic_min_size)
      throw InvalidArgument("invalid semantic size range");
  }
};

struct Hit {
  double t = 0.0;
  Vec3 point = Vec3::Zero();
  std::uint32_t object_id = 0;
  std::uint32_t face_id = 0;
  int label = 0;
};

class Scene {
 public:
  Scene() = default;

  // Builds world-space geometry and the acceleration index. `interior` is the
  // free volume of the room (the shell lies outside it).
  Scene(std::vector<SceneObject> objects, Aabb interior)
      : objects_(std::move(objects)), interior_(interior) {
    std::vector<Triangle> tris;
    object_boxes_.resize(objects_.size());
    for (std::size_t o = 0; o < objects_.size(); ++o) {
      const SceneObject& obj = objects_[o];
      obj.mesh.validate();
      const double qn = obj.orientation.norm();
      if (std::abs(qn - 1.0) > 1e-6)
        throw InvalidArgument("object " + std::to_string(o) + " orientation is not unit-norm");
      for (std::size_t f = 0; f < obj.mesh.face_count(); ++f) {
        const auto [a, b, c] = obj.mesh.triangle(f);
        Triangle t{obj.to_world(a), obj.to_world(b), obj.to_world(c),
                   static_cast<std::uint32_t>(o), static_cast<std::uint32_t>(f)};
        object_boxes_[o].grow(t.a);
        object_boxes_[o].grow(t.b);
        object_boxes_[o].grow(t.c);
        tris.push_back(t);
      }
    }
    for (std::size_t o = 0; o < objects_.size(); ++o) {
      const int label = objects_[o].semantic_label;
      if (label <= 0) continue;
      for (std::size_t p = 0; p < o; ++p)
        if (objects_[p].semantic_label == label)
          throw InvalidArgument("semantic label " + std::to_string(label) + " is not unique");
    }
    bvh_ = Bvh(std::move(tris));
  }

  const std::vector<SceneObject>& objects() const { return objects_; }
  const SceneObject& object(std::size_t i) const { return objects_.at(i); }
  const Aabb& interior() const { return interior_; }
  Aabb bounds() const { return bvh_.bounds(); }
  const Aabb& object_box(std::size_t i) const { return object_boxes_.at(i); }
  const Bvh& bvh() const { return bvh_; }

  int label_of(std::uint32_t object_id) const { return objects_[object_id].semantic_label; }

  // Object index carrying a semantic label, if any.
  std::optional<std::uint32_t> semantic_object(int label) const {
    if (label <= 0) return std::nullopt;
    for (std::size_t o = 0; o < objects_.size(); ++o)
      if (objects_[o].semantic_label == label) return static_cast<std::uint32_t>(o);
    return std::nullopt;
  }

  std::vector<int> semantic_labels() const {
    std::vector<int> out;
    for (const auto& o : objects_)
      if (o.semantic_label > 0) out.push_back(o.semantic_label);
    return out;
  }

  // Nearest intersection within t_max; `direction` must be unit length.
  std::optional<Hit> raycast(const Vec3& origin, const Vec3& direction, double t_max) const {
    auto h = bvh_.raycast(origin, direction, t_max);
    if (!h) return std::nullopt;
    return Hit{h->t, origin + h->t * direction, h->object_id, h->face_id,
               objects_[h->object_id].semantic_label};
  }

  // Same query answered by testing every triangle.
  std::optional<Hit> raycast_brute_force(const Vec3& origin, const Vec3& direction,
                                         double t_max) const {
    auto h = brute_force_raycast(bvh_.triangles(), origin, direction, t_max);
    if (!h) return std::nullopt;
    return Hit{h->t, origin + h->t * direction, h->object_id, h->face_id,
               objects_[h->object_id].semantic_label};
  }

  // Distance from p to the closest surface of any object.
  double distance(const Vec3& p,
                  double max_distance = std::numeric_limits<double>::infinity()) const {
    return bvh_.nearest(p, max_distance).distance;
  }

 private:
  std::vector<SceneObject> objects_;
  Aabb interior_;
  std::vector<Aabb> object_boxes_;
  Bvh bvh_;
};

// Builds a mesh from a primitive kind and its parameters (see SceneObject::dims).
inline TriMesh primitive_mesh(ObjectKind kind, const Vec3& dims, bool semantic = false) {
  switch (kind) {
    case ObjectKind::box:
    case ObjectKind::wall:
      return semantic ? semantic_target_mesh(dims) : box_mesh(dims);
    case ObjectKind::cylinder:
      return cylinder_mesh(dims.x(), dims.y(), static_cast<int>(dims.z()));
    case ObjectKind::sphere:
      return sphere_mesh(dims.x(), static_cast<int>(dims.y()));
    case ObjectKind::imported:
      break;
  }
  throw InvalidArgument("imported meshes have no primitive form");
}

namespace detail {

inline SceneObject make_primitive(ObjectKind kind, const Vec3& dims, const Vec3& pos, double yaw,
                                  int label) {
  SceneObject o;
  o.kind = kind;
  o.dims = dims;
  o.position = pos;
  o.orientation = yaw_quat(yaw);
  o.semantic_label = label;
  o.mesh = primitive_mesh(kind, dims, label > 0);
  return o;
}

// Six slabs of the given thickness enclosing [0,L]x[0,W]x[0,H].
inline std::vector<SceneObject> room_shell(double L, double W, double H, double thick = 0.2) {
  const Vec3 c(L / 2, W / 2, H / 2);
  std::vector<SceneObject> walls;
  auto slab = [&](const Vec3& size, const Vec3& pos) {
    walls.push_back(make_primitive(ObjectKind::wall, size, pos, 0.0, 0));
  };
  slab({L + 2 * thick, W + 2 * thick, thick}, {c.x(), c.y(), -thick / 2});
  slab({L + 2 * thick, W + 2 * thick, thick}, {c.x(), c.y(), H + thick / 2});
  slab({L + 2 * thick, thick, H}, {c.x(), -thick / 2, c.z()});
  slab({L + 2 * thick, thick, H}, {c.x(), W + thick / 2, c.z()});
  slab({thick, W, H}, {-thick / 2, c.y(), c.z()});
  slab({thick, W, H}, {L + thick / 2, c.y(), c.z()});
  return walls;
}

inline Aabb world_box(const SceneObject& o) {
  Aabb b;
  for (const auto& v : o.mesh.vertices) b.grow(o.to_world(v));
  return b;
}

}  // namespace detail

// A closed L x W x H room around the given contents. Contents keep their
// object order; the six wall slabs follow them.
inline Scene build_room(double L, double W, double H, std::vector<SceneObject> contents) {
  for (auto& w : detail::room_shell(L, W, H)) contents.push_back(std::move(w));
  Aabb interior;
  interior.grow(Vec3::Zero());
  interior.grow(Vec3(L, W, H));
  return Scene(std::move(contents), interior);
}

inline SceneObject make_object(ObjectKind kind, const Vec3& dims, const Vec3& position, double yaw = 0.0,
                               int label = 0) {
  return detail::make_primitive(kind, dims, position, yaw, label);
}

// Semantic targets get labels 1..semantic_count; obstacles carry label 0.
// Obstacles may overlap each other but never a semantic target.
inline Scene generate_room(const RoomSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "room"));
  const double L = spec.length, W = spec.width, H = spec.height;
  Aabb interior;
  interior.grow(Vec3::Zero());
  interior.grow(Vec3(L, W, H));

  std::vector<SceneObject> objects = detail::room_shell(L, W, H);
  std::vector<Aabb> semantic_boxes;
  constexpr int kMaxTries = 1000;
  constexpr double kSemanticGap = 0.1;

  // Samples a position so that the object's world box lies inside the room.
  auto place = [&](SceneObject proto, double margin, auto&& accept) -> std::optional<SceneObject> {
    for (int attempt = 0; attempt < kMaxTries; ++attempt) {
      const double yaw = proto.kind == ObjectKind::sphere ? 0.0 : uniform(rng, -kPi, kPi);
      proto.orientation = yaw_quat(yaw);
      proto.position = Vec3::Zero();
      const Aabb local = detail::world_box(proto);
      const Vec3 lo = interior.lo - local.lo + Vec3::Constant(margin);
      const Vec3 hi = interior.hi - local.hi - Vec3::Constant(margin);
      if ((lo.array() > hi.array()).any()) continue;
      proto.position =
          Vec3(uniform(rng, lo.x(), hi.x()), uniform(rng, lo.y(), hi.y()), uniform(rng, lo.z(), hi.z()));
      Aabb box = local;
      box.lo += proto.position;
      box.hi += proto.position;
      if (accept(box)) return proto;
    }
    return std::nullopt;
  };

  for (int s = 0; s < spec.semantic_count; ++s) {
    SceneObject proto;
    proto.semantic_label = s + 1;
    if (spec.semantic_shape == SemanticShape::cuboid) {
      proto.kind = ObjectKind::box;
      proto.dims = Vec3(uniform(rng, spec.semantic_min_size, spec.semantic_max_size),
                        uniform(rng, spec.semantic_min_size, spec.semantic_max_size),
                        uniform(rng, spec.semantic_min_size, spec.semantic_max_size));
      proto.mesh = semantic_target_mesh(proto.dims);
    } else {
      // 15 segments: 4 * 15 = 60 faces.
      proto.kind = ObjectKind::cylinder;
      proto.dims = Vec3(uniform(rng, spec.semantic_min_size, spec.semantic_max_size) / 2,
                        uniform(rng, spec.semantic_min_size, spec.semantic_max_size), 15);
      proto.mesh = primitive_mesh(proto.kind, proto.dims);
    }
    auto placed = place(proto, kSemanticGap, [&](const Aabb& box) {
      for (const auto& other : semantic_boxes) {
        Aabb grown = other;
        grown.lo -= Vec3::Constant(kSemanticGap);
        grown.hi += Vec3::Constant(kSemanticGap);
        if (grown.overlaps(box)) return false;
      }
      return true;
    });
    if (!placed) throw GenerationError("cannot place semantic object " + std::to_string(s + 1), spec.seed);
    semantic_boxes.push_back(detail::world_box(*placed));
    objects.push_back(std::move(*placed));
  }

  for (int i = 0; i < spec.obstacle_count; ++i) {
    SceneObject proto;
    const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
    if (kind == 0) {
      proto.kind = ObjectKind::box;
      proto.dims = Vec3(uniform(rng, 0.3, 2.0), uniform(rng, 0.3, 2.0),
                        uniform(rng, 0.3, std::min(2.0, H - 0.2)));
    } else if (kind == 1) {
      proto.kind = ObjectKind::cylinder;
      proto.dims = Vec3(uniform(rng, 0.15, 0.6), uniform(rng, 0.5, std::min(3.0, H - 0.2)), 16);
    } else {
      proto.kind = ObjectKind::sphere;
      proto.dims = Vec3(uniform(rng, 0.2, 0.8), 16, 0);
    }
    proto.mesh = primitive_mesh(proto.kind, proto.dims);
    auto placed = place(proto, 0.0, [&](const Aabb& box) {
      for (const auto& sb : semantic_boxes)
        if (sb.overlaps(box)) return false;
      return true;
    });
    if (!placed) throw GenerationError("cannot place obstacle " + std::to_string(i), spec.seed);
    objects.push_back(std::move(*placed));
  }
  return Scene(std::move(objects), interior);
}

// Scene manifest: flat `key = value` text.
//   room.min / room.max           interior corners
//   object.N.kind                 box | cylinder | sphere | wall | imported
//   object.N.dims                 primitive parameters (see SceneObject::dims)
//   object.N.position             x y z
//   object.N.orientation          w x y z
//   object.N.label                semantic label, 0 for obstacles
//   object.N.mesh                 mesh file relative to the manifest (imported only)
inline std::string scene_manifest(const Scene& scene,
                                  const std::vector<std::string>& mesh_files = {}) {
  std::ostringstream out;
  out.precision(17);
  auto v3 = [&](const Vec3& v) { out << v.x() << ' ' << v.y() << ' ' << v.z(); };
  out << "room.min = ";
  v3(scene.interior().lo);
  out << "\nroom.max = ";
  v3(scene.interior().hi);
  out << '\n';
  for (std::size_t i = 0; i < scene.objects().size(); ++i) {
    const SceneObject& o = scene.object(i);
    const std::string k = "object." + std::to_string(i) + ".";
    out << k << "kind = " << to_string(o.kind) << '\n';
    if (o.kind != ObjectKind::imported) {
      out << k << "dims = ";
      v3(o.dims);
      out << '\n';
    } else {
      out << k << "mesh = "
          << (i < mesh_files.size() && !mesh_files[i].empty() ? mesh_files[i] : o.mesh_path) << '\n';
    }
    out << k << "position = ";
    v3(o.position);
    out << '\n' << k << "orientation = " << o.orientation.w() << ' ' << o.orientation.x() << ' '
        << o.orientation.y() << ' ' << o.orientation.z() << '\n';
    out << k << "label = " << o.semantic_label << '\n';
  }
  return out.str();
}

// Writes the manifest plus one .obj per imported object next to it.
inline void save_scene(const std::string& manifest_path, const Scene& scene) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(manifest_path).parent_path();
  const std::string stem = fs::path(manifest_path).stem().string();
  std::vector<std::string> files(scene.objects().size());
  for (std::size_t i = 0; i < scene.objects().size(); ++i) {
    if (scene.object(i).kind != ObjectKind::imported) continue;
    files[i] = stem + "_object" + std::to_string(i) + ".obj";
    save_obj((dir / files[i]).string(), scene.object(i).mesh);
  }
  std::ofstream out(manifest_path);
  if (!out) throw IoError(manifest_path, "cannot write manifest");
  out << scene_manifest(scene, files);
  if (!out) throw IoError(manifest_path, "write failed");
}

inline std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& name) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError(name, "line " + std::to_string(lineno) + ": expected key = value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline Scene load_scene(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw IoError(manifest_path, "cannot open manifest");
  const auto kv = parse_key_values(in, manifest_path);
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError(manifest_path, "missing key '" + key + "'");
    return it->second;
  };
  auto vec = [&](const std::string& key, int n) {
    std::istringstream s(get(key));
    std::vector<double> v(n);
    for (auto& x : v)
      if (!(s >> x)) throw IoError(manifest_path, "key '" + key + "' needs " + std::to_string(n) + " numbers");
    return v;
  };
  Aabb interior;
  auto lo = vec("room.min", 3), hi = vec("room.max", 3);
  interior.grow(Vec3(lo[0], lo[1], lo[2]));
  interior.grow(Vec3(hi[0], hi[1], hi[2]));
  std::vector<SceneObject> objects;
  for (int i = 0; kv.count("object." + std::to_string(i) + ".kind"); ++i) {
    const std::string k = "object." + std::to_string(i) + ".";
    SceneObject o;
    o.kind = parse_object_kind(get(k + "kind"));
    auto p = vec(k + "position", 3);
    auto q = vec(k + "orientation", 4);
    o.position = Vec3(p[0], p[1], p[2]);
    o.orientation = Quat(q[0], q[1], q[2], q[3]);
    o.semantic_label = std::stoi(get(k + "label"));
    if (o.kind == ObjectKind::imported) {
      o.mesh_path = get(k + "mesh");
      fs::path mp(o.mesh_path);
      if (mp.is_relative()) mp = fs::path(manifest_path).parent_path() / mp;
      o.mesh = load_obj(mp.string());
    } else {
      auto d = vec(k + "dims", 3);
      o.dims = Vec3(d[0], d[1], d[2]);
      o.mesh = primitive_mesh(o.kind, o.dims, o.semantic_label > 0 && o.kind == ObjectKind::box);
    }
    objects.push_back(std::move(o));
  }
  return Scene(std::move(objects), interior);
}

}  // namespace srli
