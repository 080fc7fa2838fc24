#pragma once

// Headless depth / segmentation / face-index rendering and a scanning range
// sensor, both by ray casting against the scene.

#include "srli/scene.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace srli {

template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;  // row-major, row 0 at the top

  Image() = default;
  Image(int w, int h, T fill = T{}) : width(w), height(h), data(std::size_t(w) * h, fill) {}

  T& at(int u, int v) { return data[std::size_t(v) * width + u]; }
  const T& at(int u, int v) const { return data[std::size_t(v) * width + u]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(int w, int h) const { return width == w && height == h; }
  template <typename U>
  bool same_shape(const Image<U>& o) const { return width == o.width && height == o.height; }
};

using DepthImage = Image<float>;  // range in meters, 0 = no return
using SegMask = Image<std::uint8_t>;

struct FaceRef {
  std::int32_t object = -1;  // -1: no hit
  std::int32_t face = -1;
  bool valid() const { return object >= 0; }
  bool operator==(const FaceRef&) const = default;
};
using FaceIndexImage = Image<FaceRef>;

struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();

  Pose compose(const Pose& local) const {
    return {position + orientation * local.position, orientation * local.orientation};
  }
};

// Pinhole camera looking along body +x, with image columns running toward
// body -y and rows toward body -z.
struct CameraModel {
  double h_fov_deg = 87.0;
  double v_fov_deg = 58.0;
  int width = 96;
  int height = 54;
  double max_range = 10.0;
  Pose offset;  // camera pose in the body frame

  void validate() const {
    if (width <= 0 || height <= 0) throw InvalidArgument("camera resolution must be positive");
    if (!(h_fov_deg > 0 && h_fov_deg < 180 && v_fov_deg > 0 && v_fov_deg < 180))
      throw InvalidArgument("camera field of view must be in (0, 180) degrees");
    if (!(max_range > 0)) throw InvalidArgument("camera max_range must be positive");
  }

  double fx() const { return (width / 2.0) / std::tan(h_fov_deg * kPi / 360.0); }
  double fy() const { return (height / 2.0) / std::tan(v_fov_deg * kPi / 360.0); }

  // Unit ray through the center of pixel (u, v), camera frame.
  Vec3 ray(int u, int v) const {
    const double y = -((u + 0.5) - width / 2.0) / fx();
    const double z = -((v + 0.5) - height / 2.0) / fy();
    return Vec3(1.0, y, z).normalized();
  }

  // Pixel coordinates of a camera-frame point in front of the camera.
  std::optional<std::pair<double, double>> project(const Vec3& p) const {
    if (p.x() <= 0) return std::nullopt;
    return std::pair{width / 2.0 - fx() * p.y() / p.x(), height / 2.0 - fy() * p.z() / p.x()};
  }

  std::vector<Vec3> rays() const {
    std::vector<Vec3> out;
    out.reserve(std::size_t(width) * height);
    for (int v = 0; v < height; ++v)
      for (int u = 0; u < width; ++u) out.push_back(ray(u, v));
    return out;
  }
};

struct RenderOutput {
  DepthImage depth;
  SegMask mask;
  FaceIndexImage faces;
};

// Renders one frame. `rays` are the camera's per-pixel directions (see
// CameraModel::rays); passing them avoids recomputing per frame.
inline RenderOutput render(const Scene& scene, const CameraModel& cam, const Pose& camera_pose,
                           int active_label, const std::vector<Vec3>& rays) {
  RenderOutput out{DepthImage(cam.width, cam.height, 0.0f), SegMask(cam.width, cam.height, 0),
                   FaceIndexImage(cam.width, cam.height)};
  const Eigen::Matrix3d R = camera_pose.orientation.toRotationMatrix();
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const Vec3 d = R * rays[i];
    auto hit = scene.raycast(camera_pose.position, d, cam.max_range);
    if (!hit) continue;
    out.depth.data[i] = static_cast<float>(hit->t);
    out.faces.data[i] = {static_cast<std::int32_t>(hit->object_id), static_cast<std::int32_t>(hit->face_id)};
    out.mask.data[i] = (active_label > 0 && hit->label == active_label) ? 1 : 0;
  }
  return out;
}

inline RenderOutput render(const Scene& scene, const CameraModel& cam, const Pose& camera_pose,
                           int active_label) {
  return render(scene, cam, camera_pose, active_label, cam.rays());
}

struct LidarModel {
  double h_fov_deg = 360.0;
  double v_fov_deg = 90.0;
  int h_rays = 128;
  int v_rays = 16;
  double max_range = 10.0;

  void validate() const {
    if (h_rays < 1 || v_rays < 1) throw InvalidArgument("lidar ray counts must be >= 1");
    if (!(max_range > 0)) throw InvalidArgument("lidar max_range must be positive");
  }

  // Body-frame unit directions. Elevations span [-v_fov/2, v_fov/2]
  // inclusive; azimuths tile h_fov starting at 0.
  std::vector<Vec3> rays() const {
    std::vector<Vec3> out;
    out.reserve(std::size_t(h_rays) * v_rays);
    const bool full_circle = h_fov_deg >= 360.0;
    for (int j = 0; j < v_rays; ++j) {
      const double el_deg = v_rays == 1 ? 0.0 : -v_fov_deg / 2 + v_fov_deg * j / (v_rays - 1);
      const double el = el_deg * kPi / 180.0;
      for (int i = 0; i < h_rays; ++i) {
        const double az_deg = full_circle ? 360.0 * i / h_rays
                                          : (h_rays == 1 ? 0.0 : -h_fov_deg / 2 + h_fov_deg * i / (h_rays - 1));
        const double az = az_deg * kPi / 180.0;
        out.emplace_back(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      }
    }
    return out;
  }
};

struct PointCloud {
  Vec3 origin = Vec3::Zero();
  std::vector<Vec3> points;  // world frame; max-range endpoint for misses
  std::vector<std::uint8_t> hit;  // 1: surface return, 0: max-range miss
};

inline PointCloud lidar_scan(const Scene& scene, const LidarModel& lidar, const Pose& body_pose,
                             const std::vector<Vec3>& rays) {
  PointCloud pc;
  pc.origin = body_pose.position;
  pc.points.reserve(rays.size());
  pc.hit.reserve(rays.size());
  const Eigen::Matrix3d R = body_pose.orientation.toRotationMatrix();
  for (const Vec3& r : rays) {
    const Vec3 d = R * r;
    if (auto h = scene.raycast(body_pose.position, d, lidar.max_range)) {
      pc.points.push_back(h->point);
      pc.hit.push_back(1);
    } else {
      pc.points.push_back(body_pose.position + lidar.max_range * d);
      pc.hit.push_back(0);
    }
  }
  return pc;
}

inline PointCloud lidar_scan(const Scene& scene, const LidarModel& lidar, const Pose& body_pose) {
  return lidar_scan(scene, lidar, body_pose, lidar.rays());
}

// Range-proportional Gaussian noise: d + N(0, (k_sigma * d)^2), floored at 0.
// Pixels without a return stay 0.
inline DepthImage apply_depth_noise(const DepthImage& in, Rng& rng, double k_sigma) {
  if (k_sigma < 0) throw InvalidArgument("k_sigma must be non-negative");
  DepthImage out = in;
  if (k_sigma == 0) return out;
  std::normal_distribution<double> n01(0.0, 1.0);
  for (auto& d : out.data) {
    if (d <= 0.0f) continue;
    d = static_cast<float>(std::max(0.0, d + k_sigma * d * n01(rng)));
  }
  return out;
}

// Drops each set mask pixel independently with probability p.
inline SegMask apply_mask_dropout(const SegMask& in, Rng& rng, double p) {
  SegMask out = in;
  if (p <= 0) return out;
  std::bernoulli_distribution drop(std::min(1.0, p));
  for (auto& m : out.data)
    if (m && drop(rng)) m = 0;
  return out;
}

// Binary PGM of depth scaled so that max_range maps to 255.
inline void write_depth_pgm(const std::string& path, const DepthImage& depth, double max_range) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot write image");
  out << "P5\n" << depth.width << ' ' << depth.height << "\n255\n";
  for (float d : depth.data) {
    const double s = std::clamp(d / max_range, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(s * 255.0))));
  }
  if (!out) throw IoError(path, "write failed");
}

// Binary PBM; set pixels are written black.
inline void write_mask_pbm(const std::string& path, const SegMask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot write image");
  out << "P4\n" << mask.width << ' ' << mask.height << '\n';
  for (int v = 0; v < mask.height; ++v) {
    unsigned char byte = 0;
    int bits = 0;
    for (int u = 0; u < mask.width; ++u) {
      byte = static_cast<unsigned char>((byte << 1) | (mask.at(u, v) ? 1 : 0));
      if (++bits == 8) {
        out.put(static_cast<char>(byte));
        byte = 0;
        bits = 0;
      }
    }
    if (bits) out.put(static_cast<char>(byte << (8 - bits)));
  }
  if (!out) throw IoError(path, "write failed");
}

}  // namespace srli
