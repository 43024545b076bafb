#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "panelnet/erp_geometry.hpp"
#include "panelnet/erp_tensor.hpp"

namespace panelnet {

enum SemanticClass : std::uint8_t { kCeiling = 0, kFloor = 1, kWall = 2, kFurniture = 3 };
inline constexpr int kNumSemanticClasses = 4;

// World frame: floor rectangle [0, width] x [0, length], floor at z = 0, z up.
struct Box {
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0, z0 = 0, z1 = 0;
  bool operator==(const Box&) const = default;
};

struct RoomScene {
  double width = 4, length = 4, height = 2.8;
  double cx = 2, cy = 2;         // camera position on the floor plan
  double camera_height = 1.5;    // above the floor
  std::vector<Box> furniture;
  std::uint64_t seed = 0;

  bool operator==(const RoomScene&) const = default;
};

struct RoomRanges {
  double width_min = 2, width_max = 8;
  double length_min = 2, length_max = 8;
  double height_min = 2.4, height_max = 3.5;
  double camera_min = 1.2, camera_max = 1.8;
  double margin = 0.2;      // camera to wall
  double clearance = 0.3;   // camera to furniture, horizontally
  int furniture = 0;        // at most 3

  // Throws ConfigError when no scene can satisfy the ranges.
  void validate() const;
};

RoomScene sample_room(std::uint64_t seed, const RoomRanges& ranges = {});

// Throws ConfigError when the scene breaks its own invariants.
void validate_room(const RoomScene& scene, const RoomRanges& ranges = {});

struct RoomSample {
  ErpTensor rgb;                 // 3 x H x W in [0, 1]
  ErpTensor depth;               // 1 x H x W, Euclidean ray length in metres
  LabelMap semantics;            // 1 x H x W, SemanticClass values
  std::vector<double> boundary;  // floor-boundary polar angle per column
  double height = 0;             // room height
  double camera_height = 0;
};

struct RayHit {
  double depth = 0;
  SemanticClass label = kWall;
};

// Nearest surface along one direction from the camera.
RayHit cast_ray(const RoomScene& scene, const SphericalAngles& dir);

// Ray-casts every pixel centre from the camera. Width and height must be
// multiples of 32.
RoomSample render_erp(const RoomScene& scene, int width, int height);

// Horizontal distance from the camera to the walls along azimuth phi.
double wall_distance(const RoomScene& scene, double phi);

struct AugmentOps {
  bool flip = false;
  int rotate = 0;      // columns, any sign
  double gamma = 1.0;  // in [0.5, 2], applied to rgb only
};

// Flip first, then rotation, then gamma.
RoomSample augment(const RoomSample& s, const AugmentOps& ops);

// Random flip, rotation by a multiple of `rotate_step` columns and gamma in
// [gamma_lo, gamma_hi], drawn from `seed`.
AugmentOps random_augment_ops(std::uint64_t seed, int width, int rotate_step, double gamma_lo = 0.8,
                              double gamma_hi = 1.25);

// scene_%05d/{rgb,depth,sem}.erpt and layout.txt under `root`.
std::filesystem::path scene_directory(const std::filesystem::path& root, int index);
void write_sample(const std::filesystem::path& dir, const RoomSample& s);
// Throws DataError on missing or malformed files.
RoomSample read_sample(const std::filesystem::path& dir);
// Sorted scene directories under `root`; DataError when there are none.
std::vector<std::filesystem::path> list_scenes(const std::filesystem::path& root);

// Seed of scene `index` in a dataset generated from `seed`.
std::uint64_t scene_seed(std::uint64_t seed, int index);

}  // namespace panelnet
