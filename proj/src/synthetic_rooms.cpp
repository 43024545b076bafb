#include "panelnet/synthetic_rooms.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "panelnet/erp_geometry.hpp"
#include "panelnet/errors.hpp"

namespace panelnet {

namespace fs = std::filesystem;

void RoomRanges::validate() const {
  const auto bad = [](const std::string& what) { throw ConfigError("room ranges: " + what); };
  if (!(width_min > 0 && width_min <= width_max)) bad("need 0 < width_min <= width_max");
  if (!(length_min > 0 && length_min <= length_max)) bad("need 0 < length_min <= length_max");
  if (!(height_min > 0 && height_min <= height_max)) bad("need 0 < height_min <= height_max");
  if (!(camera_min > 0 && camera_min <= camera_max)) bad("need 0 < camera_min <= camera_max");
  if (!(camera_max < height_min)) bad("camera_max must be below height_min");
  if (!(margin >= 0 && clearance >= 0)) bad("margin and clearance must be non-negative");
  if (!(2 * margin < width_min && 2 * margin < length_min)) bad("wall margin leaves no room for the camera");
  if (furniture < 0 || furniture > 3) bad("furniture count must be in [0, 3]");
}

namespace {

// Pieces are at least this wide and tall.
constexpr double kMinPiece = 0.3;

double horizontal_gap(const Box& b, double x, double y) {
  const double dx = std::max({b.x0 - x, 0.0, x - b.x1});
  const double dy = std::max({b.y0 - y, 0.0, y - b.y1});
  return std::hypot(dx, dy);
}

bool inside_room(const Box& b, const RoomScene& s) {
  return b.x0 >= 0 && b.x1 <= s.width && b.y0 >= 0 && b.y1 <= s.length && b.z0 >= 0 && b.z1 < s.height &&
         b.x1 - b.x0 >= kMinPiece && b.y1 - b.y0 >= kMinPiece && b.z1 - b.z0 > 0;
}

}  // namespace

void validate_room(const RoomScene& s, const RoomRanges& r) {
  const auto bad = [](const std::string& what) { throw ConfigError("room: " + what); };
  if (!(s.width > 0 && s.length > 0 && s.height > 0)) bad("dimensions must be positive");
  if (!(s.cx >= r.margin && s.cx <= s.width - r.margin && s.cy >= r.margin && s.cy <= s.length - r.margin)) {
    bad("camera closer than the wall margin");
  }
  if (!(s.camera_height > 0 && s.camera_height < s.height)) bad("camera not between floor and ceiling");
  if (s.furniture.size() > 3) bad("more than 3 furniture boxes");
  for (const auto& b : s.furniture) {
    if (!inside_room(b, s)) bad("furniture box outside the room");
    if (!(horizontal_gap(b, s.cx, s.cy) >= r.clearance)) bad("furniture within the camera clearance");
  }
}

RoomScene sample_room(std::uint64_t seed, const RoomRanges& r) {
  r.validate();
  std::mt19937_64 rng(seed);
  const auto uniform = [&rng](double lo, double hi) {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  RoomScene s;
  s.seed = seed;
  s.width = uniform(r.width_min, r.width_max);
  s.length = uniform(r.length_min, r.length_max);
  s.height = uniform(r.height_min, r.height_max);
  s.camera_height = uniform(r.camera_min, r.camera_max);
  s.cx = uniform(r.margin, s.width - r.margin);
  s.cy = uniform(r.margin, s.length - r.margin);
  for (int k = 0; k < r.furniture; ++k) {
    // Rejection sampling with a bounded number of draws keeps the result a
    // pure function of the seed; a piece that never fits is skipped.
    for (int attempt = 0; attempt < 64; ++attempt) {
      const double w = uniform(kMinPiece, std::max(kMinPiece, std::min(1.5, s.width / 2)));
      const double l = uniform(kMinPiece, std::max(kMinPiece, std::min(1.5, s.length / 2)));
      const double h = uniform(0.3, std::min(1.0, s.camera_height - 0.1));
      if (w > s.width || l > s.length) continue;
      const double x0 = uniform(0, s.width - w), y0 = uniform(0, s.length - l);
      const Box b{x0, x0 + w, y0, y0 + l, 0.0, h};
      if (!inside_room(b, s) || horizontal_gap(b, s.cx, s.cy) < r.clearance) continue;
      bool overlaps = false;
      for (const auto& o : s.furniture) {
        overlaps = overlaps || (b.x0 < o.x1 && o.x0 < b.x1 && b.y0 < o.y1 && o.y0 < b.y1);
      }
      if (overlaps) continue;
      s.furniture.push_back(b);
      break;
    }
  }
  validate_room(s, r);
  return s;
}

double wall_distance(const RoomScene& s, double phi) {
  const double dx = std::cos(phi), dy = std::sin(phi);
  double t = std::numeric_limits<double>::infinity();
  if (dx > 0) t = std::min(t, (s.width - s.cx) / dx);
  if (dx < 0) t = std::min(t, -s.cx / dx);
  if (dy > 0) t = std::min(t, (s.length - s.cy) / dy);
  if (dy < 0) t = std::min(t, -s.cy / dy);
  return t;
}

namespace {

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  SemanticClass label = kWall;
  int axis = 0;  // surface normal axis
};

// Exit point of the room shell from the inside.
Hit room_hit(const RoomScene& s, const std::array<double, 3>& o, const std::array<double, 3>& d) {
  Hit h;
  const std::array<double, 3> hi{s.width, s.length, s.height};
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) continue;
    const double t = ((d[a] > 0 ? hi[a] : 0.0) - o[a]) / d[a];
    if (t < h.t) {
      h.t = t;
      h.axis = a;
      h.label = a < 2 ? kWall : (d[a] > 0 ? kCeiling : kFloor);
    }
  }
  return h;
}

// Slab test; entry distance of a box in front of the origin.
void box_hit(const Box& b, const std::array<double, 3>& o, const std::array<double, 3>& d, Hit& h) {
  const std::array<double, 3> lo{b.x0, b.y0, b.z0}, hi{b.x1, b.y1, b.z1};
  double t_in = -std::numeric_limits<double>::infinity(), t_out = std::numeric_limits<double>::infinity();
  int axis = 0;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return;
      continue;
    }
    double t0 = (lo[a] - o[a]) / d[a], t1 = (hi[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_in) {
      t_in = t0;
      axis = a;
    }
    t_out = std::min(t_out, t1);
  }
  if (t_in > 0 && t_in <= t_out && t_in < h.t) {
    h.t = t_in;
    h.axis = axis;
    h.label = kFurniture;
  }
}

constexpr std::array<std::array<float, 3>, 4> kAlbedo{{
    {0.92f, 0.90f, 0.86f},  // ceiling
    {0.55f, 0.42f, 0.30f},  // floor
    {0.78f, 0.74f, 0.66f},  // wall
    {0.30f, 0.42f, 0.62f},  // furniture
}};

}  // namespace

RayHit cast_ray(const RoomScene& scene, const SphericalAngles& dir) {
  const std::array<double, 3> o{scene.cx, scene.cy, scene.camera_height};
  const auto d = angles_to_unit_vector(dir);
  Hit h = room_hit(scene, o, d);
  for (const auto& b : scene.furniture) box_hit(b, o, d, h);
  return {h.t, h.label};
}

RoomSample render_erp(const RoomScene& scene, int width, int height) {
  if (width <= 0 || height <= 0 || width % 32 != 0 || height % 32 != 0) {
    throw ConfigError("render: width " + std::to_string(width) + " and height " + std::to_string(height) +
                      " must be positive multiples of 32");
  }
  validate_room(scene, RoomRanges{.margin = 0, .clearance = 0});
  RoomSample out{ErpTensor(3, height, width), ErpTensor(1, height, width), LabelMap(1, height, width),
                 std::vector<double>(width), scene.height, scene.camera_height};
  const std::array<double, 3> o{scene.cx, scene.cy, scene.camera_height};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto d = angles_to_unit_vector(pixel_to_angles(x, y, width, height));
      Hit h = room_hit(scene, o, d);
      for (const auto& b : scene.furniture) box_hit(b, o, d, h);
      out.depth.at(0, y, x) = static_cast<float>(h.t);
      out.semantics.at(0, y, x) = h.label;
      // Point light at the camera: Lambert term |n . d| with inverse-square-like falloff.
      const double lambert = std::abs(d[h.axis]);
      const double shade = 0.25 + 0.75 * lambert / (1.0 + 0.08 * h.t * h.t);
      const float tint = h.axis == 0 ? 1.0f : (h.axis == 1 ? 0.93f : 1.0f);
      for (int c = 0; c < 3; ++c) {
        out.rgb.at(c, y, x) = static_cast<float>(kAlbedo[h.label][c] * tint * shade);
      }
    }
  }
  for (int x = 0; x < width; ++x) {
    const double phi = pixel_to_angles(x, 0, width, height).phi;
    out.boundary[x] = std::numbers::pi / 2 + std::atan(scene.camera_height / wall_distance(scene, phi));
  }
  return out;
}

RoomSample augment(const RoomSample& s, const AugmentOps& ops) {
  if (!(ops.gamma >= 0.5 && ops.gamma <= 2.0)) {
    throw ConfigError("augment: gamma " + std::to_string(ops.gamma) + " outside [0.5, 2]");
  }
  RoomSample out = s;
  if (ops.flip) {
    out.rgb = flip_columns(out.rgb);
    out.depth = flip_columns(out.depth);
    out.semantics = flip_columns(out.semantics);
    std::reverse(out.boundary.begin(), out.boundary.end());
  }
  if (ops.rotate != 0) {
    out.rgb = roll_columns(out.rgb, ops.rotate);
    out.depth = roll_columns(out.depth, ops.rotate);
    out.semantics = roll_columns(out.semantics, ops.rotate);
    const long w = static_cast<long>(out.boundary.size());
    std::vector<double> rolled(out.boundary.size());
    for (long c = 0; c < w; ++c) rolled[((c + ops.rotate) % w + w) % w] = out.boundary[c];
    out.boundary = std::move(rolled);
  }
  if (ops.gamma != 1.0) {
    for (auto& v : out.rgb.data()) v = static_cast<float>(std::pow(static_cast<double>(v), ops.gamma));
  }
  return out;
}

AugmentOps random_augment_ops(std::uint64_t seed, int width, int rotate_step, double gamma_lo,
                              double gamma_hi) {
  if (rotate_step <= 0 || width % rotate_step != 0) {
    throw ConfigError("augment: rotation step " + std::to_string(rotate_step) + " must divide width " +
                      std::to_string(width));
  }
  std::mt19937_64 rng(seed);
  AugmentOps ops;
  ops.flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  ops.rotate = rotate_step * std::uniform_int_distribution<int>(0, width / rotate_step - 1)(rng);
  ops.gamma = std::exp(std::uniform_real_distribution<double>(std::log(gamma_lo), std::log(gamma_hi))(rng));
  return ops;
}

fs::path scene_directory(const fs::path& root, int index) {
  char name[32];
  std::snprintf(name, sizeof name, "scene_%05d", index);
  return root / name;
}

void write_sample(const fs::path& dir, const RoomSample& s) {
  fs::create_directories(dir);
  write_erpt(dir / "rgb.erpt", s.rgb);
  write_erpt(dir / "depth.erpt", s.depth);
  write_erpt(dir / "sem.erpt", s.semantics);
  std::ofstream out(dir / "layout.txt");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", s.height);
  out << "height " << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.17g", s.camera_height);
  out << "camera_height " << buf << '\n';
  for (std::size_t i = 0; i < s.boundary.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", s.boundary[i]);
    out << (i ? " " : "") << buf;
  }
  out << '\n';
  if (!out) throw DataError("cannot write " + (dir / "layout.txt").string());
}

RoomSample read_sample(const fs::path& dir) {
  RoomSample s;
  s.rgb = read_erpt_float(dir / "rgb.erpt");
  s.depth = read_erpt_float(dir / "depth.erpt");
  s.semantics = read_erpt_labels(dir / "sem.erpt");
  const auto path = dir / "layout.txt";
  std::ifstream in(path);
  if (!in) throw DataError("missing " + path.string());
  std::string key;
  if (!(in >> key >> s.height) || key != "height") throw DataError(path.string() + ": expected 'height <f>'");
  if (!(in >> key >> s.camera_height) || key != "camera_height") {
    throw DataError(path.string() + ": expected 'camera_height <f>'");
  }
  double v;
  while (in >> v) s.boundary.push_back(v);
  if (!in.eof()) throw DataError(path.string() + ": malformed boundary value");
  const int w = s.rgb.width(), h = s.rgb.height();
  if (s.rgb.channels() != 3 || s.depth.channels() != 1 || s.semantics.channels() != 1 ||
      s.depth.width() != w || s.depth.height() != h || s.semantics.width() != w || s.semantics.height() != h ||
      static_cast<int>(s.boundary.size()) != w) {
    throw DataError(dir.string() + ": rasters and layout disagree in shape");
  }
  return s;
}

std::vector<fs::path> list_scenes(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset directory " + root.string() + " does not exist");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && e.path().filename().string().rfind("scene_", 0) == 0) out.push_back(e.path());
  }
  if (out.empty()) throw DataError("no scene_* directories under " + root.string());
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t scene_seed(std::uint64_t seed, int index) {
  // splitmix64 finaliser over (seed, index)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace panelnet
