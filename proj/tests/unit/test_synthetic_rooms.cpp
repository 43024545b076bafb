#include <doctest.h>

#include <cmath>
#include <numbers>

#include "common.hpp"
#include "panelnet/errors.hpp"
#include "panelnet/losses.hpp"
#include "panelnet/panel_pipeline.hpp"
#include "panelnet/synthetic_rooms.hpp"

using namespace panelnet;

namespace {

RoomScene centred_cube() {
  RoomScene s;
  s.width = s.length = s.height = 2;
  s.cx = s.cy = 1;
  s.camera_height = 1;
  return s;
}

}  // namespace

TEST_CASE("centred 2x2x2 room: equator, corner and zenith depths") {
  const auto s = centred_cube();
  const double pi = std::numbers::pi;
  CHECK(cast_ray(s, {0.0, pi / 2}).depth == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cast_ray(s, {0.0, pi / 2}).label == kWall);
  CHECK(cast_ray(s, {pi / 4, pi / 2}).depth == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(cast_ray(s, {0.3, 1e-9}).depth == doctest::Approx(s.height - s.camera_height).epsilon(1e-9));
  CHECK(cast_ray(s, {0.3, 1e-9}).label == kCeiling);
  CHECK(cast_ray(s, {0.3, pi - 1e-9}).label == kFloor);
  // Rendered pixels next to the equator/phi = 0 direction follow 1 / (sin theta cos phi).
  const auto r = render_erp(s, 256, 128);
  for (int y : {63, 64}) {
    for (int x : {127, 128}) {
      const auto a = pixel_to_angles(x, y, 256, 128);
      CHECK(r.depth.at(0, y, x) == doctest::Approx(1.0 / (std::sin(a.theta) * std::cos(a.phi))).epsilon(1e-6));
    }
  }
}

TEST_CASE("same seed, same scene; ranges are validated") {
  RoomRanges r;
  r.furniture = 2;
  CHECK(sample_room(42, r) == sample_room(42, r));
  CHECK_FALSE(sample_room(42, r) == sample_room(43, r));
  RoomRanges bad;
  bad.width_min = 5;
  bad.width_max = 3;
  CHECK_THROWS_AS(sample_room(1, bad), ConfigError);
  RoomRanges tight;
  tight.width_min = tight.width_max = 0.3;
  CHECK_THROWS_AS(sample_room(1, tight), ConfigError);
  RoomRanges many;
  many.furniture = 4;
  CHECK_THROWS_AS(sample_room(1, many), ConfigError);
}

TEST_CASE("1000 sampled rooms satisfy their invariants") {
  RoomRanges r;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    r.furniture = static_cast<int>(seed % 4);
    const auto s = sample_room(seed, r);
    CHECK_NOTHROW(validate_room(s, r));
    CHECK(s.width >= 2);
    CHECK(s.width <= 8);
    CHECK(s.length >= 2);
    CHECK(s.length <= 8);
    CHECK(s.height >= 2.4);
    CHECK(s.height <= 3.5);
    CHECK(s.camera_height >= 1.2);
    CHECK(s.camera_height <= 1.8);
    CHECK(s.camera_height < s.height);
    CHECK(s.cx >= 0.2);
    CHECK(s.cx <= s.width - 0.2);
    CHECK(s.cy >= 0.2);
    CHECK(s.cy <= s.length - 0.2);
    CHECK(static_cast<int>(s.furniture.size()) == r.furniture);
  }
}

TEST_CASE("rendered ground truth invariants") {
  RoomRanges r;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    r.furniture = static_cast<int>(seed % 4);
    const auto s = sample_room(seed, r);
    const auto g = render_erp(s, 64, 32);
    const double diag = std::sqrt(s.width * s.width + s.length * s.length + s.height * s.height);
    for (float d : g.depth.data()) {
      CHECK(d > 0.2);
      CHECK(d <= diag);
    }
    for (auto l : g.semantics.data()) {
      CHECK(l < kNumSemanticClasses);
      if (r.furniture == 0) CHECK(l != kFurniture);
    }
    for (double b : g.boundary) {
      CHECK(b > std::numbers::pi / 2);
      CHECK(b < std::numbers::pi);
    }
    for (float v : g.rgb.data()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
  CHECK_THROWS_AS(render_erp(centred_cube(), 60, 32), ConfigError);
}

TEST_CASE("boundary horizon depth agrees with the rendered equator") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = sample_room(seed);
    const int w = 256, h = 128;
    const auto g = render_erp(s, w, h);
    const auto horizon = boundary_to_horizon_depth(g.boundary, g.camera_height);
    for (int x = 0; x < w; ++x) {
      // Equator rows straddle theta = pi/2; the horizontal component of either ray is exact.
      for (int y : {h / 2 - 1, h / 2}) {
        const double horiz = g.depth.at(0, y, x) * std::sin(pixel_to_angles(x, y, w, h).theta);
        CHECK(std::abs(horiz - horizon[x]) < 1e-4 * std::max(1.0, horizon[x]));
      }
      CHECK(horizon[x] == doctest::Approx(wall_distance(s, pixel_to_angles(x, 0, w, h).phi)).epsilon(1e-9));
    }
  }
}

TEST_CASE("renders at 3x resolution share pixel centres with the 1x render") {
  RoomRanges r;
  r.furniture = 3;
  const auto s = sample_room(77, r);
  const auto lo = render_erp(s, 64, 32);
  const auto hi = render_erp(s, 192, 96);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 64; ++x) {
      CHECK(hi.depth.at(0, 3 * y + 1, 3 * x + 1) == lo.depth.at(0, y, x));
      CHECK(hi.semantics.at(0, 3 * y + 1, 3 * x + 1) == lo.semantics.at(0, y, x));
      for (int c = 0; c < 3; ++c) CHECK(hi.rgb.at(c, 3 * y + 1, 3 * x + 1) == lo.rgb.at(c, y, x));
    }
    CHECK(hi.boundary[3 * 0 + 1] == lo.boundary[0]);
  }
  CHECK(render_erp(s, 64, 32).depth == lo.depth);
}

TEST_CASE("augmentation identities") {
  const auto g = render_erp(sample_room(5), 64, 32);
  auto same = [](const RoomSample& a, const RoomSample& b) {
    return a.rgb == b.rgb && a.depth == b.depth && a.semantics == b.semantics && a.boundary == b.boundary;
  };
  CHECK(same(augment(g, {.rotate = 64}), g));
  CHECK(same(augment(augment(g, {.flip = true}), {.flip = true}), g));
  CHECK(same(augment(augment(g, {.rotate = 5}), {.rotate = -5}), g));
  const auto gam = augment(g, {.gamma = 2.0});
  CHECK(gam.depth == g.depth);
  CHECK(gam.rgb.data()[10] == doctest::Approx(g.rgb.data()[10] * g.rgb.data()[10]));
  CHECK_THROWS_AS(augment(g, {.gamma = 2.5}), ConfigError);
  const auto rot = augment(g, {.rotate = 3});
  CHECK(rot.boundary[3] == g.boundary[0]);
  CHECK(rot.depth.at(0, 7, 3) == g.depth.at(0, 7, 0));
  const auto fl = augment(g, {.flip = true});
  CHECK(fl.boundary[0] == g.boundary[63]);
}

TEST_CASE("flipping mirrors the scene about the phi = 0 plane") {
  // Column x maps to 63 - x, i.e. phi -> -phi: a room mirrored in y.
  auto s = sample_room(6);
  const auto g = render_erp(s, 64, 32);
  RoomScene m = s;
  m.cy = s.length - s.cy;
  const auto mg = render_erp(m, 64, 32);
  const auto fl = augment(g, {.flip = true});
  for (std::size_t i = 0; i < fl.depth.size(); ++i) CHECK(fl.depth.data()[i] == doctest::Approx(mg.depth.data()[i]).epsilon(1e-5));
}

TEST_CASE("rotating by k strides shifts the panel sequence") {
  const PanelConfig cfg{64, 16, 256, 32};
  const int n = cfg.num_panels();
  const auto g = render_erp(sample_room(8), 256, 32);
  const auto base = partition_erp(g.rgb, cfg);
  for (int k : {1, n / 2, n - 1}) {
    const auto rot = partition_erp(augment(g, {.rotate = k * cfg.stride}).rgb, cfg);
    for (int p = 0; p < n; ++p) CHECK(rot.panels[(p + k) % n] == base.panels[p]);
  }
}

TEST_CASE("random augmentation draws are reproducible and aligned") {
  const auto a = random_augment_ops(9, 256, 16, 0.8, 1.25);
  const auto b = random_augment_ops(9, 256, 16, 0.8, 1.25);
  CHECK(a.flip == b.flip);
  CHECK(a.rotate == b.rotate);
  CHECK(a.gamma == b.gamma);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto o = random_augment_ops(s, 256, 16, 0.8, 1.25);
    CHECK(o.rotate % 16 == 0);
    CHECK(o.gamma >= 0.8);
    CHECK(o.gamma <= 1.25);
  }
  CHECK_THROWS_AS(random_augment_ops(1, 256, 48), ConfigError);
}

TEST_CASE("dataset files round trip") {
  test::TempDir dir("rooms");
  RoomRanges r;
  r.furniture = 1;
  const auto g = render_erp(sample_room(3, r), 64, 32);
  const auto sd = scene_directory(dir.path(), 4);
  CHECK(sd.filename() == "scene_00004");
  write_sample(sd, g);
  const auto back = read_sample(sd);
  CHECK(back.rgb == g.rgb);
  CHECK(back.depth == g.depth);
  CHECK(back.semantics == g.semantics);
  CHECK(back.boundary == g.boundary);
  CHECK(back.height == g.height);
  CHECK(back.camera_height == g.camera_height);
  CHECK(list_scenes(dir.path()) == std::vector<std::filesystem::path>{sd});
  std::filesystem::remove(sd / "depth.erpt");
  CHECK_THROWS_AS(read_sample(sd), DataError);
  test::TempDir empty("empty");
  CHECK_THROWS_AS(list_scenes(empty.path()), DataError);
}

TEST_CASE("scene seeds are distinct per index") {
  CHECK(scene_seed(1, 0) == scene_seed(1, 0));
  CHECK(scene_seed(1, 0) != scene_seed(1, 1));
  CHECK(scene_seed(1, 0) != scene_seed(2, 0));
}
