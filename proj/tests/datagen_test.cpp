#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ftip/datagen.hpp"
#include "ftip/image_io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ftip;
using namespace ftip::datagen;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("ftip_datagen_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

SceneParams small_params() {
  SceneParams p;
  p.image_size = {96, 72};
  p.seed = 42;
  return p;
}

}  // namespace

TEST_CASE("frames are deterministic and labels are consistent") {
  const auto params = small_params();
  for (std::uint64_t i = 0; i < 30; ++i) {
    const auto a = generate_frame(params, i);
    const auto b = generate_frame(params, i);
    CHECK(a.image == b.image);
    CHECK(a.hand_box == b.hand_box);
    CHECK(a.fingertip == b.fingertip);

    const BBox grown = a.hand_box.expanded_by(2.0);
    CHECK(grown.contains(a.fingertip));
    CHECK(grown.contains(a.joint));
    CHECK(geometry::intersection(a.hand_box, {0, 0, 96, 72}).valid());
    REQUIRE(a.hand);
    CHECK(a.fingertip == a.hand->fingertip());
    CHECK(a.joint == a.hand->joint());
    // joint sits 55% of the capsule length back from the tip
    const double len = geometry::distance(a.hand->finger_base, a.hand->finger_end) +
                       2 * a.hand->finger_radius;
    CHECK(geometry::distance(a.fingertip, a.joint) == doctest::Approx(0.55 * len));
  }
  CHECK_FALSE(generate_frame(params, 0).image == generate_frame(params, 1).image);
}

TEST_CASE("degenerate gaussian pins the hand center") {
  auto params = small_params();
  params.sigma_x = 0;
  params.sigma_y = 0;
  params.location_mean = Point2{30, 40};
  for (std::uint64_t i = 0; i < 10; ++i)
    CHECK(generate_frame(params, i).hand->palm_center == Point2{30, 40});
}

TEST_CASE("generator statistics") {
  auto params = small_params();
  params.image_size = {48, 48};
  params.distractors_min = params.distractors_max = 0;
  const int n = 10000;
  double sx = 0, sy = 0, dark = 0, left = 0;
  for (int i = 0; i < n; ++i) {
    const auto f = generate_frame(params, std::uint64_t(i));
    sx += f.hand->palm_center.x;
    sy += f.hand->palm_center.y;
    dark += f.meta.dark;
    left += f.meta.dir == Direction::left;
  }
  const double se_x = 3 * params.sx() / std::sqrt(double(n));
  const double se_y = 3 * params.sy() / std::sqrt(double(n));
  CHECK(std::abs(sx / n - params.mean().x) <= se_x);
  CHECK(std::abs(sy / n - params.mean().y) <= se_y);
  CHECK(std::abs(dark / n - 0.3) <= 0.03);
  CHECK(std::abs(left / n - 0.6) <= 0.03);
}

TEST_CASE("dataset round trip") {
  const auto dir = scratch("roundtrip");
  const auto params = small_params();
  auto m = generate_dataset(params, 6, dir);
  auto back = read_manifest(dir / kManifestName);
  REQUIRE(back.records.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(back.records[i].bbox == m.records[i].bbox);
    CHECK(back.records[i].fingertip == m.records[i].fingertip);
    CHECK(back.records[i].joint == m.records[i].joint);
    CHECK(back.records[i].meta.dark == m.records[i].meta.dark);
    CHECK(back.records[i].meta.dir == m.records[i].meta.dir);
    const auto loaded = load_frame(back, back.records[i]);
    CHECK(loaded.image == quantize8(generate_frame(params, i).image));
  }

  const auto dir2 = scratch("roundtrip2");
  generate_dataset(params, 6, dir2);
  CHECK(slurp(dir / kManifestName) == slurp(dir2 / kManifestName));
  CHECK(slurp(dir / "images/000003.png") == slurp(dir2 / "images/000003.png"));

  const auto empty = scratch("empty");
  auto e = generate_dataset(params, 0, empty);
  CHECK(e.records.empty());
  CHECK(read_manifest(empty / kManifestName).records.empty());

  fs::remove(dir / "images/000002.png");
  CHECK_THROWS_WITH(read_manifest(dir / kManifestName),
                    doctest::Contains("missing image"));
  fs::remove_all(dir);
  fs::remove_all(dir2);
  fs::remove_all(empty);
}

TEST_CASE("manifest line schema") {
  ManifestRecord r{"images/a.png", {1, 2, 3.5, 4}, {5, 6}, {7.25, 8}, {true, Direction::up}};
  const std::string line = record_to_jsonl(r);
  CHECK(line ==
        R"({"image":"images/a.png","bbox":[1.0,2.0,3.5,4.0],"fingertip":[5.0,6.0],)"
        R"("joint":[7.25,8.0],"meta":{"dark":true,"dir":"up"}})");
  auto back = record_from_jsonl(line);
  CHECK(back.bbox == r.bbox);
  CHECK(back.meta.dir == Direction::up);
  CHECK_THROWS(record_from_jsonl(R"({"image":"x","bbox":[1,2,3]})"));
}

TEST_CASE("dataset mean") {
  const auto dir = scratch("mean");
  fs::create_directories(dir);
  DatasetManifest m;
  m.root = dir;
  const float levels[] = {0.0f, 0.0f};
  write_png(dir / "black.png", Image(8, 8, {levels[0], levels[0], levels[0]}));
  m.records.push_back({"black.png", {0, 0, 1, 1}, {0, 0}, {0, 0}, {}});
  auto black = dataset_mean(m);
  CHECK(black == Rgb{0, 0, 0});

  // 0.25 and 0.75 are not 8-bit exact, so compare against the quantized pair
  write_png(dir / "a.png", Image(8, 8, {0.25f, 0.25f, 0.25f}));
  write_png(dir / "b.png", Image(8, 8, {0.75f, 0.75f, 0.75f}));
  DatasetManifest two{dir, {{"a.png", {0, 0, 1, 1}, {0, 0}, {0, 0}, {}},
                            {"b.png", {0, 0, 1, 1}, {0, 0}, {0, 0}, {}}}};
  const Rgb mean = dataset_mean(two);
  CHECK(mean[0] == doctest::Approx((64.0 + 191.0) / 2 / 255.0));
  CHECK(mean[0] == doctest::Approx(0.5).epsilon(0.005));
  std::swap(two.records[0], two.records[1]);
  CHECK(dataset_mean(two) == mean);

  CHECK_THROWS(dataset_mean(DatasetManifest{dir, {}}));
  fs::remove_all(dir);
}

TEST_CASE("detection augmentation") {
  SUBCASE("crop offset example") {
    LabeledFrame f;
    f.image = Image(256, 256, {0.5f, 0.5f, 0.5f});
    f.hand_box = {100, 100, 200, 200};
    f.fingertip = {150, 120};
    auto c = crop_frame(f, 29, 29, {227, 227});
    CHECK(c.hand_box == BBox{71, 71, 171, 171});
    CHECK(c.fingertip == Point2{121, 91});
  }

  SUBCASE("equal train and crop sizes force a zero offset") {
    const auto frame = generate_frame(small_params(), 3);
    Rng rng(1);
    auto a = augment_detection_sample(frame, {64, 64}, {64, 64}, rng);
    CHECK(a.crop_x == 0);
    CHECK(a.crop_y == 0);
    const double sx = 64.0 / 96.0, sy = 64.0 / 72.0;
    CHECK(a.frame.hand_box.x1 == doctest::Approx(frame.hand_box.x1 * sx));
    CHECK(a.frame.hand_box.y2 == doctest::Approx(frame.hand_box.y2 * sy));
  }

  SUBCASE("labels follow the analytic hand through resize and crop") {
    const auto params = small_params();
    Rng rng(9);
    for (std::uint64_t i = 0; i < 200; ++i) {
      const auto frame = generate_frame(params, i);
      auto a = augment_detection_sample(frame, {80, 80}, {64, 64}, rng);
      const double sx = 80.0 / 96.0, sy = 80.0 / 72.0;
      const Point2 tip = frame.hand->fingertip();
      const Point2 expected{tip.x * sx - a.crop_x, tip.y * sy - a.crop_y};
      CHECK(geometry::distance(a.frame.fingertip, expected) < 1.0);
      CHECK(a.frame.hand_box.expanded_by(2.0).contains(a.frame.fingertip));
      if (!a.fallback) {
        const BBox window{0, 0, 64, 64};
        CHECK(geometry::intersection(a.frame.hand_box, window).area() >=
              0.5 * a.frame.hand_box.area() - 1e-9);
      }
    }
  }

  SUBCASE("crop larger than train size") {
    Rng rng(1);
    CHECK_THROWS(augment_detection_sample(generate_frame(small_params(), 0),
                                          {32, 32}, {64, 64}, rng));
  }
}

TEST_CASE("similarity transform") {
  const Point2 c{16, 16};
  Similarity quarter{1.0, 90.0, c};
  const Point2 p = quarter.apply({c.x + 5, c.y});
  CHECK(p.x == doctest::Approx(c.x));
  CHECK(p.y == doctest::Approx(c.y + 5));

  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    Similarity s{rng.uniform(0.5, 2.0), rng.uniform(-180, 180), c};
    const Point2 q{rng.uniform(-50, 50), rng.uniform(-50, 50)};
    const Point2 back = s.inverse().apply(s.apply(q));
    CHECK(geometry::distance(back, q) < 1e-3);
  }

  const Image img = generate_frame(small_params(), 0).image;
  const Image same = warp_similarity(img, {1.0, 0.0, {48, 36}}, {0, 0, 0});
  CHECK(same == img);
}

TEST_CASE("keypoint augmentation") {
  const auto frame = generate_frame(small_params(), 5);
  const std::vector<Point2> kps{{40, 30}, {50, 35}};
  Rng rng(8);
  AffineRange identity{1.0, 1.0, 0.0};
  auto id = augment_keypoint_sample(frame.image, kps, identity, rng);
  CHECK(id.image == frame.image);
  CHECK(id.keypoints == kps);

  for (int i = 0; i < 100; ++i) {
    auto s = augment_keypoint_sample(frame.image, kps, {0.8, 1.2, 30}, rng, {0.5f, 0.5f, 0.5f});
    for (std::size_t k = 0; k < kps.size(); ++k) {
      CHECK(geometry::distance(s.keypoints[k], s.transform.apply(kps[k])) < 1e-9);
      CHECK(BBox{0, 0, 96, 72}.contains(s.keypoints[k]));
    }
  }

  // Keypoints that cannot stay inside fall back to the identity.
  const std::vector<Point2> edge{{0.01, 0.01}};
  auto fb = augment_keypoint_sample(frame.image, edge, {3.0, 3.0, 0.0}, rng);
  CHECK(fb.fallback);
  CHECK(fb.keypoints == edge);
}

TEST_CASE("centered sample synthesis") {
  const auto params = small_params();
  const Rgb fill{0.4f, 0.45f, 0.5f};
  Rng rng(12);
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto frame = generate_frame(params, i);
    auto pure = synthesize_centered_sample(frame, 0, fill, rng);
    const Point2 c = pure.frame.hand_box.center();
    CHECK(std::abs(c.x - 48) <= 0.5);
    CHECK(std::abs(c.y - 36) <= 0.5);

    auto s = synthesize_centered_sample(frame, 10, fill, rng);
    const Point2 sc = s.frame.hand_box.center();
    CHECK(std::abs(sc.x - 48) <= 10.5);
    CHECK(std::abs(sc.y - 36) <= 10.5);
    CHECK(geometry::distance(s.frame.fingertip, s.frame.hand->fingertip()) < 1e-9);
    for (int y = 0; y < 72; ++y)
      for (int x = 0; x < 96; ++x) {
        const int sx = x - s.translation.dx, sy = y - s.translation.dy;
        if (sx < 0 || sy < 0 || sx >= 96 || sy >= 72) {
          CHECK(s.frame.image.pixel(x, y) == fill);
        } else {
          CHECK(s.frame.image.pixel(x, y) == frame.image.pixel(sx, sy));
        }
      }
  }
}
