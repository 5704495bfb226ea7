#include "ftip/datagen.hpp"

#include "ftip/image_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace ftip::datagen {

namespace fs = std::filesystem;
using geometry::Translation;

const char* to_string(Direction d) {
  switch (d) {
    case Direction::left: return "left";
    case Direction::up: return "up";
    case Direction::right: return "right";
  }
  return "?";
}

Direction direction_from_string(const std::string& s) {
  if (s == "left") return Direction::left;
  if (s == "up") return Direction::up;
  if (s == "right") return Direction::right;
  throw std::invalid_argument("unknown direction '" + s + "'");
}

namespace {

Point2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

double segment_distance(const Point2& p, const Point2& a, const Point2& b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

Rgb random_color(Rng& rng, double lo = 0.05, double hi = 0.95) {
  return {float(rng.uniform(lo, hi)), float(rng.uniform(lo, hi)),
          float(rng.uniform(lo, hi))};
}

Rgb skin_color(Rng& rng) {
  const double k = rng.uniform(0.75, 1.08);
  return {float(std::min(1.0, 0.90 * k + rng.uniform(-0.04, 0.04))),
          float(std::min(1.0, 0.68 * k + rng.uniform(-0.04, 0.04))),
          float(std::min(1.0, 0.55 * k + rng.uniform(-0.04, 0.04)))};
}

bool in_ellipse(const Point2& p, const Point2& c, double rx, double ry,
                double angle) {
  const double dx = p.x - c.x, dy = p.y - c.y;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
  return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
}

template <typename Inside>
void paint(Image& img, const BBox& bounds, const Rgb& color, Inside inside) {
  const int x0 = std::max(0, int(std::floor(bounds.x1)));
  const int y0 = std::max(0, int(std::floor(bounds.y1)));
  const int x1 = std::min(img.width(), int(std::ceil(bounds.x2)) + 1);
  const int y1 = std::min(img.height(), int(std::ceil(bounds.y2)) + 1);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      if (inside(Point2{x + 0.5, y + 0.5})) img.set_pixel(x, y, color);
}

BBox hand_bounds(const HandGeometry& h) {
  const double r = std::max(h.palm_rx, h.palm_ry);
  BBox b{h.palm_center.x - r, h.palm_center.y - r, h.palm_center.x + r,
         h.palm_center.y + r};
  for (const Point2& p : {h.finger_base, h.finger_end}) {
    b.x1 = std::min(b.x1, p.x - h.finger_radius);
    b.y1 = std::min(b.y1, p.y - h.finger_radius);
    b.x2 = std::max(b.x2, p.x + h.finger_radius);
    b.y2 = std::max(b.y2, p.y + h.finger_radius);
  }
  return b;
}

// Tight box of pixels whose centers are inside the hand, on an unbounded
// raster (parts beyond the image border count).
BBox tight_hand_box(const HandGeometry& h) {
  const BBox b = hand_bounds(h);
  int minx = INT32_MAX, miny = INT32_MAX, maxx = INT32_MIN, maxy = INT32_MIN;
  for (int y = int(std::floor(b.y1)) - 1; y <= int(std::ceil(b.y2)) + 1; ++y)
    for (int x = int(std::floor(b.x1)) - 1; x <= int(std::ceil(b.x2)) + 1; ++x)
      if (h.contains({x + 0.5, y + 0.5})) {
        minx = std::min(minx, x);
        miny = std::min(miny, y);
        maxx = std::max(maxx, x);
        maxy = std::max(maxy, y);
      }
  if (minx == INT32_MAX) {
    const Point2 c = h.palm_center;
    return {std::floor(c.x), std::floor(c.y), std::floor(c.x) + 1,
            std::floor(c.y) + 1};
  }
  return {double(minx), double(miny), double(maxx + 1), double(maxy + 1)};
}

}  // namespace

Point2 HandGeometry::fingertip() const {
  const Point2 d = unit(angle);
  return {finger_end.x + finger_radius * d.x, finger_end.y + finger_radius * d.y};
}

Point2 HandGeometry::joint() const {
  const Point2 d = unit(angle);
  const double length = geometry::distance(finger_base, finger_end) +
                        2 * finger_radius;
  const Point2 tip = fingertip();
  return {tip.x - kJointFraction * length * d.x,
          tip.y - kJointFraction * length * d.y};
}

bool HandGeometry::contains(const Point2& p) const {
  return in_ellipse(p, palm_center, palm_rx, palm_ry, angle) ||
         segment_distance(p, finger_base, finger_end) <= finger_radius;
}

Point2 SceneParams::mean() const {
  return location_mean.value_or(
      Point2{0.5 * image_size.width, 0.5 * image_size.height});
}
double SceneParams::sx() const {
  return sigma_x < 0 ? image_size.width / 6.0 : sigma_x;
}
double SceneParams::sy() const {
  return sigma_y < 0 ? image_size.height / 6.0 : sigma_y;
}

void SceneParams::validate() const {
  if (image_size.width < 8 || image_size.height < 8)
    throw std::invalid_argument("image_size must be at least 8x8");
  auto prob = [](double p, const char* name) {
    if (!(p >= 0 && p <= 1))
      throw std::invalid_argument(std::string(name) + " must be in [0, 1]");
  };
  prob(left_weight, "left_weight");
  prob(dark_fraction, "dark_fraction");
  prob(uniform_inset, "uniform_inset");
  if (uniform_inset >= 0.5)
    throw std::invalid_argument("uniform_inset must be < 0.5");
  if (distractors_min < 0 || distractors_max < distractors_min)
    throw std::invalid_argument("invalid distractor count range");
  if (!(hand_scale_min > 0 && hand_scale_max >= hand_scale_min))
    throw std::invalid_argument("invalid hand scale range");
  if (!std::isfinite(sx()) || !std::isfinite(sy()) || sx() < 0 || sy() < 0)
    throw std::invalid_argument("location sigma must be >= 0");
}

LabeledFrame generate_frame(const SceneParams& params, std::uint64_t index) {
  params.validate();
  Rng rng = Rng::stream(params.seed, "frame", index);
  const int w = params.image_size.width, h = params.image_size.height;
  const double min_dim = std::min(w, h);

  // Background: linear gradient between two random colors.
  const Rgb c0 = random_color(rng), c1 = random_color(rng);
  const Point2 gd = unit(rng.uniform(0, 2 * std::numbers::pi));
  const double half_diag = 0.5 * std::hypot(w, h);
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double t = std::clamp(
          0.5 + 0.5 * ((x + 0.5 - 0.5 * w) * gd.x + (y + 0.5 - 0.5 * h) * gd.y) /
                    half_diag,
          0.0, 1.0);
      for (int c = 0; c < 3; ++c)
        img(c, y, x) = float((1 - t) * c0[c] + t * c1[c]);
    }

  // Distractor shapes.
  const auto n_distractors =
      rng.uniform_int(params.distractors_min, params.distractors_max);
  for (std::int64_t i = 0; i < n_distractors; ++i) {
    const Rgb color = random_color(rng);
    const Point2 c{rng.uniform(0, w), rng.uniform(0, h)};
    const double rx = rng.uniform(0.04, 0.15) * min_dim;
    const double ry = rng.uniform(0.04, 0.15) * min_dim;
    const BBox bounds{c.x - rx, c.y - ry, c.x + rx, c.y + ry};
    if (rng.bernoulli(0.5)) {
      paint(img, bounds, color, [&](const Point2& p) { return bounds.contains(p); });
    } else {
      paint(img, bounds, color,
            [&](const Point2& p) { return in_ellipse(p, c, rx, ry, 0.0); });
    }
  }

  // One skin-colored blob, always.
  {
    const Rgb color = skin_color(rng);
    const Point2 c{rng.uniform(0, w), rng.uniform(0, h)};
    const double r = rng.uniform(0.5, 0.8) * params.hand_scale_min * min_dim;
    const double ry = r * rng.uniform(0.6, 1.0);
    const double a = rng.uniform(0, std::numbers::pi);
    paint(img, {c.x - r, c.y - r, c.x + r, c.y + r}, color,
          [&](const Point2& p) { return in_ellipse(p, c, r, ry, a); });
  }

  // Hand pose.
  FrameMeta meta;
  if (rng.bernoulli(params.left_weight)) {
    meta.dir = Direction::left;
  } else {
    meta.dir = rng.bernoulli(0.5) ? Direction::up : Direction::right;
  }
  meta.dark = rng.bernoulli(params.dark_fraction);
  const double base_angle = meta.dir == Direction::left  ? std::numbers::pi
                            : meta.dir == Direction::up ? -0.5 * std::numbers::pi
                                                         : 0.0;
  const double jitter = 25.0 * std::numbers::pi / 180.0;

  HandGeometry hand;
  hand.angle = base_angle + rng.uniform(-jitter, jitter);
  hand.palm_rx =
      rng.uniform(params.hand_scale_min, params.hand_scale_max) * min_dim;
  hand.palm_ry = 0.85 * hand.palm_rx;

  bool placed = false;
  for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
    if (params.placement == Placement::gaussian) {
      const Point2 m = params.mean();
      hand.palm_center = {rng.normal(m.x, params.sx()),
                          rng.normal(m.y, params.sy())};
    } else {
      const double ix = params.uniform_inset * w, iy = params.uniform_inset * h;
      hand.palm_center = {rng.uniform(ix, w - ix), rng.uniform(iy, h - iy)};
    }
    placed = hand.palm_center.x >= 0 && hand.palm_center.x < w &&
             hand.palm_center.y >= 0 && hand.palm_center.y < h;
  }
  if (!placed)
    throw std::runtime_error("generate_frame: no in-frame hand position after "
                             "100 attempts (index " + std::to_string(index) + ")");

  const Point2 d = unit(hand.angle);
  const double r = hand.palm_rx;
  hand.finger_radius = 0.3 * r;
  hand.finger_base = {hand.palm_center.x + 0.6 * r * d.x,
                      hand.palm_center.y + 0.6 * r * d.y};
  const double length = rng.uniform(1.1, 1.4) * r;
  hand.finger_end = {hand.finger_base.x + length * d.x,
                     hand.finger_base.y + length * d.y};

  const Rgb skin = skin_color(rng);
  paint(img, hand_bounds(hand), skin,
        [&](const Point2& p) { return hand.contains(p); });

  // Global brightness and sensor noise.
  const double brightness =
      meta.dark ? rng.uniform(0.25, 0.45) : rng.uniform(0.8, 1.0);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img(c, y, x) =
            float(img(c, y, x) * brightness + rng.uniform(-0.02, 0.02));
  img.clamp();

  LabeledFrame frame;
  frame.image = std::move(img);
  frame.hand_box = tight_hand_box(hand);
  frame.fingertip = hand.fingertip();
  frame.joint = hand.joint();
  frame.meta = meta;
  frame.hand = hand;
  return frame;
}

// ---------------------------------------------------------------- manifest

std::string record_to_jsonl(const ManifestRecord& r) {
  nlohmann::ordered_json j;
  j["image"] = r.image;
  j["bbox"] = {r.bbox.x1, r.bbox.y1, r.bbox.x2, r.bbox.y2};
  j["fingertip"] = {r.fingertip.x, r.fingertip.y};
  j["joint"] = {r.joint.x, r.joint.y};
  j["meta"] = {{"dark", r.meta.dark}, {"dir", to_string(r.meta.dir)}};
  return j.dump();
}

ManifestRecord record_from_jsonl(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  ManifestRecord r;
  r.image = j.at("image").get<std::string>();
  const auto& b = j.at("bbox");
  if (b.size() != 4) throw std::invalid_argument("bbox needs 4 numbers");
  r.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
            b[3].get<double>()};
  const auto& f = j.at("fingertip");
  const auto& k = j.at("joint");
  if (f.size() != 2 || k.size() != 2)
    throw std::invalid_argument("points need 2 numbers");
  r.fingertip = {f[0].get<double>(), f[1].get<double>()};
  r.joint = {k[0].get<double>(), k[1].get<double>()};
  if (j.contains("meta")) {
    const auto& m = j.at("meta");
    r.meta.dark = m.value("dark", false);
    r.meta.dir = direction_from_string(m.value("dir", std::string("left")));
  }
  return r;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write manifest " + path.string());
  for (const auto& r : manifest.records) f << record_to_jsonl(r) << '\n';
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

DatasetManifest read_manifest(const fs::path& path, bool check_files) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read manifest " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      m.records.push_back(record_from_jsonl(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": " + e.what());
    }
    if (check_files && !fs::exists(m.image_path(m.records.back())))
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": missing image " +
                               m.image_path(m.records.back()).string());
  }
  return m;
}

DatasetManifest generate_dataset(const SceneParams& params, std::size_t count,
                                 const fs::path& out_dir) {
  params.validate();
  fs::create_directories(out_dir / "images");
  DatasetManifest m;
  m.root = out_dir;
  for (std::size_t i = 0; i < count; ++i) {
    const LabeledFrame frame = generate_frame(params, i);
    char name[32];
    std::snprintf(name, sizeof(name), "images/%06zu.png", i);
    write_png(out_dir / name, frame.image);
    m.records.push_back(
        {name, frame.hand_box, frame.fingertip, frame.joint, frame.meta});
  }
  write_manifest(m, out_dir / kManifestName);
  return m;
}

LabeledFrame load_frame(const DatasetManifest& manifest,
                        const ManifestRecord& record) {
  LabeledFrame f;
  f.image = read_png(manifest.image_path(record));
  f.hand_box = record.bbox;
  f.fingertip = record.fingertip;
  f.joint = record.joint;
  f.meta = record.meta;
  return f;
}

std::vector<LabeledFrame> load_frames(const DatasetManifest& manifest) {
  std::vector<LabeledFrame> frames;
  frames.reserve(manifest.records.size());
  for (const auto& r : manifest.records) frames.push_back(load_frame(manifest, r));
  return frames;
}

namespace {

struct MeanAccumulator {
  std::array<double, 3> sum{0, 0, 0};
  double pixels = 0;

  void add(const Image& img) {
    for (int c = 0; c < 3; ++c)
      sum[c] += img.channel(c).cast<double>().sum();
    pixels += double(img.width()) * img.height();
  }
  Rgb mean() const {
    return {float(sum[0] / pixels), float(sum[1] / pixels),
            float(sum[2] / pixels)};
  }
};

}  // namespace

Rgb dataset_mean(const DatasetManifest& manifest) {
  if (manifest.records.empty())
    throw std::invalid_argument("dataset_mean: empty manifest");
  std::vector<const ManifestRecord*> sorted;
  for (const auto& r : manifest.records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const ManifestRecord* a, const ManifestRecord* b) {
              return a->image < b->image;
            });
  MeanAccumulator acc;
  for (const auto* r : sorted) acc.add(read_png(manifest.image_path(*r)));
  return acc.mean();
}

Rgb dataset_mean(std::span<const LabeledFrame> frames) {
  if (frames.empty()) throw std::invalid_argument("dataset_mean: no frames");
  MeanAccumulator acc;
  for (const auto& f : frames) acc.add(f.image);
  return acc.mean();
}

// ------------------------------------------------------------ augmentation

LabeledFrame translate_labels(const LabeledFrame& frame, const Translation& t) {
  LabeledFrame out;
  out.hand_box = geometry::apply_translation(frame.hand_box, t);
  out.fingertip = geometry::apply_translation(frame.fingertip, t);
  out.joint = geometry::apply_translation(frame.joint, t);
  out.meta = frame.meta;
  if (frame.hand) {
    HandGeometry g = *frame.hand;
    g.palm_center = geometry::apply_translation(g.palm_center, t);
    g.finger_base = geometry::apply_translation(g.finger_base, t);
    g.finger_end = geometry::apply_translation(g.finger_end, t);
    out.hand = g;
  }
  return out;
}

LabeledFrame crop_frame(const LabeledFrame& frame, int x, int y, Size size) {
  const Image& src = frame.image;
  if (x < 0 || y < 0 || x + size.width > src.width() ||
      y + size.height > src.height())
    throw std::invalid_argument("crop window outside image");
  LabeledFrame out = translate_labels(frame, {-x, -y});
  std::array<geometry::Plane, 3> planes;
  for (int c = 0; c < 3; ++c)
    planes[c] = src.channel(c).block(y, x, size.height, size.width);
  out.image = Image(std::move(planes));
  return out;
}

AugmentedFrame augment_detection_sample(const LabeledFrame& frame,
                                        Size train_size, Size crop_size,
                                        Rng& rng) {
  if (crop_size.width > train_size.width || crop_size.height > train_size.height)
    throw std::invalid_argument("crop_size must not exceed train_size");
  auto resized = geometry::resize_image(frame.image, train_size);
  const double sx = resized.scale.sx, sy = resized.scale.sy;
  LabeledFrame scaled;
  scaled.image = std::move(resized.image);
  scaled.hand_box = {frame.hand_box.x1 * sx, frame.hand_box.y1 * sy,
                     frame.hand_box.x2 * sx, frame.hand_box.y2 * sy};
  scaled.fingertip = {frame.fingertip.x * sx, frame.fingertip.y * sy};
  scaled.joint = {frame.joint.x * sx, frame.joint.y * sy};
  scaled.meta = frame.meta;

  const int max_x = train_size.width - crop_size.width;
  const int max_y = train_size.height - crop_size.height;
  const double box_area = scaled.hand_box.area();
  for (int attempt = 0; attempt < 50; ++attempt) {
    const int ox = static_cast<int>(rng.uniform_int(0, max_x));
    const int oy = static_cast<int>(rng.uniform_int(0, max_y));
    const BBox window{double(ox), double(oy), double(ox + crop_size.width),
                      double(oy + crop_size.height)};
    const double kept = geometry::intersection(scaled.hand_box, window).area();
    if (box_area <= 0 || kept >= 0.5 * box_area)
      return {crop_frame(scaled, ox, oy, crop_size), false, ox, oy};
  }
  const int ox = max_x / 2, oy = max_y / 2;
  return {crop_frame(scaled, ox, oy, crop_size), true, ox, oy};
}

Point2 Similarity::apply(const Point2& p) const {
  const double t = theta_deg * std::numbers::pi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  const double dx = p.x - center.x, dy = p.y - center.y;
  return {center.x + scale * (c * dx - s * dy),
          center.y + scale * (s * dx + c * dy)};
}

Similarity Similarity::inverse() const {
  return {1.0 / scale, -theta_deg, center};
}

Image warp_similarity(const Image& img, const Similarity& sim, const Rgb& fill) {
  const int w = img.width(), h = img.height();
  const Similarity inv = sim.inverse();
  Image out(w, h, fill);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Point2 p = inv.apply({x + 0.5, y + 0.5});
      if (p.x < 0 || p.x >= w || p.y < 0 || p.y >= h) continue;
      for (int c = 0; c < 3; ++c)
        out(c, y, x) =
            geometry::sample_bilinear(img.channel(c), p.x - 0.5, p.y - 0.5);
    }
  return out;
}

KeypointSample augment_keypoint_sample(const Image& patch,
                                       std::span<const Point2> keypoints,
                                       const AffineRange& range, Rng& rng,
                                       const Rgb& fill) {
  if (!(range.scale_min > 0 && range.scale_max >= range.scale_min &&
        range.rotation_deg >= 0))
    throw std::invalid_argument("invalid affine augmentation range");
  const Point2 center{0.5 * patch.width(), 0.5 * patch.height()};
  const BBox bounds{0, 0, double(patch.width()), double(patch.height())};
  for (int attempt = 0; attempt < 20; ++attempt) {
    Similarity sim{rng.uniform(range.scale_min, range.scale_max),
                   rng.uniform(-range.rotation_deg, range.rotation_deg), center};
    std::vector<Point2> mapped;
    bool inside = true;
    for (const auto& k : keypoints) {
      mapped.push_back(sim.apply(k));
      inside = inside && bounds.contains(mapped.back());
    }
    if (inside)
      return {warp_similarity(patch, sim, fill), std::move(mapped), sim, false};
  }
  return {patch, {keypoints.begin(), keypoints.end()}, Similarity{1, 0, center},
          true};
}

CenteredSample synthesize_centered_sample(const LabeledFrame& frame,
                                          int bias_max, const Rgb& fill,
                                          Rng& rng) {
  if (bias_max < 0) throw std::invalid_argument("bias_max must be >= 0");
  const Translation center =
      geometry::centering_translation(frame.image.size(), frame.hand_box);
  const Translation bias{static_cast<int>(rng.uniform_int(-bias_max, bias_max)),
                         static_cast<int>(rng.uniform_int(-bias_max, bias_max))};
  const Translation t = geometry::compose(center, bias);
  CenteredSample out{translate_labels(frame, t), t};
  out.frame.image = geometry::translate(frame.image, t, fill);
  return out;
}

DatasetSummary summarize(const DatasetManifest& manifest) {
  DatasetSummary s;
  s.count = manifest.records.size();
  if (s.count == 0) return s;
  for (const auto& r : manifest.records) {
    s.dark_fraction += r.meta.dark;
    s.left_fraction += r.meta.dir == Direction::left;
    s.up_fraction += r.meta.dir == Direction::up;
    s.right_fraction += r.meta.dir == Direction::right;
  }
  const double n = double(s.count);
  s.dark_fraction /= n;
  s.left_fraction /= n;
  s.up_fraction /= n;
  s.right_fraction /= n;
  return s;
}

}  // namespace ftip::datagen
