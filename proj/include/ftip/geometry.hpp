#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>

namespace ftip::geometry {

// Continuous pixel coordinates: origin at the top-left corner of the image,
// x rightward, y downward. Pixel (i, j) covers [i, i+1) x [j, j+1) and its
// center sits at (i + 0.5, j + 0.5).
struct Point2 {
  double x = 0;
  double y = 0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(const Point2& a, const Point2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Half-open rectangle [x1, x2) x [y1, y2).
struct BBox {
  double x1 = 0;
  double y1 = 0;
  double x2 = 0;
  double y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return valid() ? width() * height() : 0.0; }
  Point2 center() const { return {0.5 * (x1 + x2), 0.5 * (y1 + y2)}; }
  bool valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
           std::isfinite(y2) && x1 < x2 && y1 < y2;
  }
  bool contains(const Point2& p) const {
    return p.x >= x1 && p.x < x2 && p.y >= y1 && p.y < y2;
  }
  // Grows every side by `fraction` of the corresponding extent.
  BBox inflated(double fraction) const {
    const double dx = fraction * width(), dy = fraction * height();
    return {x1 - dx, y1 - dy, x2 + dx, y2 + dy};
  }
  BBox expanded_by(double pixels) const {
    return {x1 - pixels, y1 - pixels, x2 + pixels, y2 + pixels};
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

BBox intersection(const BBox& a, const BBox& b);

struct IouResult {
  double value = 0;
  bool degenerate = false;  // an input box had zero (or negative) area
};

IouResult iou_detail(const BBox& a, const BBox& b);
inline double iou(const BBox& a, const BBox& b) { return iou_detail(a, b).value; }

struct Size {
  int width = 0;
  int height = 0;

  friend bool operator==(const Size&, const Size&) = default;
};

using Rgb = std::array<float, 3>;
using Plane =
    Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Three planar channels of reals in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, const Rgb& fill = {0, 0, 0});
  // Takes ownership of the planes and clamps them to [0, 1].
  explicit Image(std::array<Plane, 3> planes);

  int width() const { return static_cast<int>(planes_[0].cols()); }
  int height() const { return static_cast<int>(planes_[0].rows()); }
  Size size() const { return {width(), height()}; }
  bool empty() const { return planes_[0].size() == 0; }

  const Plane& channel(int c) const { return planes_[c]; }
  Plane& channel(int c) { return planes_[c]; }
  float operator()(int c, int y, int x) const { return planes_[c](y, x); }
  float& operator()(int c, int y, int x) { return planes_[c](y, x); }

  Rgb pixel(int x, int y) const {
    return {planes_[0](y, x), planes_[1](y, x), planes_[2](y, x)};
  }
  void set_pixel(int x, int y, const Rgb& v) {
    for (int c = 0; c < 3; ++c) planes_[c](y, x) = v[c];
  }

  void clamp();

  // Channel-major copy (C, H, W) into dst, which must hold 3*W*H floats.
  void write_chw(float* dst) const;

  friend bool operator==(const Image& a, const Image& b);

 private:
  std::array<Plane, 3> planes_;
};

struct Translation {
  int dx = 0;
  int dy = 0;

  friend bool operator==(const Translation&, const Translation&) = default;
};

inline Translation invert(const Translation& t) { return {-t.dx, -t.dy}; }
inline Translation compose(const Translation& first, const Translation& then) {
  return {first.dx + then.dx, first.dy + then.dy};
}
inline Point2 apply_translation(const Point2& p, const Translation& t) {
  return {p.x + t.dx, p.y + t.dy};
}
inline BBox apply_translation(const BBox& b, const Translation& t) {
  return {b.x1 + t.dx, b.y1 + t.dy, b.x2 + t.dx, b.y2 + t.dy};
}

// Integer offset that moves the center of `box` onto the image center:
// round(image_center - box_center), halves rounded away from zero.
Translation centering_translation(Size image, const BBox& box);

// Content shifted by t; pixels whose source lies outside the image get fill.
Image translate(const Image& img, const Translation& t, const Rgb& fill);

struct Centralized {
  Image image;
  Translation translation;
};

Centralized centralize(const Image& img, const BBox& box, const Rgb& fill);

// Maps between frame coordinates and the coordinates of a patch that
// resamples `source` to `target` pixels.
struct PatchTransform {
  BBox source;
  Size target;
  double sx = 1;
  double sy = 1;

  PatchTransform() = default;
  PatchTransform(const BBox& source, Size target);

  Point2 to_patch(const Point2& p) const {
    return {(p.x - source.x1) * sx, (p.y - source.y1) * sy};
  }
  Point2 to_frame(const Point2& p) const {
    return {source.x1 + p.x / sx, source.y1 + p.y / sy};
  }
};

struct Patch {
  Image image;
  PatchTransform transform;
};

// Bilinear resample of `box` to `size`. Samples whose position falls outside
// the image take `fill`; samples inside use edge-clamped bilinear weights.
// Throws std::invalid_argument("degenerate crop") for zero-area boxes.
Patch crop_resize(const Image& img, const BBox& box, Size size,
                  const Rgb& fill = {0, 0, 0});

struct Scale2 {
  double sx = 1;
  double sy = 1;
};

struct Resized {
  Image image;
  Scale2 scale;  // (new width / old width, new height / old height)
};

// Anisotropic bilinear resize of the whole image.
Resized resize_image(const Image& img, Size size);

// Edge-clamped bilinear sample at pixel-index coordinates (pixel i's center
// is at index coordinate i).
float sample_bilinear(const Plane& plane, double x, double y);

}  // namespace ftip::geometry
