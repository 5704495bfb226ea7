#include "ftip/geometry.hpp"

#include <algorithm>

namespace ftip::geometry {

BBox intersection(const BBox& a, const BBox& b) {
  return {std::max(a.x1, b.x1), std::max(a.y1, b.y1), std::min(a.x2, b.x2),
          std::min(a.y2, b.y2)};
}

IouResult iou_detail(const BBox& a, const BBox& b) {
  if (!a.valid() || !b.valid()) return {0.0, true};
  const BBox i = intersection(a, b);
  const double inter = i.valid() ? i.width() * i.height() : 0.0;
  const double uni = a.area() + b.area() - inter;
  return {std::clamp(inter / uni, 0.0, 1.0), false};
}

Image::Image(int width, int height, const Rgb& fill) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("image dimensions must be >= 1");
  for (int c = 0; c < 3; ++c)
    planes_[c] = Plane::Constant(height, width, std::clamp(fill[c], 0.0f, 1.0f));
}

Image::Image(std::array<Plane, 3> planes) : planes_(std::move(planes)) {
  for (int c = 1; c < 3; ++c)
    if (planes_[c].rows() != planes_[0].rows() ||
        planes_[c].cols() != planes_[0].cols())
      throw std::invalid_argument("image channels differ in size");
  if (planes_[0].size() == 0)
    throw std::invalid_argument("image dimensions must be >= 1");
  clamp();
}

void Image::clamp() {
  for (auto& p : planes_) p = p.max(0.0f).min(1.0f);
}

void Image::write_chw(float* dst) const {
  const Eigen::Index n = planes_[0].size();
  for (int c = 0; c < 3; ++c)
    std::copy(planes_[c].data(), planes_[c].data() + n, dst + c * n);
}

bool operator==(const Image& a, const Image& b) {
  if (a.size() != b.size()) return false;
  for (int c = 0; c < 3; ++c)
    if ((a.planes_[c] != b.planes_[c]).any()) return false;
  return true;
}

Translation centering_translation(Size image, const BBox& box) {
  const Point2 c = box.center();
  return {static_cast<int>(std::lround(0.5 * image.width - c.x)),
          static_cast<int>(std::lround(0.5 * image.height - c.y))};
}

Image translate(const Image& img, const Translation& t, const Rgb& fill) {
  const int w = img.width(), h = img.height();
  Image out(w, h, fill);
  // Destination rectangle that has a source pixel.
  const int x0 = std::clamp(t.dx, 0, w), x1 = std::clamp(w + t.dx, 0, w);
  const int y0 = std::clamp(t.dy, 0, h), y1 = std::clamp(h + t.dy, 0, h);
  if (x0 >= x1 || y0 >= y1) return out;
  for (int c = 0; c < 3; ++c)
    out.channel(c).block(y0, x0, y1 - y0, x1 - x0) =
        img.channel(c).block(y0 - t.dy, x0 - t.dx, y1 - y0, x1 - x0);
  return out;
}

Centralized centralize(const Image& img, const BBox& box, const Rgb& fill) {
  const Translation t = centering_translation(img.size(), box);
  return {translate(img, t, fill), t};
}

PatchTransform::PatchTransform(const BBox& src, Size tgt)
    : source(src), target(tgt) {
  if (!src.valid()) throw std::invalid_argument("degenerate crop");
  if (tgt.width < 1 || tgt.height < 1)
    throw std::invalid_argument("patch size must be >= 1x1");
  sx = tgt.width / src.width();
  sy = tgt.height / src.height();
}

float sample_bilinear(const Plane& plane, double x, double y) {
  const int w = static_cast<int>(plane.cols()), h = static_cast<int>(plane.rows());
  x = std::clamp(x, 0.0, double(w - 1));
  y = std::clamp(y, 0.0, double(h - 1));
  const int ix = std::min(static_cast<int>(x), w - 1);
  const int iy = std::min(static_cast<int>(y), h - 1);
  const int jx = std::min(ix + 1, w - 1), jy = std::min(iy + 1, h - 1);
  const double fx = x - ix, fy = y - iy;
  const double top = (1 - fx) * plane(iy, ix) + fx * plane(iy, jx);
  const double bottom = (1 - fx) * plane(jy, ix) + fx * plane(jy, jx);
  return static_cast<float>((1 - fy) * top + fy * bottom);
}

Patch crop_resize(const Image& img, const BBox& box, Size size,
                  const Rgb& fill) {
  if (!box.valid()) throw std::invalid_argument("degenerate crop");
  PatchTransform tf(box, size);
  Image out(size.width, size.height, fill);
  const int w = img.width(), h = img.height();
  for (int py = 0; py < size.height; ++py) {
    const double fy = box.y1 + (py + 0.5) / tf.sy;
    if (fy < 0 || fy >= h) continue;
    for (int px = 0; px < size.width; ++px) {
      const double fx = box.x1 + (px + 0.5) / tf.sx;
      if (fx < 0 || fx >= w) continue;
      for (int c = 0; c < 3; ++c)
        out(c, py, px) = sample_bilinear(img.channel(c), fx - 0.5, fy - 0.5);
    }
  }
  return {std::move(out), tf};
}

Resized resize_image(const Image& img, Size size) {
  if (size.width < 1 || size.height < 1)
    throw std::invalid_argument("resize target must be >= 1x1");
  const BBox whole{0, 0, double(img.width()), double(img.height())};
  Patch p = crop_resize(img, whole, size);
  return {std::move(p.image), {p.transform.sx, p.transform.sy}};
}

}  // namespace ftip::geometry
