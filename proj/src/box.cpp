#include "fvd/box.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "fvd/error.hpp"

namespace fvd
{

bool BoundingBox::valid() const noexcept
{
  return cx >= 0.0 && cx <= 1.0 && cy >= 0.0 && cy <= 1.0 &&
         w > 0.0 && w <= 1.0 && h > 0.0 && h <= 1.0;
}

BoundingBox BoundingBox::checked(double cx, double cy, double w, double h)
{
  BoundingBox b{cx, cy, w, h};
  if (!b.valid()) {
    throw ValidationError(fmt::format(
      "box ({}, {}, {}, {}) outside normalized range", cx, cy, w, h));
  }
  return b;
}

Corners to_corners(const BoundingBox & box) noexcept
{
  const double hw = box.w / 2.0;
  const double hh = box.h / 2.0;
  return {box.cx - hw, box.cy - hh, box.cx + hw, box.cy + hh};
}

BoundingBox from_corners(const Corners & c) noexcept
{
  return {(c.x_min + c.x_max) / 2.0, (c.y_min + c.y_max) / 2.0,
          c.x_max - c.x_min, c.y_max - c.y_min};
}

double iou(const BoundingBox & a, const BoundingBox & b)
{
  if (!(a.w > 0.0 && a.h > 0.0 && b.w > 0.0 && b.h > 0.0)) {
    throw InvalidGeometry("iou: box with non-positive width or height");
  }
  if (a == b) {
    return 1.0;
  }
  const Corners ca = to_corners(a);
  const Corners cb = to_corners(b);
  const double iw = std::min(ca.x_max, cb.x_max) - std::max(ca.x_min, cb.x_min);
  const double ih = std::min(ca.y_max, cb.y_max) - std::max(ca.y_min, cb.y_min);
  if (iw <= 0.0 || ih <= 0.0) {
    return 0.0;
  }
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  // inter and uni are computed from the same operands in either argument
  // order, so the result is exactly symmetric.
  return std::clamp(inter / uni, 0.0, 1.0);
}

BoundingBox clamped(const BoundingBox & box, double min_size) noexcept
{
  return {std::clamp(box.cx, 0.0, 1.0), std::clamp(box.cy, 0.0, 1.0),
          std::clamp(box.w, min_size, 1.0), std::clamp(box.h, min_size, 1.0)};
}

void validate(const Detection & d)
{
  if (d.class_id < 0) {
    throw ValidationError(fmt::format("negative class id {}", d.class_id));
  }
  if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
    throw ValidationError(fmt::format("confidence {} outside [0,1]", d.confidence));
  }
  BoundingBox::checked(d.box.cx, d.box.cy, d.box.w, d.box.h);
}

void validate(const Annotation & a)
{
  if (a.class_id < 0) {
    throw ValidationError(fmt::format("negative class id {}", a.class_id));
  }
  BoundingBox::checked(a.box.cx, a.box.cy, a.box.w, a.box.h);
}

}  // namespace fvd
