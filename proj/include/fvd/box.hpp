#pragma once

#include <Eigen/Core>

namespace fvd
{

/// Axis-aligned box in normalized image coordinates (center + size).
struct BoundingBox
{
  double cx = 0.5;
  double cy = 0.5;
  double w = 0.0;
  double h = 0.0;

  /// Throws ValidationError unless 0 <= cx, cy <= 1 and 0 < w, h <= 1.
  static BoundingBox checked(double cx, double cy, double w, double h);

  bool valid() const noexcept;
  Eigen::Vector4d as_vector() const noexcept { return {cx, cy, w, h}; }
  static BoundingBox from_vector(const Eigen::Ref<const Eigen::Vector4d> & v) noexcept
  {
    return {v[0], v[1], v[2], v[3]};
  }

  friend bool operator==(const BoundingBox &, const BoundingBox &) = default;
};

struct Corners
{
  double x_min;
  double y_min;
  double x_max;
  double y_max;

  friend bool operator==(const Corners &, const Corners &) = default;
};

struct Detection
{
  int class_id = 0;
  double confidence = 0.0;
  BoundingBox box;

  friend bool operator==(const Detection &, const Detection &) = default;
};

struct Annotation
{
  int class_id = 0;
  BoundingBox box;

  friend bool operator==(const Annotation &, const Annotation &) = default;
};

Corners to_corners(const BoundingBox & box) noexcept;
BoundingBox from_corners(const Corners & c) noexcept;

/// Intersection over union. Throws InvalidGeometry for non-positive sizes.
double iou(const BoundingBox & a, const BoundingBox & b);

/// Pulls the center into [0,1] and the size into [min_size, 1]. Never applied
/// implicitly: jittered boxes must be clamped by the caller.
BoundingBox clamped(const BoundingBox & box, double min_size = 1e-3) noexcept;

void validate(const Detection & d);
void validate(const Annotation & a);

}  // namespace fvd
