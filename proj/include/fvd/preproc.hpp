#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fvd/box.hpp"

namespace fvd::preproc
{

/// 8-bit RGB image, row-major, interleaved (r, g, b per pixel).
struct RasterImage
{
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  static constexpr int channels = 3;

  RasterImage() = default;
  RasterImage(int width, int height, std::array<std::uint8_t, 3> fill = {0, 0, 0});

  std::uint8_t & at(int x, int y, int c) { return pixels[index(x, y, c)]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[index(x, y, c)]; }

  /// Throws ValidationError on zero dimensions or a buffer size mismatch.
  void validate() const;

  friend bool operator==(const RasterImage &, const RasterImage &) = default;

private:
  std::size_t index(int x, int y, int c) const
  {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
};

using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Real-valued image after normalization: one plane per channel.
struct NormalizedImage
{
  std::array<Plane, 3> planes;

  int width() const { return static_cast<int>(planes[0].cols()); }
  int height() const { return static_cast<int>(planes[0].rows()); }
};

enum class Step { smooth, equalize, resize };

struct PreprocConfig
{
  int target_size = 640;
  std::array<double, 3> mean = {0.485, 0.456, 0.406};
  std::array<double, 3> stddev = {0.229, 0.224, 0.225};
  int smooth_kernel = 5;
  double smooth_sigma = 1.0;
  std::vector<double> scales = {1.0};
  /// 8-bit steps in application order; normalization always runs last.
  std::vector<Step> order = {Step::smooth, Step::equalize, Step::resize};

  void validate() const;
};

std::string to_string(Step step);
Step step_from_string(const std::string & name);

Plane channel_plane(const RasterImage & img, int channel);

/// Bilinear resampling (pixel-center aligned) to an arbitrary size. Same-size
/// input is returned unchanged.
RasterImage resize(const RasterImage & img, int width, int height);
/// Square resize to target_size x target_size; aspect ratio is not preserved.
RasterImage resize(const RasterImage & img, int target_size);

/// (v / 255 - mean_c) / std_c per channel.
NormalizedImage normalize(const RasterImage & img, const std::array<double, 3> & mean,
                          const std::array<double, 3> & stddev);
/// Inverse of normalize, rounded to the nearest count.
RasterImage denormalize(const NormalizedImage & img, const std::array<double, 3> & mean,
                        const std::array<double, 3> & stddev);

/// Normalized 1-D Gaussian taps.
Eigen::VectorXd gaussian_kernel(int size, double sigma);

/// Separable Gaussian blur with edge replication.
RasterImage gaussian_smooth(const RasterImage & img, int kernel, double sigma);

/// Full-range BT.601 luma/chroma planes (Y, Cb, Cr).
std::array<Plane, 3> to_ycbcr(const RasterImage & img);
RasterImage from_ycbcr(const std::array<Plane, 3> & ycc);

/// Histogram equalization of the luma channel; chroma is left as is.
RasterImage hist_equalize(const RasterImage & img);

/// One image per scale, round(scale * W) x round(scale * H).
std::vector<RasterImage> multiscale(const RasterImage & img, const std::vector<double> & scales);

struct GridCell
{
  int row;
  int col;

  friend bool operator==(const GridCell &, const GridCell &) = default;
};

/// Cell of the box center on a (canvas / grid_size)^2 lattice.
GridCell grid_assign(const BoundingBox & box, int grid_size, int canvas = 640);

struct Prepared
{
  RasterImage image;         // after the 8-bit steps
  NormalizedImage tensor;    // after normalization
  std::vector<RasterImage> scaled;  // multiscale outputs of `image`
};

/// Runs the configured steps in order, then normalization and multiscale.
Prepared run_chain(const RasterImage & img, const PreprocConfig & cfg);

}  // namespace fvd::preproc
