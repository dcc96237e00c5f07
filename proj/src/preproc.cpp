#include "fvd/preproc.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "fvd/error.hpp"

namespace fvd::preproc
{
namespace
{

std::uint8_t to_count(double v)
{
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

RasterImage from_planes(const std::array<Plane, 3> & planes)
{
  const int h = static_cast<int>(planes[0].rows());
  const int w = static_cast<int>(planes[0].cols());
  RasterImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(x, y, c) = to_count(planes[c](y, x));
      }
    }
  }
  return out;
}

// Convolves every row of `plane` with `taps`, replicating the edge samples.
Plane convolve_rows(const Plane & plane, const Eigen::VectorXd & taps)
{
  const int radius = static_cast<int>(taps.size() / 2);
  const int cols = static_cast<int>(plane.cols());
  Plane out(plane.rows(), plane.cols());
  for (Eigen::Index r = 0; r < plane.rows(); ++r) {
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += taps[k + radius] * plane(r, std::clamp(c + k, 0, cols - 1));
      }
      out(r, c) = acc;
    }
  }
  return out;
}

}  // namespace

RasterImage::RasterImage(int width_, int height_, std::array<std::uint8_t, 3> fill)
: width(width_), height(height_)
{
  if (width <= 0 || height <= 0) {
    throw ValidationError(fmt::format("image dimensions must be positive, got {}x{}", width, height));
  }
  pixels.resize(static_cast<std::size_t>(width) * height * channels);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = fill[i % channels];
  }
}

void RasterImage::validate() const
{
  if (width <= 0 || height <= 0) {
    throw ValidationError(fmt::format("invalid image dimensions {}x{}", width, height));
  }
  if (pixels.size() != static_cast<std::size_t>(width) * height * channels) {
    throw ValidationError("pixel buffer does not match image dimensions");
  }
}

void PreprocConfig::validate() const
{
  if (target_size <= 0) {
    throw InvalidParameter(fmt::format("target_size must be > 0, got {}", target_size));
  }
  for (double s : stddev) {
    if (!(s > 0.0)) {
      throw InvalidParameter(fmt::format("normalization std must be > 0, got {}", s));
    }
  }
  if (smooth_kernel < 3 || smooth_kernel % 2 == 0) {
    throw InvalidParameter(fmt::format("smooth_kernel must be odd and >= 3, got {}", smooth_kernel));
  }
  if (!(smooth_sigma > 0.0)) {
    throw InvalidParameter(fmt::format("smooth_sigma must be > 0, got {}", smooth_sigma));
  }
  for (double s : scales) {
    if (!(s > 0.0)) {
      throw InvalidParameter(fmt::format("scales must be > 0, got {}", s));
    }
  }
}

std::string to_string(Step step)
{
  switch (step) {
    case Step::smooth:
      return "smooth";
    case Step::equalize:
      return "equalize";
    case Step::resize:
      return "resize";
  }
  return "?";
}

Step step_from_string(const std::string & name)
{
  if (name == "smooth") {
    return Step::smooth;
  }
  if (name == "equalize") {
    return Step::equalize;
  }
  if (name == "resize") {
    return Step::resize;
  }
  throw InvalidParameter(fmt::format("unknown preprocessing step '{}'", name));
}

Plane channel_plane(const RasterImage & img, int channel)
{
  Plane p(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      p(y, x) = img.at(x, y, channel);
    }
  }
  return p;
}

RasterImage resize(const RasterImage & img, int width, int height)
{
  img.validate();
  if (width <= 0 || height <= 0) {
    throw InvalidParameter(fmt::format("resize target must be positive, got {}x{}", width, height));
  }
  if (width == img.width && height == img.height) {
    return img;
  }
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  RasterImage out(width, height);
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(x0, y0, c) * (1.0 - tx) + img.at(x1, y0, c) * tx;
        const double bottom = img.at(x0, y1, c) * (1.0 - tx) + img.at(x1, y1, c) * tx;
        out.at(x, y, c) = to_count(top * (1.0 - ty) + bottom * ty);
      }
    }
  }
  return out;
}

RasterImage resize(const RasterImage & img, int target_size)
{
  return resize(img, target_size, target_size);
}

NormalizedImage normalize(const RasterImage & img, const std::array<double, 3> & mean,
                          const std::array<double, 3> & stddev)
{
  img.validate();
  for (double s : stddev) {
    if (!(s > 0.0)) {
      throw InvalidParameter(fmt::format("normalization std must be > 0, got {}", s));
    }
  }
  NormalizedImage out;
  for (int c = 0; c < 3; ++c) {
    out.planes[c] = (channel_plane(img, c) / 255.0 - mean[c]) / stddev[c];
  }
  return out;
}

RasterImage denormalize(const NormalizedImage & img, const std::array<double, 3> & mean,
                        const std::array<double, 3> & stddev)
{
  std::array<Plane, 3> planes;
  for (int c = 0; c < 3; ++c) {
    planes[c] = (img.planes[c] * stddev[c] + mean[c]) * 255.0;
  }
  return from_planes(planes);
}

Eigen::VectorXd gaussian_kernel(int size, double sigma)
{
  if (size < 3 || size % 2 == 0) {
    throw InvalidParameter(fmt::format("kernel size must be odd and >= 3, got {}", size));
  }
  if (!(sigma > 0.0)) {
    throw InvalidParameter(fmt::format("kernel sigma must be > 0, got {}", sigma));
  }
  const int radius = size / 2;
  Eigen::VectorXd taps(size);
  for (int i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  }
  return taps / taps.sum();
}

RasterImage gaussian_smooth(const RasterImage & img, int kernel, double sigma)
{
  img.validate();
  const Eigen::VectorXd taps = gaussian_kernel(kernel, sigma);
  std::array<Plane, 3> planes;
  for (int c = 0; c < 3; ++c) {
    const Plane horizontal = convolve_rows(channel_plane(img, c), taps);
    planes[c] = convolve_rows(horizontal.transpose(), taps).transpose();
  }
  return from_planes(planes);
}

std::array<Plane, 3> to_ycbcr(const RasterImage & img)
{
  const Plane r = channel_plane(img, 0);
  const Plane g = channel_plane(img, 1);
  const Plane b = channel_plane(img, 2);
  return {Plane(0.299 * r + 0.587 * g + 0.114 * b),
          Plane(128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b),
          Plane(128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b)};
}

RasterImage from_ycbcr(const std::array<Plane, 3> & ycc)
{
  const Plane & y = ycc[0];
  const Plane cb = ycc[1] - 128.0;
  const Plane cr = ycc[2] - 128.0;
  return from_planes({Plane(y + 1.402 * cr), Plane(y - 0.344136 * cb - 0.714136 * cr),
                      Plane(y + 1.772 * cb)});
}

RasterImage hist_equalize(const RasterImage & img)
{
  img.validate();
  auto ycc = to_ycbcr(img);
  Plane & luma = ycc[0];

  std::array<long, 256> hist{};
  for (Eigen::Index i = 0; i < luma.size(); ++i) {
    hist[to_count(luma(i))] += 1;
  }
  std::array<long, 256> cdf{};
  long running = 0;
  for (int v = 0; v < 256; ++v) {
    running += hist[v];
    cdf[v] = running;
  }
  const long total = running;
  const long cdf_min = *std::find_if(cdf.begin(), cdf.end(), [](long c) { return c > 0; });
  if (total == cdf_min) {
    return img;  // single luma level
  }
  std::array<double, 256> lut{};
  for (int v = 0; v < 256; ++v) {
    lut[v] = cdf[v] <= cdf_min
               ? 0.0
               : std::round(static_cast<double>(cdf[v] - cdf_min) / (total - cdf_min) * 255.0);
  }
  for (Eigen::Index i = 0; i < luma.size(); ++i) {
    luma(i) = lut[to_count(luma(i))];
  }
  return from_ycbcr(ycc);
}

std::vector<RasterImage> multiscale(const RasterImage & img, const std::vector<double> & scales)
{
  img.validate();
  std::vector<RasterImage> out;
  for (double s : scales) {
    if (!(s > 0.0)) {
      throw InvalidParameter(fmt::format("scale must be > 0, got {}", s));
    }
    const long w = std::lround(s * img.width);
    const long h = std::lround(s * img.height);
    if (w <= 0 || h <= 0) {
      throw InvalidParameter(
        fmt::format("scale {} gives a zero dimension for a {}x{} image", s, img.width, img.height));
    }
    out.push_back(resize(img, static_cast<int>(w), static_cast<int>(h)));
  }
  return out;
}

GridCell grid_assign(const BoundingBox & box, int grid_size, int canvas)
{
  if (grid_size <= 0 || canvas <= 0 || canvas % grid_size != 0) {
    throw InvalidParameter(
      fmt::format("canvas {} is not divisible by grid size {}", canvas, grid_size));
  }
  const int cells = canvas / grid_size;
  auto cell = [cells](double v) {
    return std::clamp(static_cast<int>(std::floor(v * cells)), 0, cells - 1);
  };
  return {cell(box.cy), cell(box.cx)};
}

Prepared run_chain(const RasterImage & img, const PreprocConfig & cfg)
{
  cfg.validate();
  img.validate();
  Prepared out;
  out.image = img;
  for (Step step : cfg.order) {
    switch (step) {
      case Step::smooth:
        out.image = gaussian_smooth(out.image, cfg.smooth_kernel, cfg.smooth_sigma);
        break;
      case Step::equalize:
        out.image = hist_equalize(out.image);
        break;
      case Step::resize:
        out.image = resize(out.image, cfg.target_size);
        break;
    }
  }
  out.tensor = normalize(out.image, cfg.mean, cfg.stddev);
  out.scaled = multiscale(out.image, cfg.scales);
  return out;
}

}  // namespace fvd::preproc
