#include "fvd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <fmt/core.h>

#include "fvd/error.hpp"
#include "fvd/png_io.hpp"

namespace fvd::synth
{

std::uint64_t fnv1a64(std::string_view text) noexcept
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng make_stream(std::uint64_t seed, std::string_view key)
{
  return Rng(splitmix64(seed ^ fnv1a64(key)));
}

namespace
{

double uniform(Rng & rng, double lo, double hi)
{
  return lo + (hi - lo) * boost::random::uniform_01<double>()(rng);
}

int uniform_int(Rng & rng, int lo, int hi)
{
  return boost::random::uniform_int_distribution<int>(lo, hi)(rng);
}

double normal(Rng & rng)
{
  return boost::random::normal_distribution<double>(0.0, 1.0)(rng);
}

void check_rate(double v, const char * name, bool allow_one = false)
{
  if (!(v >= 0.0) || (allow_one ? v > 1.0 : v >= 1.0)) {
    throw InvalidParameter(fmt::format("{} must be in [0,1{}, got {}", name,
                                       allow_one ? "]" : ")", v));
  }
}

struct PixelBox
{
  int x0, y0, w, h;
};

bool overlaps(const PixelBox & a, const PixelBox & b)
{
  return a.x0 < b.x0 + b.w && b.x0 < a.x0 + a.w && a.y0 < b.y0 + b.h && b.y0 < a.y0 + a.h;
}

bool inside_shape(Shape shape, const PixelBox & box, int px, int py)
{
  const double hx = box.w / 2.0;
  const double hy = box.h / 2.0;
  const double dx = px + 0.5 - (box.x0 + hx);
  const double dy = py + 0.5 - (box.y0 + hy);
  switch (shape) {
    case Shape::circle:
    case Shape::ellipse:
      return (dx * dx) / (hx * hx) + (dy * dy) / (hy * hy) <= 1.0;
    case Shape::rounded_rect: {
      const double r = 0.25 * std::min(box.w, box.h);
      const double ex = std::max(std::abs(dx) - (hx - r), 0.0);
      const double ey = std::max(std::abs(dy) - (hy - r), 0.0);
      return ex * ex + ey * ey <= r * r;
    }
  }
  return false;
}

void draw(preproc::RasterImage & img, Shape shape, const PixelBox & box,
          const std::array<std::uint8_t, 3> & color)
{
  for (int y = box.y0; y < box.y0 + box.h; ++y) {
    for (int x = box.x0; x < box.x0 + box.w; ++x) {
      if (inside_shape(shape, box, x, y)) {
        for (int c = 0; c < 3; ++c) {
          img.at(x, y, c) = color[c];
        }
      }
    }
  }
}

}  // namespace

Shape shape_of(int class_id) noexcept
{
  switch (class_id % 3) {
    case 0:
      return Shape::circle;
    case 1:
      return Shape::ellipse;
    default:
      return Shape::rounded_rect;
  }
}

std::array<std::uint8_t, 3> color_of(int class_id) noexcept
{
  // Hue walk by the golden angle, full saturation, bright value.
  const double hue = std::fmod(class_id * 137.508, 360.0) / 60.0;
  const double x = 1.0 - std::abs(std::fmod(hue, 2.0) - 1.0);
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hue)) {
    case 0: r = 1; g = x; break;
    case 1: r = x; g = 1; break;
    case 2: g = 1; b = x; break;
    case 3: g = x; b = 1; break;
    case 4: r = x; b = 1; break;
    default: r = 1; b = x; break;
  }
  auto count = [](double v) { return static_cast<std::uint8_t>(std::lround(60 + 195 * v)); };
  return {count(r), count(g), count(b)};
}

void SceneSpec::validate() const
{
  if (canvas_px < 16) {
    throw InvalidParameter(fmt::format("canvas_px must be >= 16, got {}", canvas_px));
  }
  if (num_classes < 1) {
    throw InvalidParameter(fmt::format("num_classes must be >= 1, got {}", num_classes));
  }
  if (min_objects < 0 || max_objects < min_objects) {
    throw InvalidParameter(
      fmt::format("objects_per_image range [{}, {}] is empty", min_objects, max_objects));
  }
  if (!(min_size > 0.0) || !(max_size <= 1.0) || max_size < min_size) {
    throw InvalidParameter(fmt::format("size range [{}, {}] invalid", min_size, max_size));
  }
}

std::vector<SynthImage> generate_dataset(const SceneSpec & spec, int count,
                                         const std::string & id_prefix)
{
  spec.validate();
  std::vector<SynthImage> out;
  const int canvas = spec.canvas_px;
  for (int index = 0; index < count; ++index) {
    SynthImage item;
    item.record.image_id = fmt::format("{}_{:05d}", id_prefix, index);
    item.record.path = item.record.image_id + ".png";
    item.record.width_px = canvas;
    item.record.height_px = canvas;
    item.image = preproc::RasterImage(canvas, canvas, spec.background);

    Rng rng = make_stream(spec.seed, item.record.image_id);
    const int objects = uniform_int(rng, spec.min_objects, spec.max_objects);
    std::vector<PixelBox> placed;
    for (int k = 0; k < objects; ++k) {
      const int cls = uniform_int(rng, 0, spec.num_classes - 1);
      const Shape shape = shape_of(cls);
      PixelBox box{};
      bool ok = false;
      for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
        box.w = std::max(2, static_cast<int>(std::lround(uniform(rng, spec.min_size, spec.max_size) * canvas)));
        box.h = shape == Shape::circle
                  ? box.w
                  : std::max(2, static_cast<int>(std::lround(uniform(rng, spec.min_size, spec.max_size) * canvas)));
        box.x0 = uniform_int(rng, 0, canvas - box.w);
        box.y0 = uniform_int(rng, 0, canvas - box.h);
        ok = spec.overlap_allowed ||
             std::none_of(placed.begin(), placed.end(),
                          [&](const PixelBox & p) { return overlaps(p, box); });
      }
      if (!ok) {
        throw GenerationError(fmt::format(
          "{}: could not place object {} without overlap after 1000 attempts",
          item.record.image_id, k));
      }
      placed.push_back(box);
      draw(item.image, shape, box, color_of(cls));
      Annotation a;
      a.class_id = cls;
      a.box = {(box.x0 + box.w / 2.0) / canvas, (box.y0 + box.h / 2.0) / canvas,
               static_cast<double>(box.w) / canvas, static_cast<double>(box.h) / canvas};
      item.record.annotations.push_back(a);
    }
    out.push_back(std::move(item));
  }
  return out;
}

std::filesystem::path write_dataset(const std::vector<SynthImage> & images,
                                    const std::filesystem::path & dir)
{
  std::filesystem::create_directories(dir);
  std::vector<ImageRecord> records;
  for (const auto & item : images) {
    const auto image_path = dir / item.record.path;
    preproc::write_png(item.image, image_path);
    write_annotations(item.record.annotations, label_path_for(image_path));
    records.push_back(item.record);
  }
  const auto manifest = dir / "manifest.tsv";
  write_manifest(records, manifest);
  return manifest;
}

void MockDetectorSpec::validate() const
{
  if (!(center_jitter_sigma >= 0.0) || !(size_jitter_sigma >= 0.0) || !(confidence_sigma >= 0.0)) {
    throw InvalidParameter("mock detector sigmas must be >= 0");
  }
  check_rate(miss_rate, "miss_rate", true);
  if (small_object_miss_rate >= 0.0) {
    check_rate(small_object_miss_rate, "small_object_miss_rate", true);
  }
  check_rate(class_error_rate, "class_error_rate");
  if (!(false_positive_rate >= 0.0)) {
    throw InvalidParameter(fmt::format("false_positive_rate must be >= 0, got {}", false_positive_rate));
  }
  if (!(confidence_mean > 0.0 && confidence_mean < 1.0) ||
      !(false_positive_confidence_mean > 0.0 && false_positive_confidence_mean < 1.0)) {
    throw InvalidParameter("mock detector confidence means must be in (0,1)");
  }
  if (num_classes < 1) {
    throw InvalidParameter("mock detector num_classes must be >= 1");
  }
}

std::vector<Detection> mock_detect(const ImageRecord & record, const MockDetectorSpec & spec)
{
  spec.validate();
  Rng rng = make_stream(spec.seed, record.image_id);
  auto confidence = [&](double mean) {
    return std::clamp(mean + spec.confidence_sigma * normal(rng), 0.0, 1.0);
  };

  std::vector<Detection> out;
  for (const auto & gt : record.annotations) {
    const bool small = std::max(gt.box.w, gt.box.h) < spec.small_object_size;
    const double miss = small && spec.small_object_miss_rate >= 0.0 ? spec.small_object_miss_rate
                                                                     : spec.miss_rate;
    if (boost::random::uniform_01<double>()(rng) < miss) {
      continue;
    }
    Detection d;
    d.box.cx = gt.box.cx + spec.center_jitter_sigma * gt.box.w * normal(rng);
    d.box.cy = gt.box.cy + spec.center_jitter_sigma * gt.box.h * normal(rng);
    d.box.w = gt.box.w * std::exp(spec.size_jitter_sigma * normal(rng));
    d.box.h = gt.box.h * std::exp(spec.size_jitter_sigma * normal(rng));
    d.box = clamped(d.box);
    d.confidence = confidence(spec.confidence_mean);
    d.class_id = gt.class_id;
    if (spec.num_classes > 1 && boost::random::uniform_01<double>()(rng) < spec.class_error_rate) {
      const int other = uniform_int(rng, 0, spec.num_classes - 2);
      d.class_id = other >= gt.class_id ? other + 1 : other;
    }
    out.push_back(d);
  }

  if (spec.false_positive_rate > 0.0) {
    const int fps = boost::random::poisson_distribution<int, double>(spec.false_positive_rate)(rng);
    for (int i = 0; i < fps; ++i) {
      Detection d;
      d.box = clamped({uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0), uniform(rng, 0.03, 0.3),
                       uniform(rng, 0.03, 0.3)});
      d.class_id = uniform_int(rng, 0, spec.num_classes - 1);
      d.confidence = confidence(spec.false_positive_confidence_mean);
      out.push_back(d);
    }
  }
  return out;
}

std::vector<fusion::ModelOutput> make_ensemble(const ImageRecord & record,
                                               const std::vector<MemberSpec> & members)
{
  if (members.size() != 3) {
    throw InvalidEnsemble(fmt::format("ensemble needs exactly 3 members, got {}", members.size()));
  }
  std::set<std::string> ids;
  std::set<int> grids;
  for (const auto & m : members) {
    if (!ids.insert(m.model_id).second) {
      throw InvalidEnsemble(fmt::format("duplicate model_id '{}'", m.model_id));
    }
    if (!fusion::valid_grid_size(m.grid_size) || !grids.insert(m.grid_size).second) {
      throw InvalidEnsemble("ensemble members must be tagged with grid sizes 32, 16 and 8");
    }
  }
  std::vector<fusion::ModelOutput> out;
  for (const auto & m : members) {
    out.push_back({m.model_id, m.grid_size, mock_detect(record, m.detector)});
  }
  return out;
}

std::vector<MemberSpec> default_ensemble(std::uint64_t seed)
{
  MockDetectorSpec base;
  base.center_jitter_sigma = 0.08;
  base.size_jitter_sigma = 0.08;
  base.miss_rate = 0.15;
  base.false_positive_rate = 0.5;
  base.confidence_mean = 0.7;
  base.confidence_sigma = 0.12;
  base.class_error_rate = 0.05;

  std::vector<MemberSpec> members;
  const std::array<std::pair<int, double>, 3> tags = {{{32, 0.45}, {16, 0.3}, {8, 0.1}}};
  for (std::size_t i = 0; i < tags.size(); ++i) {
    MemberSpec m;
    m.model_id = fmt::format("grid{}", tags[i].first);
    m.grid_size = tags[i].first;
    m.detector = base;
    m.detector.small_object_miss_rate = tags[i].second;
    m.detector.seed = splitmix64(seed + i);
    members.push_back(m);
  }
  return members;
}

}  // namespace fvd::synth
