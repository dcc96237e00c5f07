#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <boost/random/mersenne_twister.hpp>

#include "fvd/dataset.hpp"
#include "fvd/fusion.hpp"
#include "fvd/preproc.hpp"

namespace fvd::synth
{

/// 64-bit Mersenne Twister (boost::random::mt19937_64). Streams are keyed by
/// splitmix64(seed ^ fnv1a64(key)) so every image gets its own sequence.
using Rng = boost::random::mt19937_64;

std::uint64_t fnv1a64(std::string_view text) noexcept;
std::uint64_t splitmix64(std::uint64_t x) noexcept;
Rng make_stream(std::uint64_t seed, std::string_view key);

enum class Shape { circle, ellipse, rounded_rect };

/// Shape and fill color used to draw objects of a class.
Shape shape_of(int class_id) noexcept;
std::array<std::uint8_t, 3> color_of(int class_id) noexcept;

struct SceneSpec
{
  int canvas_px = 640;
  int num_classes = 8;
  int min_objects = 1;
  int max_objects = 14;
  double min_size = 0.03;
  double max_size = 0.4;
  bool overlap_allowed = true;
  std::uint64_t seed = 0;
  std::array<std::uint8_t, 3> background = {40, 40, 40};

  void validate() const;
};

struct SynthImage
{
  ImageRecord record;
  preproc::RasterImage image;
};

/// Image ids are "<prefix>_<index, 5 digits>"; record paths are "<id>.png"
/// (relative; callers place them).
std::vector<SynthImage> generate_dataset(const SceneSpec & spec, int count,
                                         const std::string & id_prefix = "img");

/// Writes images, label files and `manifest.tsv` into `dir`.
std::filesystem::path write_dataset(const std::vector<SynthImage> & images,
                                    const std::filesystem::path & dir);

struct MockDetectorSpec
{
  double center_jitter_sigma = 0.0;  // fraction of the box size
  double size_jitter_sigma = 0.0;    // log-normal factor on w and h
  double miss_rate = 0.0;
  double small_object_miss_rate = -1.0;  // < 0: same as miss_rate
  double small_object_size = 0.08;       // max(w, h) below this counts as small
  double false_positive_rate = 0.0;      // Poisson mean per image
  double confidence_mean = 0.8;
  double confidence_sigma = 0.0;
  double false_positive_confidence_mean = 0.3;
  double class_error_rate = 0.0;
  int num_classes = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Detections derived from the ground truth of `record`, never from pixels.
/// Deterministic in (record.image_id, spec.seed).
std::vector<Detection> mock_detect(const ImageRecord & record, const MockDetectorSpec & spec);

struct MemberSpec
{
  std::string model_id;
  int grid_size = 32;
  MockDetectorSpec detector;
};

/// One ModelOutput per member; exactly three members with distinct ids and
/// grid sizes 32, 16 and 8.
std::vector<fusion::ModelOutput> make_ensemble(const ImageRecord & record,
                                               const std::vector<MemberSpec> & members);

/// Three noisy members. The grid-8 member misses fewer small objects and the
/// grid-32 member more.
std::vector<MemberSpec> default_ensemble(std::uint64_t seed);

}  // namespace fvd::synth
