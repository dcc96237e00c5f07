#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fvd/box.hpp"

namespace fvd
{

struct ImageRecord
{
  std::string image_id;
  std::filesystem::path path;
  int width_px = 0;
  int height_px = 0;
  std::vector<Annotation> annotations;

  friend bool operator==(const ImageRecord &, const ImageRecord &) = default;
};

using ImageIdSet = std::set<std::string>;

/// Train/test split over a fixed universe. Every mutation re-checks
/// disjointness and coverage.
class DatasetPartition
{
public:
  DatasetPartition() = default;
  DatasetPartition(ImageIdSet train, ImageIdSet test);

  const ImageIdSet & train() const noexcept { return train_; }
  const ImageIdSet & test() const noexcept { return test_; }
  const ImageIdSet & universe() const noexcept { return universe_; }

  /// Moves ids from test to train. Ids not in test raise ValidationError.
  void promote(const ImageIdSet & ids);

  /// Throws ValidationError if the invariants do not hold.
  void check() const;

  friend bool operator==(const DatasetPartition &, const DatasetPartition &) = default;

private:
  ImageIdSet train_;
  ImageIdSet test_;
  ImageIdSet universe_;
};

using PredictionSet = std::map<std::string, std::vector<Detection>>;
using GroundTruthSet = std::map<std::string, std::vector<Annotation>>;

/// Rejects prediction keys outside the universe.
void check_keys(const PredictionSet & predictions, const ImageIdSet & universe);

// Annotation files: one "class_id cx cy w h" line per object, 6 decimals.
std::vector<Annotation> parse_annotations(std::istream & in, const std::string & source);
std::vector<Annotation> read_annotations(const std::filesystem::path & path);
std::string format_annotation(const Annotation & a);
void write_annotations(const std::vector<Annotation> & annotations,
                       const std::filesystem::path & path);

/// Label file that sits beside an image: same stem, ".txt" extension.
std::filesystem::path label_path_for(const std::filesystem::path & image_path);

// Prediction files: one JSON object per line, one line per image.
std::string format_prediction_line(const std::string & image_id,
                                   const std::vector<Detection> & detections);
PredictionSet parse_predictions(std::istream & in, const std::string & source);
PredictionSet read_predictions(const std::filesystem::path & path);
/// Lines are emitted in image_id order.
void write_predictions(const PredictionSet & predictions, const std::filesystem::path & path);

// Manifests: "image_id<TAB>path<TAB>width_px<TAB>height_px" per line. Relative
// paths are resolved against the manifest's directory on read.
std::vector<ImageRecord> read_manifest(const std::filesystem::path & path);
void write_manifest(const std::vector<ImageRecord> & records, const std::filesystem::path & path);

/// read_manifest plus the label file beside each image (missing file means
/// no annotations).
std::vector<ImageRecord> load_dataset(const std::filesystem::path & manifest);

GroundTruthSet ground_truth_of(const std::vector<ImageRecord> & records);

/// Reads a whole file; IoError if it cannot be opened.
std::string read_text_file(const std::filesystem::path & path);
void write_text_file(const std::filesystem::path & path, const std::string & content);

}  // namespace fvd
