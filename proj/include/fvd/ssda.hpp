#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fvd/dataset.hpp"

namespace fvd::ssda
{

/// External detector driven through shell command templates.
///   train_command: {train_list} {model_out}
///   infer_command: {model_in} {image_list} {predictions_out}
/// Placeholders are replaced by shell-quoted absolute paths.
struct DetectorAdapter
{
  std::string train_command;
  std::string infer_command;
  double timeout_seconds = 3600.0;

  void validate() const;
};

enum class PromotionRule
{
  max,       // the most confident detection reaches the threshold
  majority,  // more than half of the detections reach the threshold
};

std::string to_string(PromotionRule rule);
PromotionRule promotion_rule_from_string(const std::string & name);

struct SsdaConfig
{
  int max_rounds = 4;
  double confidence_threshold = 0.5;
  PromotionRule promotion_rule = PromotionRule::max;
  DetectorAdapter adapter;
  std::filesystem::path workdir;

  void validate() const;
};

struct IterationLog
{
  int round = 0;
  int promoted = 0;
  int train_size = 0;
  int test_size = 0;
  double wall_time = 0.0;  // seconds; kept out of the on-disk log
};

using LabelMap = std::map<std::string, std::vector<Annotation>>;

struct Promotion
{
  ImageIdSet add_set;
  LabelMap pseudo_labels;
};

/// Decides which test images are promoted and builds their pseudo-labels
/// (detections at or above `threshold`, confidence dropped). Test ids absent
/// from `predictions` count as having no detections.
Promotion promote(const ImageIdSet & test_ids, const PredictionSet & predictions,
                  double threshold, PromotionRule rule = PromotionRule::max);

struct SsdaResult
{
  ImageIdSet final_train;
  ImageIdSet final_test;
  LabelMap pseudo_labels;
  std::vector<IterationLog> logs;
  bool stopped_early = false;
};

/// Train / infer / promote rounds until max_rounds, an empty test set, or a
/// round that promotes nothing. Round state goes to
/// workdir/round_<r>/{train.list, test.list, model, predictions, promoted.list, log};
/// images and label files of the growing train set live in workdir/data.
SsdaResult run_ssda(const std::vector<ImageRecord> & dataset, const DatasetPartition & partition,
                    const SsdaConfig & cfg);

/// Manifest of the residual (never promoted) images, sorted by image_id.
void export_residuals(const SsdaResult & result, const std::vector<ImageRecord> & dataset,
                      const std::filesystem::path & out_path);

}  // namespace fvd::ssda
