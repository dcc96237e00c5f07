#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fvd/box.hpp"
#include "fvd/dataset.hpp"

namespace fvd::eval
{

struct MatchPair
{
  std::size_t detection;
  std::size_t ground_truth;
  double iou;
};

struct MatchResult
{
  std::vector<MatchPair> pairs;
  std::vector<std::size_t> unmatched_detections;
  std::vector<std::size_t> unmatched_ground_truths;
};

/// Same-class greedy matching for one image. Detections are visited by
/// descending confidence (stable); each takes the unmatched ground truth with
/// the highest IoU >= iou_threshold, lower index on ties.
MatchResult match_greedy(const std::vector<Detection> & detections,
                         const std::vector<Annotation> & ground_truths, double iou_threshold);

struct EvalOptions
{
  /// Count every detection of the class in the numerator, matched or not.
  /// Off by default; when on, AP may exceed 1.
  bool include_unmatched = false;
};

/// Confidence-sum AP: summed confidence of detections matched to ground truth
/// of `class_id` over the number of ground-truth instances of that class.
/// Returns nullopt when the class has no ground truth.
std::optional<double> ap_paper(int class_id, const PredictionSet & predictions,
                               const GroundTruthSet & ground_truth, double iou_threshold,
                               const EvalOptions & options = {});

/// Mean over classes. Throws EmptyEvaluation when the map is empty.
double map_over_classes(const std::map<int, double> & per_class_ap);

struct EvalReport
{
  double threshold = 0.5;
  std::map<int, double> per_class_ap;
  std::map<int, int> instance_counts;
  double map_value = 0.0;
};

/// Per-class AP and mAP at one IoU threshold. Classes without ground truth
/// are skipped. Predictions for images missing from the ground truth raise
/// ValidationError.
EvalReport evaluate(const PredictionSet & predictions, const GroundTruthSet & ground_truth,
                    double iou_threshold, const EvalOptions & options = {});

/// One report per threshold, ordered by threshold ascending.
std::vector<EvalReport> threshold_sweep(const PredictionSet & predictions,
                                        const GroundTruthSet & ground_truth,
                                        std::vector<double> thresholds = {0.5, 0.75, 0.9},
                                        const EvalOptions & options = {});

/// Aligned text table: per-class AP at the first report's threshold, then one
/// mAP line per threshold.
std::string format_report_table(const std::vector<EvalReport> & reports);

/// Structured report (one JSON document).
std::string format_report_json(const std::vector<EvalReport> & reports);

}  // namespace fvd::eval
