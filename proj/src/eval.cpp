#include "fvd/eval.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <fmt/core.h>
#include "json.hpp"

#include "fvd/error.hpp"

namespace fvd::eval
{

MatchResult match_greedy(const std::vector<Detection> & detections,
                         const std::vector<Annotation> & ground_truths, double iou_threshold)
{
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].confidence > detections[b].confidence;
  });

  MatchResult result;
  std::vector<bool> taken(ground_truths.size(), false);
  for (std::size_t d : order) {
    std::size_t best = ground_truths.size();
    double best_iou = 0.0;
    for (std::size_t g = 0; g < ground_truths.size(); ++g) {
      if (taken[g] || ground_truths[g].class_id != detections[d].class_id) {
        continue;
      }
      const double overlap = iou(detections[d].box, ground_truths[g].box);
      if (overlap >= iou_threshold && (best == ground_truths.size() || overlap > best_iou)) {
        best = g;
        best_iou = overlap;
      }
    }
    if (best == ground_truths.size()) {
      result.unmatched_detections.push_back(d);
    } else {
      taken[best] = true;
      result.pairs.push_back({d, best, best_iou});
    }
  }
  std::sort(result.unmatched_detections.begin(), result.unmatched_detections.end());
  for (std::size_t g = 0; g < ground_truths.size(); ++g) {
    if (!taken[g]) {
      result.unmatched_ground_truths.push_back(g);
    }
  }
  return result;
}

namespace
{

struct ClassTally
{
  double matched_confidence = 0.0;
  double unmatched_confidence = 0.0;
  int instances = 0;
};

std::map<int, ClassTally> tally(const PredictionSet & predictions,
                                const GroundTruthSet & ground_truth, double iou_threshold)
{
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw InvalidParameter(fmt::format("IoU threshold must be in (0,1], got {}", iou_threshold));
  }
  for (const auto & [id, dets] : predictions) {
    if (ground_truth.count(id) == 0) {
      throw ValidationError(fmt::format("predictions reference unknown image '{}'", id));
    }
  }

  static const std::vector<Detection> no_detections;
  std::map<int, ClassTally> out;
  for (const auto & [id, gts] : ground_truth) {
    const auto it = predictions.find(id);
    const auto & dets = it == predictions.end() ? no_detections : it->second;
    for (const auto & g : gts) {
      out[g.class_id].instances += 1;
    }
    const MatchResult m = match_greedy(dets, gts, iou_threshold);
    for (const auto & p : m.pairs) {
      out[dets[p.detection].class_id].matched_confidence += dets[p.detection].confidence;
    }
    for (std::size_t d : m.unmatched_detections) {
      out[dets[d].class_id].unmatched_confidence += dets[d].confidence;
    }
  }
  return out;
}

double ap_from(const ClassTally & t, const EvalOptions & options)
{
  const double numerator =
    t.matched_confidence + (options.include_unmatched ? t.unmatched_confidence : 0.0);
  return numerator / static_cast<double>(t.instances);
}

}  // namespace

std::optional<double> ap_paper(int class_id, const PredictionSet & predictions,
                               const GroundTruthSet & ground_truth, double iou_threshold,
                               const EvalOptions & options)
{
  const auto t = tally(predictions, ground_truth, iou_threshold);
  const auto it = t.find(class_id);
  if (it == t.end() || it->second.instances == 0) {
    return std::nullopt;
  }
  return ap_from(it->second, options);
}

double map_over_classes(const std::map<int, double> & per_class_ap)
{
  if (per_class_ap.empty()) {
    throw EmptyEvaluation("mAP over an empty class set");
  }
  double sum = 0.0;
  for (const auto & [cls, ap] : per_class_ap) {
    sum += ap;
  }
  return sum / static_cast<double>(per_class_ap.size());
}

EvalReport evaluate(const PredictionSet & predictions, const GroundTruthSet & ground_truth,
                    double iou_threshold, const EvalOptions & options)
{
  EvalReport report;
  report.threshold = iou_threshold;
  for (const auto & [cls, t] : tally(predictions, ground_truth, iou_threshold)) {
    if (t.instances == 0) {
      continue;
    }
    report.per_class_ap[cls] = ap_from(t, options);
    report.instance_counts[cls] = t.instances;
  }
  report.map_value = map_over_classes(report.per_class_ap);
  return report;
}

std::vector<EvalReport> threshold_sweep(const PredictionSet & predictions,
                                        const GroundTruthSet & ground_truth,
                                        std::vector<double> thresholds,
                                        const EvalOptions & options)
{
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::vector<EvalReport> reports;
  for (double t : thresholds) {
    reports.push_back(evaluate(predictions, ground_truth, t, options));
  }
  return reports;
}

std::string format_report_table(const std::vector<EvalReport> & reports)
{
  std::ostringstream out;
  if (reports.empty()) {
    return {};
  }
  const EvalReport & first = reports.front();
  out << fmt::format("{:>8}  {:>10}  {:>9}\n", "class", fmt::format("AP@{:.2f}", first.threshold),
                     "instances");
  for (const auto & [cls, ap] : first.per_class_ap) {
    out << fmt::format("{:>8}  {:>10.6f}  {:>9}\n", cls, ap, first.instance_counts.at(cls));
  }
  out << '\n' << fmt::format("{:>9}  {:>10}\n", "threshold", "mAP");
  for (const auto & r : reports) {
    out << fmt::format("{:>9.2f}  {:>10.6f}\n", r.threshold, r.map_value);
  }
  return out.str();
}

std::string format_report_json(const std::vector<EvalReport> & reports)
{
  auto classes_of = [](const EvalReport & r) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto & [cls, ap] : r.per_class_ap) {
      arr.push_back({{"class_id", cls}, {"ap", ap}, {"instances", r.instance_counts.at(cls)}});
    }
    return arr;
  };
  nlohmann::ordered_json doc;
  if (!reports.empty()) {
    doc["threshold"] = reports.front().threshold;
    doc["classes"] = classes_of(reports.front());
  }
  doc["map"] = nlohmann::ordered_json::array();
  for (const auto & r : reports) {
    doc["map"].push_back({{"threshold", r.threshold}, {"map", r.map_value}});
  }
  doc["reports"] = nlohmann::ordered_json::array();
  for (const auto & r : reports) {
    nlohmann::ordered_json jr;
    jr["threshold"] = r.threshold;
    jr["map"] = r.map_value;
    jr["classes"] = classes_of(r);
    doc["reports"].push_back(jr);
  }
  return doc.dump(2) + "\n";
}

}  // namespace fvd::eval
