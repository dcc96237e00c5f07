#include "fvd/fusion.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include <Eigen/Core>
#include <fmt/core.h>

#include "fvd/error.hpp"

namespace fvd::fusion
{

bool Cluster::has_model(const std::string & model_id) const
{
  return std::any_of(members.begin(), members.end(),
                     [&](const ClusterMember & m) { return m.model_id == model_id; });
}

void FusionConfig::validate() const
{
  if (!(match_iou > 0.0 && match_iou < 1.0)) {
    throw InvalidParameter(fmt::format("fusion match_iou must be in (0,1), got {}", match_iou));
  }
  if (min_members < 1) {
    throw InvalidParameter(fmt::format("fusion min_members must be >= 1, got {}", min_members));
  }
  if (!(confidence_floor >= 0.0 && confidence_floor <= 1.0)) {
    throw InvalidParameter(
      fmt::format("fusion confidence_floor must be in [0,1], got {}", confidence_floor));
  }
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) {
    throw InvalidParameter(fmt::format("fusion nms_iou must be in (0,1], got {}", nms_iou));
  }
}

bool valid_grid_size(int grid_size) noexcept
{
  return grid_size == 32 || grid_size == 16 || grid_size == 8;
}

std::vector<Cluster> cluster_detections(const std::vector<ModelOutput> & outputs,
                                        const FusionConfig & cfg)
{
  cfg.validate();
  std::set<std::string> ids;
  for (const auto & out : outputs) {
    if (!ids.insert(out.model_id).second) {
      throw InvalidEnsemble(fmt::format("duplicate model_id '{}'", out.model_id));
    }
    if (!valid_grid_size(out.grid_size)) {
      throw InvalidEnsemble(
        fmt::format("model '{}' has grid size {}; expected 32, 16 or 8", out.model_id,
                    out.grid_size));
    }
  }

  struct Entry
  {
    const ModelOutput * output;
    std::size_t index;
  };
  std::vector<Entry> order;
  for (const auto & out : outputs) {
    for (std::size_t i = 0; i < out.detections.size(); ++i) {
      order.push_back({&out, i});
    }
  }
  std::sort(order.begin(), order.end(), [](const Entry & a, const Entry & b) {
    const double ca = a.output->detections[a.index].confidence;
    const double cb = b.output->detections[b.index].confidence;
    if (ca != cb) {
      return ca > cb;
    }
    if (a.output->model_id != b.output->model_id) {
      return a.output->model_id < b.output->model_id;
    }
    return a.index < b.index;
  });

  std::vector<Cluster> clusters;
  for (const auto & e : order) {
    const Detection & det = e.output->detections[e.index];
    std::size_t best = clusters.size();
    double best_iou = cfg.match_iou;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (clusters[c].has_model(e.output->model_id)) {
        continue;
      }
      const double overlap = iou(clusters[c].members.front().detection.box, det.box);
      if (overlap >= best_iou && (best == clusters.size() || overlap > best_iou)) {
        best = c;
        best_iou = overlap;
      }
    }
    if (best == clusters.size()) {
      clusters.push_back({{{e.output->model_id, det}}});
    } else {
      clusters[best].members.push_back({e.output->model_id, det});
    }
  }
  return clusters;
}

namespace
{

// Mean anchored on the first value: identical inputs reproduce themselves
// exactly, and the result is clamped into [min, max] of the inputs.
Eigen::Vector4d anchored_mean(const std::vector<Eigen::Vector4d> & values)
{
  const Eigen::Vector4d anchor = values.front();
  Eigen::Vector4d offset = Eigen::Vector4d::Zero();
  Eigen::Vector4d lo = anchor;
  Eigen::Vector4d hi = anchor;
  for (const auto & v : values) {
    offset += v - anchor;
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Eigen::Vector4d mean = anchor + offset / static_cast<double>(values.size());
  return mean.cwiseMax(lo).cwiseMin(hi);
}

double anchored_mean(const std::vector<double> & values)
{
  double offset = 0.0;
  for (double v : values) {
    offset += v - values.front();
  }
  const double mean = values.front() + offset / static_cast<double>(values.size());
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return std::clamp(mean, *lo, *hi);
}

}  // namespace

Detection fuse_cluster(const Cluster & cluster)
{
  if (cluster.members.empty()) {
    throw ValidationError("fuse_cluster: empty cluster");
  }

  std::vector<Eigen::Vector4d> boxes;
  std::map<int, std::pair<int, double>> votes;  // class -> (count, summed confidence)
  for (const auto & m : cluster.members) {
    boxes.push_back(m.detection.box.as_vector());
    auto & v = votes[m.detection.class_id];
    v.first += 1;
    v.second += m.detection.confidence;
  }

  // std::map iterates class ids ascending, so strict comparisons keep the
  // smallest id on a full tie.
  int winner = votes.begin()->first;
  auto best = votes.begin()->second;
  for (const auto & [cls, v] : votes) {
    if (v.first > best.first || (v.first == best.first && v.second > best.second)) {
      winner = cls;
      best = v;
    }
  }

  std::vector<double> confidences;
  for (const auto & m : cluster.members) {
    if (m.detection.class_id == winner) {
      confidences.push_back(m.detection.confidence);
    }
  }

  Detection fused;
  fused.class_id = winner;
  fused.confidence = anchored_mean(confidences);
  fused.box = BoundingBox::from_vector(anchored_mean(boxes));
  return fused;
}

std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold)
{
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection & a, const Detection & b) {
                     return a.confidence > b.confidence;
                   });
  std::vector<Detection> kept;
  for (const auto & d : detections) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection & k) {
      return k.class_id == d.class_id && iou(k.box, d.box) > iou_threshold;
    });
    if (!suppressed) {
      kept.push_back(d);
    }
  }
  return kept;
}

std::vector<Detection> fuse_image(const std::vector<ModelOutput> & outputs,
                                  const FusionConfig & cfg)
{
  const auto clusters = cluster_detections(outputs, cfg);
  std::vector<Detection> fused;
  for (const auto & c : clusters) {
    if (static_cast<int>(c.members.size()) < cfg.min_members) {
      continue;
    }
    Detection d = fuse_cluster(c);
    if (d.confidence < cfg.confidence_floor) {
      continue;
    }
    fused.push_back(d);
  }
  return nms(std::move(fused), cfg.nms_iou);
}

}  // namespace fvd::fusion
