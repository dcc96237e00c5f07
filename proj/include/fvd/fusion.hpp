#pragma once

#include <string>
#include <vector>

#include "fvd/box.hpp"

namespace fvd::fusion
{

/// Detections of one ensemble member for one image.
struct ModelOutput
{
  std::string model_id;
  int grid_size = 32;  // 32, 16 or 8
  std::vector<Detection> detections;
};

struct ClusterMember
{
  std::string model_id;
  Detection detection;
};

/// Detections from different members that describe the same object. The
/// first member is the seed (highest confidence).
struct Cluster
{
  std::vector<ClusterMember> members;

  bool has_model(const std::string & model_id) const;
};

struct FusionConfig
{
  double match_iou = 0.5;
  int min_members = 1;
  double confidence_floor = 0.0;
  double nms_iou = 0.65;

  void validate() const;
};

bool valid_grid_size(int grid_size) noexcept;

/// Greedy cross-member association. Detections are visited by confidence
/// (descending; ties by model_id, then input order). Each joins the cluster
/// whose seed box has the highest IoU >= match_iou among clusters without a
/// member from the same model, or seeds a new cluster.
std::vector<Cluster> cluster_detections(const std::vector<ModelOutput> & outputs,
                                        const FusionConfig & cfg = {});

/// Mean box, plurality class vote (ties: larger summed confidence, then the
/// smaller class id), mean confidence of the members voting for the winner.
Detection fuse_cluster(const Cluster & cluster);

/// Greedy class-wise suppression: a box is dropped when a higher-confidence
/// kept box of the same class overlaps it with IoU > iou_threshold. Output is
/// in confidence-descending order (stable).
std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold = 0.65);

/// cluster -> fuse -> member/confidence filters -> nms.
std::vector<Detection> fuse_image(const std::vector<ModelOutput> & outputs,
                                  const FusionConfig & cfg = {});

}  // namespace fvd::fusion
