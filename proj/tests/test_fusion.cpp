#include <algorithm>

#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>
#include <fmt/core.h>

#include "doctest.h"
#include "fvd/error.hpp"
#include "fvd/fusion.hpp"
#include "fvd/synth.hpp"

using namespace fvd;
using namespace fvd::fusion;
using boost::random::uniform_int_distribution;
using boost::random::uniform_real_distribution;

namespace
{

constexpr int kApple = 0;
constexpr int kTomato = 5;

std::vector<Detection> random_detections(synth::Rng & rng, int max_count, int classes)
{
  uniform_int_distribution<int> count(0, max_count);
  uniform_int_distribution<int> cls(0, classes - 1);
  uniform_real_distribution<double> c(0.2, 0.8);
  uniform_real_distribution<double> s(0.05, 0.3);
  uniform_real_distribution<double> conf(0.05, 1.0);
  std::vector<Detection> out(count(rng));
  for (auto & d : out) {
    d = {cls(rng), conf(rng), {c(rng), c(rng), s(rng), s(rng)}};
  }
  return out;
}

// Exhaustive NMS: the kept set is the unique subset K where no member of K is
// suppressed by a higher-ranked member of K and every box outside K is.
std::vector<Detection> nms_oracle(std::vector<Detection> dets, double thr)
{
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection & a, const Detection & b) { return a.confidence > b.confidence; });
  const int n = static_cast<int>(dets.size());
  auto suppresses = [&](int a, int b) {
    return dets[a].class_id == dets[b].class_id && iou(dets[a].box, dets[b].box) > thr;
  };
  std::vector<unsigned> valid;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    bool ok = true;
    for (int j = 0; j < n && ok; ++j) {
      bool hit = false;
      for (int i = 0; i < j; ++i) {
        hit = hit || ((mask >> i & 1u) && suppresses(i, j));
      }
      ok = (mask >> j & 1u) ? !hit : hit;
    }
    if (ok) {
      valid.push_back(mask);
    }
  }
  REQUIRE(valid.size() == 1);
  std::vector<Detection> kept;
  for (int i = 0; i < n; ++i) {
    if (valid[0] >> i & 1u) {
      kept.push_back(dets[i]);
    }
  }
  return kept;
}

}  // namespace

TEST_CASE("identical detections form one cluster")
{
  const Detection d{1, 0.9, {0.5, 0.5, 0.2, 0.2}};
  const auto clusters = cluster_detections({{"a", 32, {d}}, {"b", 16, {d}}, {"c", 8, {d}}});
  REQUIRE(clusters.size() == 1);
  CHECK(clusters[0].members.size() == 3);
}

TEST_CASE("disjoint detections stay apart")
{
  const auto clusters = cluster_detections({{"a", 32, {{0, 0.9, {0.1, 0.1, 0.1, 0.1}}}},
                                            {"b", 16, {{0, 0.9, {0.5, 0.5, 0.1, 0.1}}}},
                                            {"c", 8, {{0, 0.9, {0.9, 0.9, 0.1, 0.1}}}}});
  CHECK(clusters.size() == 3);
}

TEST_CASE("one third overlap is below the match threshold")
{
  const auto clusters = cluster_detections({{"A", 32, {{0, 0.9, {0.25, 0.25, 0.5, 0.5}}}},
                                            {"B", 16, {{0, 0.8, {0.5, 0.25, 0.5, 0.5}}}}});
  CHECK(clusters.size() == 2);
}

TEST_CASE("a cluster never holds two detections of one member")
{
  const Detection d{0, 0.9, {0.5, 0.5, 0.2, 0.2}};
  const auto clusters = cluster_detections({{"a", 32, {d, d}}});
  CHECK(clusters.size() == 2);
}

TEST_CASE("ensemble input is validated")
{
  CHECK_THROWS_AS(cluster_detections({{"a", 32, {}}, {"a", 16, {}}}), InvalidEnsemble);
  CHECK_THROWS_AS(cluster_detections({{"a", 12, {}}}), InvalidEnsemble);
  CHECK(valid_grid_size(8));
  CHECK_FALSE(valid_grid_size(64));
}

TEST_CASE("fused box and class vote by hand")
{
  Cluster c;
  c.members = {{"m32", {kApple, 0.9, {0.5, 0.5, 0.2, 0.2}}},
               {"m16", {kApple, 0.8, {0.52, 0.5, 0.2, 0.2}}},
               {"m8", {kTomato, 0.7, {0.48, 0.5, 0.18, 0.22}}}};
  const Detection f = fuse_cluster(c);
  CHECK(f.class_id == kApple);
  CHECK(fmt::format("{:.6f} {:.6f} {:.6f} {:.6f}", f.box.cx, f.box.cy, f.box.w, f.box.h) ==
        "0.500000 0.500000 0.193333 0.206667");
  CHECK(std::abs(f.box.w - 0.58 / 3.0) < 1e-15);
  CHECK(std::abs(f.box.h - 0.62 / 3.0) < 1e-15);
  CHECK(f.confidence == doctest::Approx(0.85).epsilon(1e-15));
}

TEST_CASE("three identical detections fuse to themselves")
{
  const Detection d{3, 0.37, {0.123457, 0.654321, 0.111111, 0.333333}};
  Cluster c;
  c.members = {{"a", d}, {"b", d}, {"c", d}};
  CHECK(fuse_cluster(c) == d);
}

TEST_CASE("vote ties go to the larger confidence sum, then the smaller class")
{
  Cluster c;
  c.members = {{"a", {4, 0.9, {0.5, 0.5, 0.2, 0.2}}}, {"b", {2, 0.6, {0.5, 0.5, 0.2, 0.2}}}};
  CHECK(fuse_cluster(c).class_id == 4);
  c.members[1].detection.confidence = 0.9;
  CHECK(fuse_cluster(c).class_id == 2);
}

TEST_CASE("nms hand cases")
{
  const BoundingBox b{0.5, 0.5, 0.2, 0.2};
  const auto same = nms({{0, 0.8, b}, {0, 0.9, b}}, 0.65);
  REQUIRE(same.size() == 1);
  CHECK(same[0].confidence == 0.9);
  CHECK(nms({{0, 0.9, b}, {1, 0.8, b}}, 0.65).size() == 2);
  CHECK(nms({}, 0.65).empty());
}

TEST_CASE("nms chain of five matches the exhaustive oracle")
{
  std::vector<Detection> chain;
  for (int i = 0; i < 5; ++i) {
    chain.push_back({0, 0.9 - 0.1 * i, {0.3 + 0.05 * i, 0.5, 0.2, 0.2}});
  }
  CHECK(nms(chain, 0.5) == nms_oracle(chain, 0.5));
}

TEST_CASE("nms matches the exhaustive oracle on random sets")
{
  auto rng = synth::make_stream(11, "nms");
  uniform_real_distribution<double> thr(0.1, 0.9);
  for (int t = 0; t < 300; ++t) {
    const auto dets = random_detections(rng, 5, 2);
    const double th = thr(rng);
    CHECK(nms(dets, th) == nms_oracle(dets, th));
  }
}

TEST_CASE("empty and single-member ensembles")
{
  CHECK(fuse_image({}).empty());
  CHECK(fuse_image({{"a", 32, {}}, {"b", 16, {}}, {"c", 8, {}}}).empty());
  auto rng = synth::make_stream(12, "single");
  for (int t = 0; t < 50; ++t) {
    const auto dets = random_detections(rng, 6, 3);
    CHECK(fuse_image({{"only", 16, dets}}) == nms(dets, FusionConfig{}.nms_iou));
  }
}

TEST_CASE("fusion is invariant to member order and fixed under triple copies")
{
  auto rng = synth::make_stream(13, "perm");
  for (int t = 0; t < 200; ++t) {
    std::vector<ModelOutput> outs = {{"grid32", 32, random_detections(rng, 6, 3)},
                                     {"grid16", 16, random_detections(rng, 6, 3)},
                                     {"grid8", 8, random_detections(rng, 6, 3)}};
    const auto base = fuse_image(outs);
    std::vector<int> order = {0, 1, 2};
    while (std::next_permutation(order.begin(), order.end())) {
      CHECK(fuse_image({outs[order[0]], outs[order[1]], outs[order[2]]}) == base);
    }
    const auto & d = outs[0].detections;
    CHECK(fuse_image({{"x", 32, d}, {"y", 16, d}, {"z", 8, d}}) == fuse_image({{"x", 32, d}}));
  }
}

TEST_CASE("member and confidence filters")
{
  const BoundingBox b{0.5, 0.5, 0.2, 0.2};
  const std::vector<ModelOutput> outs = {{"a", 32, {{0, 0.9, b}, {1, 0.2, {0.1, 0.1, 0.1, 0.1}}}},
                                         {"b", 16, {{0, 0.8, b}}}};
  FusionConfig cfg;
  cfg.min_members = 2;
  const auto two = fuse_image(outs, cfg);
  REQUIRE(two.size() == 1);
  CHECK(two[0].class_id == 0);
  cfg.min_members = 1;
  cfg.confidence_floor = 0.3;
  CHECK(fuse_image(outs, cfg).size() == 1);
  cfg.match_iou = 1.5;
  CHECK_THROWS_AS(cfg.validate(), InvalidParameter);
}
