#include <cmath>

#include "doctest.h"
#include "fvd/error.hpp"
#include "fvd/png_io.hpp"
#include "fvd/synth.hpp"
#include "support.hpp"

using namespace fvd;
using namespace fvd::synth;

namespace
{

SceneSpec small_scene(std::uint64_t seed)
{
  SceneSpec s;
  s.canvas_px = 128;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("stream derivation is fixed")
{
  // Reference values of the public 64-bit FNV-1a and splitmix64 definitions.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
  auto a = make_stream(1, "x");
  auto b = make_stream(1, "x");
  auto c = make_stream(1, "y");
  CHECK(a() == b());
  CHECK(make_stream(1, "x")() != c());
}

TEST_CASE("zero images")
{
  CHECK(generate_dataset(small_scene(1), 0).empty());
}

TEST_CASE("generation is deterministic")
{
  const auto a = generate_dataset(small_scene(9), 5);
  const auto b = generate_dataset(small_scene(9), 5);
  REQUIRE(a.size() == 5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].record == b[i].record);
    CHECK(a[i].image == b[i].image);
  }
  const auto c = generate_dataset(small_scene(10), 5);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    any_diff = any_diff || !(a[i].image == c[i].image);
  }
  CHECK(any_diff);
}

TEST_CASE("fixed object count")
{
  SceneSpec s = small_scene(2);
  s.min_objects = 3;
  s.max_objects = 3;
  std::size_t total = 0;
  for (const auto & img : generate_dataset(s, 100)) {
    total += img.record.annotations.size();
    for (const auto & a : img.record.annotations) {
      CHECK_NOTHROW(validate(a));
      CHECK(a.class_id < s.num_classes);
    }
  }
  CHECK(total == 300);
}

TEST_CASE("objects are drawn inside their boxes")
{
  SceneSpec s = small_scene(3);
  s.min_objects = 1;
  s.max_objects = 1;
  s.min_size = 0.2;
  s.max_size = 0.3;
  for (const auto & img : generate_dataset(s, 10)) {
    const auto & a = img.record.annotations.at(0);
    const int cx = static_cast<int>(a.box.cx * s.canvas_px);
    const int cy = static_cast<int>(a.box.cy * s.canvas_px);
    const auto col = color_of(a.class_id);
    CHECK(img.image.at(cx, cy, 0) == col[0]);
  }
}

TEST_CASE("non-overlapping placement and impossible requests")
{
  SceneSpec s = small_scene(4);
  s.overlap_allowed = false;
  s.min_objects = 4;
  s.max_objects = 4;
  s.min_size = 0.1;
  s.max_size = 0.2;
  for (const auto & img : generate_dataset(s, 10)) {
    const auto & anns = img.record.annotations;
    for (std::size_t i = 0; i < anns.size(); ++i) {
      for (std::size_t j = i + 1; j < anns.size(); ++j) {
        CHECK(iou(anns[i].box, anns[j].box) == 0.0);
      }
    }
  }
  s.min_objects = 40;
  s.max_objects = 40;
  s.min_size = 0.5;
  s.max_size = 0.6;
  CHECK_THROWS_AS(generate_dataset(s, 1), GenerationError);
}

TEST_CASE("written datasets load back")
{
  test::TempDir dir("synth");
  const auto imgs = generate_dataset(small_scene(5), 3);
  const auto manifest = write_dataset(imgs, dir.path());
  const auto recs = load_dataset(manifest);
  REQUIRE(recs.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(recs[i].image_id == imgs[i].record.image_id);
    CHECK(recs[i].annotations.size() == imgs[i].record.annotations.size());
    CHECK(preproc::read_png(recs[i].path) == imgs[i].image);
  }
}

TEST_CASE("noiseless detector reproduces the ground truth")
{
  const auto imgs = generate_dataset(small_scene(6), 5);
  MockDetectorSpec spec;
  for (const auto & img : imgs) {
    const auto dets = mock_detect(img.record, spec);
    REQUIRE(dets.size() == img.record.annotations.size());
    for (std::size_t i = 0; i < dets.size(); ++i) {
      CHECK(dets[i].box == img.record.annotations[i].box);
      CHECK(dets[i].class_id == img.record.annotations[i].class_id);
      CHECK(dets[i].confidence == spec.confidence_mean);
    }
  }
}

TEST_CASE("a detector that misses everything")
{
  MockDetectorSpec spec;
  spec.miss_rate = 1.0;
  for (const auto & img : generate_dataset(small_scene(7), 5)) {
    CHECK(mock_detect(img.record, spec).empty());
  }
}

TEST_CASE("small jitter keeps boxes close")
{
  SceneSpec s = small_scene(8);
  s.min_objects = 10;
  s.max_objects = 10;
  MockDetectorSpec spec;
  spec.center_jitter_sigma = 0.01;
  spec.size_jitter_sigma = 0.01;
  double sum = 0.0;
  int n = 0;
  for (const auto & img : generate_dataset(s, 100)) {
    const auto dets = mock_detect(img.record, spec);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      sum += iou(dets[i].box, img.record.annotations[i].box);
      ++n;
    }
  }
  CHECK(n == 1000);
  CHECK(sum / n > 0.8);
}

TEST_CASE("detections are deterministic per image and seed")
{
  const auto img = generate_dataset(small_scene(9), 1)[0];
  const auto members = default_ensemble(3);
  CHECK(mock_detect(img.record, members[0].detector) == mock_detect(img.record, members[0].detector));
  const auto a = make_ensemble(img.record, members);
  const auto b = make_ensemble(img.record, members);
  for (int i = 0; i < 3; ++i) {
    CHECK(a[i].detections == b[i].detections);
  }
}

TEST_CASE("three noiseless members agree")
{
  const auto img = generate_dataset(small_scene(10), 1)[0];
  std::vector<MemberSpec> members = {{"a", 32, {}}, {"b", 16, {}}, {"c", 8, {}}};
  members[1].detector.seed = 5;
  members[2].detector.seed = 99;
  const auto outs = make_ensemble(img.record, members);
  CHECK(outs[0].detections == outs[1].detections);
  CHECK(outs[1].detections == outs[2].detections);
}

TEST_CASE("member recall follows its miss rates")
{
  SceneSpec s = small_scene(11);
  s.min_size = 0.02;
  s.max_size = 0.2;
  const auto imgs = generate_dataset(s, 300);
  auto members = default_ensemble(17);
  std::vector<std::vector<Detection>> first;
  for (auto & m : members) {
    m.detector.false_positive_rate = 0.0;
    double expected = 0.0;
    double variance = 0.0;
    long detected = 0;
    for (const auto & img : imgs) {
      for (const auto & a : img.record.annotations) {
        const bool small = std::max(a.box.w, a.box.h) < m.detector.small_object_size;
        const double miss = small ? m.detector.small_object_miss_rate : m.detector.miss_rate;
        expected += 1.0 - miss;
        variance += miss * (1.0 - miss);
      }
      detected += static_cast<long>(mock_detect(img.record, m.detector).size());
    }
    CHECK(std::abs(detected - expected) < 4.0 * std::sqrt(variance));
    first.push_back(mock_detect(imgs[0].record, m.detector));
  }
  CHECK_FALSE(first[0] == first[1]);
}

TEST_CASE("ensembles need three distinct grid-tagged members")
{
  const auto img = generate_dataset(small_scene(12), 1)[0];
  auto members = default_ensemble(1);
  members[1].grid_size = 32;
  CHECK_THROWS_AS(make_ensemble(img.record, members), InvalidEnsemble);
  members = default_ensemble(1);
  members.pop_back();
  CHECK_THROWS_AS(make_ensemble(img.record, members), InvalidEnsemble);
}

TEST_CASE("spec validation")
{
  MockDetectorSpec d;
  d.miss_rate = 1.5;
  CHECK_THROWS_AS(d.validate(), InvalidParameter);
  SceneSpec s;
  s.min_objects = 5;
  s.max_objects = 2;
  CHECK_THROWS_AS(s.validate(), InvalidParameter);
}
