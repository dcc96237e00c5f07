#include <cmath>
#include <sstream>

#include <boost/random/uniform_real_distribution.hpp>

#include "doctest.h"
#include "fvd/dataset.hpp"
#include "fvd/error.hpp"
#include "fvd/synth.hpp"
#include "support.hpp"

using namespace fvd;
using boost::random::uniform_real_distribution;

TEST_CASE("iou of identical boxes is one")
{
  const BoundingBox a{0.5, 0.5, 0.2, 0.2};
  CHECK(iou(a, a) == 1.0);
}

TEST_CASE("iou of disjoint boxes is zero")
{
  CHECK(iou({0.1, 0.1, 0.1, 0.1}, {0.9, 0.9, 0.1, 0.1}) == 0.0);
}

TEST_CASE("iou of half-shifted boxes is one third")
{
  CHECK(iou({0.25, 0.25, 0.5, 0.5}, {0.5, 0.25, 0.5, 0.5}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("iou rejects degenerate boxes")
{
  CHECK_THROWS_AS(iou({0.5, 0.5, 0.0, 0.2}, {0.5, 0.5, 0.2, 0.2}), InvalidGeometry);
  CHECK_THROWS_AS(iou({0.5, 0.5, 0.2, 0.2}, {0.5, 0.5, 0.2, -0.1}), InvalidGeometry);
}

TEST_CASE("iou is symmetric and bounded")
{
  auto rng = synth::make_stream(1, "iou");
  uniform_real_distribution<double> c(0.0, 1.0);
  uniform_real_distribution<double> s(0.01, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const BoundingBox a{c(rng), c(rng), s(rng), s(rng)};
    const BoundingBox b{c(rng), c(rng), s(rng), s(rng)};
    const double ab = iou(a, b);
    CHECK(ab == iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
  }
}

TEST_CASE("corner conversion")
{
  CHECK(to_corners({0.5, 0.5, 1.0, 1.0}) == Corners{0, 0, 1, 1});
  CHECK(to_corners({0.25, 0.25, 0.5, 0.5}) == Corners{0, 0, 0.5, 0.5});
}

TEST_CASE("corner round trip is exact on a dyadic grid")
{
  auto rng = synth::make_stream(2, "corners");
  uniform_real_distribution<double> u(0.0, 1.0);
  const double q = std::ldexp(1.0, -20);
  for (int i = 0; i < 1000; ++i) {
    const BoundingBox b{std::round(u(rng) / q) * q, std::round(u(rng) / q) * q,
                        std::max(q, std::round(u(rng) / q) * q), std::max(q, std::round(u(rng) / q) * q)};
    CHECK(from_corners(to_corners(b)) == b);
  }
}

TEST_CASE("corner round trip on arbitrary doubles is within rounding")
{
  auto rng = synth::make_stream(3, "corners");
  uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const BoundingBox b{u(rng), u(rng), u(rng) + 1e-3, u(rng) + 1e-3};
    const BoundingBox r = from_corners(to_corners(b));
    CHECK(std::abs(r.cx - b.cx) < 1e-15);
    CHECK(std::abs(r.cy - b.cy) < 1e-15);
    CHECK(std::abs(r.w - b.w) < 1e-15);
    CHECK(std::abs(r.h - b.h) < 1e-15);
  }
}

TEST_CASE("checked box construction")
{
  CHECK_NOTHROW(BoundingBox::checked(0.0, 1.0, 1.0, 0.01));
  CHECK_THROWS_AS(BoundingBox::checked(1.5, 0.5, 0.2, 0.1), ValidationError);
  CHECK_THROWS_AS(BoundingBox::checked(0.5, 0.5, 0.0, 0.1), ValidationError);
  CHECK_THROWS_AS(BoundingBox::checked(0.5, 0.5, 0.2, 1.1), ValidationError);
}

TEST_CASE("clamped pulls boxes back into range")
{
  const BoundingBox b = clamped({1.2, -0.1, 2.0, 0.0});
  CHECK(b.valid());
  CHECK(b.cx == 1.0);
  CHECK(b.cy == 0.0);
  CHECK(b.w == 1.0);
  CHECK(b.h == 1e-3);
}

TEST_CASE("detection validation")
{
  CHECK_NOTHROW(validate(Detection{0, 1.0, {0.5, 0.5, 0.1, 0.1}}));
  CHECK_THROWS_AS(validate(Detection{0, 1.5, {0.5, 0.5, 0.1, 0.1}}), ValidationError);
  CHECK_THROWS_AS(validate(Detection{-1, 0.5, {0.5, 0.5, 0.1, 0.1}}), ValidationError);
}

TEST_CASE("annotation line parsing")
{
  std::istringstream in("3 0.500000 0.500000 0.200000 0.100000\n");
  const auto anns = parse_annotations(in, "t");
  REQUIRE(anns.size() == 1);
  CHECK(anns[0] == Annotation{3, {0.5, 0.5, 0.2, 0.1}});
}

TEST_CASE("empty annotation file")
{
  std::istringstream in("");
  CHECK(parse_annotations(in, "t").empty());
}

TEST_CASE("out of range annotation is rejected")
{
  std::istringstream in("3 1.5 0.5 0.2 0.1\n");
  CHECK_THROWS_AS(parse_annotations(in, "t"), ValidationError);
}

TEST_CASE("malformed annotation lines name the line")
{
  std::istringstream in("1 0.5 0.5 0.1 0.1\n2 0.5 0.5\n");
  try {
    parse_annotations(in, "labels.txt");
    FAIL("expected a parse error");
  } catch (const ParseError & e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("labels.txt:2") != std::string::npos);
  }
}

TEST_CASE("annotation write/read round trip")
{
  test::TempDir dir("ann");
  const std::vector<Annotation> anns = {{0, {0.5, 0.5, 0.2, 0.1}}, {7, {0.125, 0.875, 0.25, 0.0625}}};
  write_annotations(anns, dir / "a.txt");
  CHECK(read_annotations(dir / "a.txt") == anns);
  CHECK(test::slurp(dir / "a.txt") ==
        "0 0.500000 0.500000 0.200000 0.100000\n7 0.125000 0.875000 0.250000 0.062500\n");
}

TEST_CASE("prediction line format is fixed")
{
  const std::string line =
    format_prediction_line("img_1", {{2, 0.5, {0.5, 0.25, 0.125, 0.75}}});
  CHECK(line ==
        "{\"image_id\": \"img_1\", \"detections\": [{\"class_id\": 2, \"confidence\": 0.500000, "
        "\"box\": [0.500000, 0.250000, 0.125000, 0.750000]}]}\n");
  CHECK(format_prediction_line("x", {}) == "{\"image_id\": \"x\", \"detections\": []}\n");
}

TEST_CASE("prediction files round trip and are ordered")
{
  test::TempDir dir("pred");
  PredictionSet p;
  p["b"] = {{1, 0.25, {0.5, 0.5, 0.5, 0.5}}};
  p["a"] = {};
  write_predictions(p, dir / "p.jsonl");
  CHECK(read_predictions(dir / "p.jsonl") == p);
  const std::string text = test::slurp(dir / "p.jsonl");
  CHECK(text.find("\"a\"") < text.find("\"b\""));
}

TEST_CASE("prediction parse errors")
{
  std::istringstream dup("{\"image_id\": \"a\", \"detections\": []}\n{\"image_id\": \"a\", \"detections\": []}\n");
  CHECK_THROWS_AS(parse_predictions(dup, "p"), InputError);
  std::istringstream bad("not json\n");
  CHECK_THROWS_AS(parse_predictions(bad, "p"), ParseError);
  std::istringstream conf(
    "{\"image_id\": \"a\", \"detections\": [{\"class_id\": 0, \"confidence\": 2, \"box\": [0.5,0.5,0.1,0.1]}]}\n");
  CHECK_THROWS_AS(parse_predictions(conf, "p"), InputError);
}

TEST_CASE("manifest round trip resolves relative paths")
{
  test::TempDir dir("man");
  const std::vector<ImageRecord> recs = {{"a", "a.png", 640, 480, {}}, {"b", "sub/b.png", 32, 32, {}}};
  write_manifest(recs, dir / "m.tsv");
  CHECK(test::slurp(dir / "m.tsv") == "a\ta.png\t640\t480\nb\tsub/b.png\t32\t32\n");
  const auto back = read_manifest(dir / "m.tsv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].path == dir / "a.png");
  CHECK(back[1].width_px == 32);
}

TEST_CASE("manifest rejects duplicates and bad sizes")
{
  test::TempDir dir("man");
  test::spit(dir / "dup.tsv", "a\ta.png\t1\t1\na\tb.png\t1\t1\n");
  CHECK_THROWS_AS(read_manifest(dir / "dup.tsv"), ParseError);
  test::spit(dir / "size.tsv", "a\ta.png\t0\t1\n");
  CHECK_THROWS_AS(read_manifest(dir / "size.tsv"), ParseError);
}

TEST_CASE("load_dataset picks up label files")
{
  test::TempDir dir("load");
  write_manifest({{"a", "a.png", 10, 10, {}}, {"b", "b.png", 10, 10, {}}}, dir / "m.tsv");
  write_annotations({{1, {0.5, 0.5, 0.5, 0.5}}}, dir / "a.txt");
  const auto recs = load_dataset(dir / "m.tsv");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].annotations.size() == 1);
  CHECK(recs[1].annotations.empty());
  CHECK(label_path_for("x/y/img.png") == std::filesystem::path("x/y/img.txt"));
}

TEST_CASE("missing files raise errors naming the path")
{
  try {
    read_text_file("/nonexistent/file.txt");
    FAIL("expected an error");
  } catch (const InputError & e) {
    CHECK(std::string(e.what()).find("/nonexistent/file.txt") != std::string::npos);
  }
}

TEST_CASE("partition invariants")
{
  DatasetPartition p({"a", "b"}, {"c", "d", "e"});
  CHECK(p.universe() == ImageIdSet{"a", "b", "c", "d", "e"});
  p.promote({"c", "e"});
  CHECK(p.train() == ImageIdSet{"a", "b", "c", "e"});
  CHECK(p.test() == ImageIdSet{"d"});
  CHECK(p.universe() == ImageIdSet{"a", "b", "c", "d", "e"});
  CHECK_THROWS_AS(p.promote({"a"}), ValidationError);
  CHECK_THROWS_AS(DatasetPartition({"a"}, {"a"}), ValidationError);
}

TEST_CASE("prediction keys must belong to the universe")
{
  PredictionSet p;
  p["zz"] = {};
  CHECK_THROWS_AS(check_keys(p, {"a"}), ValidationError);
  CHECK_NOTHROW(check_keys({}, {"a"}));
}
