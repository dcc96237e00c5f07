#include <map>

#include "doctest.h"
#include "fvd/error.hpp"
#include "fvd/process.hpp"
#include "fvd/ssda.hpp"
#include "fvd/synth.hpp"
#include "support.hpp"

using namespace fvd;
using namespace fvd::ssda;
namespace fs = std::filesystem;

namespace
{

// Two labeled train images (t1, t2) and three unlabeled test images (a, b, c)
// whose hidden ground truth sits beside them for the mock adapter.
struct Fixture
{
  test::TempDir dir{"ssda"};
  std::vector<ImageRecord> dataset;
  DatasetPartition partition;

  Fixture()
  {
    synth::SceneSpec scene;
    scene.canvas_px = 64;
    scene.min_objects = 1;
    scene.max_objects = 3;
    scene.seed = 5;
    auto imgs = synth::generate_dataset(scene, 5);
    const std::vector<std::string> ids = {"t1", "t2", "a", "b", "c"};
    fs::create_directories(dir / "images");
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      imgs[i].record.image_id = ids[i];
      imgs[i].record.path = ids[i] + ".png";
    }
    synth::write_dataset(imgs, dir / "images");
    for (auto & img : imgs) {
      img.record.path = dir / "images" / img.record.path;
      dataset.push_back(img.record);
    }
    partition = DatasetPartition({"t1", "t2"}, {"a", "b", "c"});
  }

  fs::path script(const std::string & name, const std::string & json)
  {
    const fs::path p = dir / name;
    test::spit(p, json);
    return p;
  }

  SsdaConfig config(const std::string & workdir, const std::string & script_json,
                    const std::string & train_extra = "")
  {
    SsdaConfig cfg;
    cfg.workdir = dir / workdir;
    cfg.max_rounds = 4;
    cfg.confidence_threshold = 0.5;
    const std::string mock = shell_quote(FVD_MOCK_ADAPTER_PATH);
    cfg.adapter.train_command =
      mock + " train --train-list {train_list} --model-out {model_out}" + train_extra;
    cfg.adapter.infer_command = mock +
                                " infer --model-in {model_in} --image-list {image_list} "
                                "--predictions-out {predictions_out} --script " +
                                shell_quote(script(workdir + ".json", script_json).string());
    cfg.adapter.timeout_seconds = 30;
    return cfg;
  }
};

std::map<std::string, std::string> tree(const fs::path & root)
{
  std::map<std::string, std::string> out;
  for (const auto & e : fs::recursive_directory_iterator(root)) {
    const auto rel = fs::relative(e.path(), root).string();
    out[rel] = e.is_regular_file() ? test::slurp(e.path()) : "<dir>";
  }
  return out;
}

ImageIdSet ids_of(const std::vector<ImageRecord> & records)
{
  ImageIdSet ids;
  for (const auto & r : records) {
    ids.insert(r.image_id);
  }
  return ids;
}

}  // namespace

TEST_CASE("promotion rule examples")
{
  const BoundingBox b{0.5, 0.5, 0.2, 0.2};
  PredictionSet p;
  p["x"] = {{0, 0.9, b}, {1, 0.3, b}};
  p["y"] = {{0, 0.49, b}};
  p["z"] = {};
  const auto promo = promote({"x", "y", "z", "w"}, p, 0.5);
  CHECK(promo.add_set == ImageIdSet{"x"});
  REQUIRE(promo.pseudo_labels.at("x").size() == 1);
  CHECK(promo.pseudo_labels.at("x")[0] == Annotation{0, b});
}

TEST_CASE("majority promotion rule")
{
  const BoundingBox b{0.5, 0.5, 0.2, 0.2};
  PredictionSet p;
  p["x"] = {{0, 0.9, b}, {1, 0.3, b}};
  p["y"] = {{0, 0.9, b}, {1, 0.6, b}, {2, 0.1, b}};
  const auto promo = promote({"x", "y"}, p, 0.5, PromotionRule::majority);
  CHECK(promo.add_set == ImageIdSet{"y"});
  CHECK(promo.pseudo_labels.at("y").size() == 2);
  CHECK(promotion_rule_from_string("majority") == PromotionRule::majority);
  CHECK_THROWS_AS(promotion_rule_from_string("all"), InvalidParameter);
}

TEST_CASE("scripted confidences promote the two confident images")
{
  Fixture f;
  const auto cfg = f.config("work", R"({"confidences": {"a": 0.9, "b": 0.6, "c": 0.2}})");
  const auto r = run_ssda(f.dataset, f.partition, cfg);
  CHECK(r.final_train == ImageIdSet{"t1", "t2", "a", "b"});
  CHECK(r.final_test == ImageIdSet{"c"});
  REQUIRE(r.logs.size() == 2);
  CHECK(r.logs[0].promoted == 2);
  CHECK(r.logs[1].promoted == 0);
  CHECK(r.stopped_early);

  // Partition invariants on disk, round by round.
  const ImageIdSet universe = f.partition.universe();
  std::size_t prev_train = 0;
  for (int round = 1; round <= 2; ++round) {
    const fs::path rd = cfg.workdir / ("round_" + std::to_string(round));
    for (const char * name : {"train.list", "test.list", "model", "predictions", "promoted.list", "log"}) {
      CHECK(fs::exists(rd / name));
    }
    const auto train = ids_of(read_manifest(rd / "train.list"));
    const auto test = ids_of(read_manifest(rd / "test.list"));
    ImageIdSet all = train;
    all.insert(test.begin(), test.end());
    CHECK(all == universe);
    CHECK(train.size() + test.size() == universe.size());
    CHECK(train.size() >= prev_train);
    prev_train = train.size();
  }
  CHECK(ids_of(read_manifest(cfg.workdir / "round_1" / "promoted.list")) == ImageIdSet{"a", "b"});
  CHECK(test::slurp(cfg.workdir / "round_2" / "log").find("stopping early") != std::string::npos);

  // Pseudo-labels are stored beside the staged images and parse cleanly.
  for (const char * id : {"a", "b"}) {
    const auto labels = read_annotations(cfg.workdir / "data" / (std::string(id) + ".txt"));
    CHECK(labels == r.pseudo_labels.at(id));
    CHECK_FALSE(labels.empty());
  }
  // Round 2 trained on the grown set, whose labels the adapter could read.
  const auto round2 = load_dataset(cfg.workdir / "round_2" / "train.list");
  CHECK(round2.size() == 4);
}

TEST_CASE("an all-confident adapter empties the test set in one round")
{
  Fixture f;
  const auto r = run_ssda(f.dataset, f.partition, f.config("work", R"({"default_confidence": 0.9})"));
  CHECK(r.final_test.empty());
  CHECK(r.final_train == f.partition.universe());
  REQUIRE(r.logs.size() == 1);
  CHECK(r.logs[0].promoted == 3);
  CHECK_FALSE(r.stopped_early);
}

TEST_CASE("a never-confident adapter promotes nothing")
{
  Fixture f;
  const auto r = run_ssda(f.dataset, f.partition, f.config("work", R"({"default_confidence": 0.3})"));
  CHECK(r.final_test == f.partition.test());
  CHECK(r.final_train == f.partition.train());
  REQUIRE(r.logs.size() == 1);
  CHECK(r.logs[0].promoted == 0);
  CHECK(r.stopped_early);
}

TEST_CASE("two identical runs leave identical workdirs")
{
  Fixture f;
  const std::string script = R"({"confidences": {"a": 0.9, "b": 0.6, "c": 0.2}})";
  const auto r1 = run_ssda(f.dataset, f.partition, f.config("w1", script));
  const auto r2 = run_ssda(f.dataset, f.partition, f.config("w2", script));
  CHECK(r1.final_train == r2.final_train);
  CHECK(r1.pseudo_labels == r2.pseudo_labels);
  CHECK(tree(f.dir / "w1") == tree(f.dir / "w2"));

  // Re-running in place clears the stale rounds first.
  run_ssda(f.dataset, f.partition, f.config("w1", script));
  CHECK(tree(f.dir / "w1") == tree(f.dir / "w2"));
}

TEST_CASE("round limit bounds the adapter calls")
{
  Fixture f;
  // Each round the mock promotes one more image: scripted per id, rising tau
  // is not needed because promoted images leave the test set.
  auto cfg = f.config("work", R"({"confidences": {"a": 0.9, "b": 0.9, "c": 0.9}})");
  cfg.max_rounds = 1;
  const auto r = run_ssda(f.dataset, f.partition, cfg);
  CHECK(r.logs.size() == 1);
  CHECK_FALSE(fs::exists(cfg.workdir / "round_2"));
}

TEST_CASE("fine-tuning from the previous round is recorded")
{
  Fixture f;
  auto cfg = f.config("work", R"({"confidences": {"a": 0.9, "b": 0.6, "c": 0.2}})", " --init previous");
  run_ssda(f.dataset, f.partition, cfg);
  const std::string model2 = test::slurp(cfg.workdir / "round_2" / "model");
  CHECK(model2.find("\"previous_round\":1") != std::string::npos);
  CHECK(model2.find("\"round\":2") != std::string::npos);
}

TEST_CASE("adapter failures")
{
  Fixture f;
  auto cfg = f.config("work", "{}");
  cfg.adapter.train_command = "echo boom; exit 3 # {train_list} {model_out}";
  try {
    run_ssda(f.dataset, f.partition, cfg);
    FAIL("expected a round failure");
  } catch (const RoundFailure & e) {
    CHECK(e.output().find("boom") != std::string::npos);
  }

  cfg = f.config("work", "{}");
  cfg.adapter.train_command = "true # {train_list} {model_out}";
  CHECK_THROWS_AS(run_ssda(f.dataset, f.partition, cfg), RoundFailure);  // no model written

  cfg = f.config("work", "{}");
  cfg.adapter.train_command = "sleep 5 # {train_list} {model_out}";
  cfg.adapter.timeout_seconds = 0.2;
  CHECK_THROWS_AS(run_ssda(f.dataset, f.partition, cfg), TimeoutError);

  cfg = f.config("work", "{}");
  cfg.adapter.infer_command = "echo garbage > {predictions_out} # {model_in} {image_list}";
  CHECK_THROWS_AS(run_ssda(f.dataset, f.partition, cfg), ParseError);
}

TEST_CASE("a failing round leaves the previous round intact")
{
  Fixture f;
  auto cfg = f.config("work", R"({"confidences": {"a": 0.9, "b": 0.6, "c": 0.2}})");
  cfg.confidence_threshold = 0.7;  // round 1 promotes a, round 2 would promote nothing
  cfg.adapter.infer_command = "case {model_in} in *round_2*) echo second round; exit 4;; esac; " +
                              cfg.adapter.infer_command;
  CHECK_THROWS_AS(run_ssda(f.dataset, f.partition, cfg), RoundFailure);
  CHECK(ids_of(read_manifest(cfg.workdir / "round_1" / "promoted.list")) == ImageIdSet{"a"});
  CHECK(fs::exists(cfg.workdir / "data" / "a.txt"));
  CHECK(test::slurp(cfg.workdir / "round_2" / "log").find("second round") != std::string::npos);
}

TEST_CASE("preconditions")
{
  Fixture f;
  auto cfg = f.config("work", "{}");
  CHECK_THROWS_AS(run_ssda(f.dataset, DatasetPartition({}, {"a", "b", "c"}), cfg), ValidationError);
  auto unlabeled = f.dataset;
  unlabeled[0].annotations.clear();
  CHECK_THROWS_AS(run_ssda(unlabeled, f.partition, cfg), ValidationError);
  cfg.adapter.train_command = "train {train_list}";
  CHECK_THROWS_AS(run_ssda(f.dataset, f.partition, cfg), InvalidParameter);
  cfg = f.config("work", "{}");
  cfg.confidence_threshold = 1.5;
  CHECK_THROWS_AS(run_ssda(f.dataset, f.partition, cfg), InvalidParameter);
}

TEST_CASE("residual export")
{
  Fixture f;
  SsdaResult r;
  export_residuals(r, f.dataset, f.dir / "empty.list");
  CHECK(test::slurp(f.dir / "empty.list").empty());

  r.final_test = {"c", "a", "b"};
  export_residuals(r, f.dataset, f.dir / "res.list");
  const std::string first = test::slurp(f.dir / "res.list");
  const auto recs = read_manifest(f.dir / "res.list");
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].image_id == "a");
  CHECK(recs[1].image_id == "b");
  CHECK(recs[2].image_id == "c");
  export_residuals(r, f.dataset, f.dir / "res.list");
  CHECK(test::slurp(f.dir / "res.list") == first);
}

TEST_CASE("shell helpers")
{
  CHECK(shell_quote("it's") == "'it'\\''s'");
  CHECK(substitute("run {a} {b} {a}", {{"a", "x y"}, {"b", "z"}}) == "run 'x y' 'z' 'x y'");
  const auto r = run_shell("echo out; echo err >&2; exit 7", fs::temp_directory_path(),
                           std::chrono::seconds(10));
  CHECK(r.exit_code == 7);
  CHECK(r.output.find("out") != std::string::npos);
  CHECK(r.output.find("err") != std::string::npos);
}
