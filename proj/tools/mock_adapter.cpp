// Stand-in detector for the ssda adapter contract.
//
//   fvd-mock-adapter train --train-list L --model-out M [--init fresh|previous]
//   fvd-mock-adapter infer --model-in M --image-list L --predictions-out P [--script S]
//
// "Training" records the round (from the round_<r> directory holding the
// model), the number of training images and the init mode. Inference emits one
// detection per ground-truth object found beside each image, with scripted
// confidences, or runs a mock detector when the script names one.

#include <filesystem>
#include <iostream>
#include <regex>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "fvd/config.hpp"
#include "fvd/dataset.hpp"
#include "fvd/error.hpp"
#include "fvd/synth.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace
{

int round_of(const fs::path & model)
{
  static const std::regex pattern(R"(round_(\d+))");
  std::smatch m;
  const std::string dir = fs::absolute(model).parent_path().filename().string();
  return std::regex_match(dir, m, pattern) ? std::stoi(m[1]) : 0;
}

void train(const std::string & train_list, const std::string & model_out, const std::string & init)
{
  if (init != "fresh" && init != "previous") {
    throw fvd::ValidationError(fmt::format("unknown init mode '{}'", init));
  }
  const auto records = fvd::load_dataset(train_list);
  for (const auto & r : records) {
    if (!fs::exists(fvd::label_path_for(r.path))) {
      throw fvd::ValidationError(fmt::format("no label file for '{}'", r.path.string()));
    }
  }
  const int round = round_of(model_out);
  ordered_json model;
  model["round"] = round;
  model["train_images"] = records.size();
  model["init"] = init;
  if (init == "previous" && round > 1) {
    const fs::path prev =
      fs::absolute(model_out).parent_path().parent_path() / fmt::format("round_{}", round - 1) / "model";
    if (!fs::exists(prev)) {
      throw fvd::ValidationError(fmt::format("previous model '{}' not found", prev.string()));
    }
    model["previous_round"] = json::parse(fvd::read_text_file(prev)).at("round");
  }
  fvd::write_text_file(model_out, model.dump() + "\n");
  std::cout << fmt::format("trained round {} on {} images ({})\n", round, records.size(), init);
}

struct Script
{
  double default_confidence = 0.9;
  std::map<std::string, double> confidences;
  std::optional<fvd::synth::MockDetectorSpec> detector;
};

Script load_script(const std::string & path)
{
  Script s;
  if (path.empty()) {
    return s;
  }
  const json j = json::parse(fvd::read_text_file(path));
  for (const auto & item : j.items()) {
    if (item.key() == "default_confidence") {
      s.default_confidence = item.value().get<double>();
    } else if (item.key() == "confidences") {
      s.confidences = item.value().get<std::map<std::string, double>>();
    } else if (item.key() == "detector") {
      s.detector = fvd::parse_detector_spec(item.value(), "detector");
    } else {
      throw fvd::ConfigError(item.key(), "unknown key in adapter script");
    }
  }
  return s;
}

void infer(const std::string & model_in, const std::string & image_list,
           const std::string & predictions_out, const std::string & script_path)
{
  if (!fs::exists(model_in)) {
    throw fvd::ValidationError(fmt::format("model '{}' not found", model_in));
  }
  const Script script = load_script(script_path);
  fvd::PredictionSet predictions;
  for (const auto & r : fvd::load_dataset(image_list)) {
    auto & dets = predictions[r.image_id];
    if (script.detector) {
      dets = fvd::synth::mock_detect(r, *script.detector);
      continue;
    }
    const auto it = script.confidences.find(r.image_id);
    const double conf = it == script.confidences.end() ? script.default_confidence : it->second;
    if (r.annotations.empty()) {
      dets.push_back({0, conf, {0.5, 0.5, 0.25, 0.25}});
    }
    for (const auto & a : r.annotations) {
      dets.push_back({a.class_id, conf, a.box});
    }
  }
  fvd::write_predictions(predictions, predictions_out);
  std::cout << fmt::format("inferred {} images\n", predictions.size());
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Mock detector adapter", "fvd-mock-adapter"};
  app.require_subcommand(1);

  std::string train_list, model_out, init = "fresh";
  auto * tr = app.add_subcommand("train", "Record a training round");
  tr->add_option("--train-list", train_list)->required();
  tr->add_option("--model-out", model_out)->required();
  tr->add_option("--init", init, "fresh or previous")->capture_default_str();

  std::string model_in, image_list, predictions_out, script;
  auto * in = app.add_subcommand("infer", "Write scripted predictions");
  in->add_option("--model-in", model_in)->required();
  in->add_option("--image-list", image_list)->required();
  in->add_option("--predictions-out", predictions_out)->required();
  in->add_option("--script", script, "JSON script");

  CLI11_PARSE(app, argc, argv);
  try {
    if (tr->parsed()) {
      train(train_list, model_out, init);
    } else {
      infer(model_in, image_list, predictions_out, script);
    }
  } catch (const std::exception & e) {
    std::cerr << "fvd-mock-adapter: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
