#include "fvd/ssda.hpp"

#include <algorithm>
#include <chrono>

#include <fmt/core.h>

#include "fvd/error.hpp"
#include "fvd/process.hpp"

namespace fvd::ssda
{
namespace fs = std::filesystem;

void DetectorAdapter::validate() const
{
  for (const char * key : {"{train_list}", "{model_out}"}) {
    if (train_command.find(key) == std::string::npos) {
      throw InvalidParameter(fmt::format("train_command must contain {}", key));
    }
  }
  for (const char * key : {"{model_in}", "{image_list}", "{predictions_out}"}) {
    if (infer_command.find(key) == std::string::npos) {
      throw InvalidParameter(fmt::format("infer_command must contain {}", key));
    }
  }
  if (!(timeout_seconds > 0.0)) {
    throw InvalidParameter(fmt::format("timeout_seconds must be > 0, got {}", timeout_seconds));
  }
}

std::string to_string(PromotionRule rule)
{
  return rule == PromotionRule::max ? "max" : "majority";
}

PromotionRule promotion_rule_from_string(const std::string & name)
{
  if (name == "max") {
    return PromotionRule::max;
  }
  if (name == "majority") {
    return PromotionRule::majority;
  }
  throw InvalidParameter(fmt::format("unknown promotion rule '{}'", name));
}

void SsdaConfig::validate() const
{
  if (max_rounds < 1 || max_rounds > 100) {
    throw InvalidParameter(fmt::format("max_rounds must be in [1, 100], got {}", max_rounds));
  }
  if (!(confidence_threshold > 0.0 && confidence_threshold < 1.0)) {
    throw InvalidParameter(
      fmt::format("confidence_threshold must be in (0,1), got {}", confidence_threshold));
  }
  adapter.validate();
  if (workdir.empty()) {
    throw InvalidParameter("workdir must be set");
  }
}

Promotion promote(const ImageIdSet & test_ids, const PredictionSet & predictions,
                  double threshold, PromotionRule rule)
{
  Promotion out;
  for (const auto & id : test_ids) {
    const auto it = predictions.find(id);
    if (it == predictions.end() || it->second.empty()) {
      continue;
    }
    const auto & dets = it->second;
    const auto confident = std::count_if(dets.begin(), dets.end(), [&](const Detection & d) {
      return d.confidence >= threshold;
    });
    const bool promoted = rule == PromotionRule::max
                            ? confident > 0
                            : 2 * static_cast<std::size_t>(confident) > dets.size();
    if (!promoted) {
      continue;
    }
    out.add_set.insert(id);
    auto & labels = out.pseudo_labels[id];
    for (const auto & d : dets) {
      if (d.confidence >= threshold) {
        labels.push_back({d.class_id, d.box});
      }
    }
  }
  return out;
}

namespace
{

struct Workspace
{
  fs::path root;
  fs::path data;

  fs::path round_dir(int r) const { return root / fmt::format("round_{}", r); }
};

// Copy of an image (plus its label file) inside workdir/data.
ImageRecord stage(const ImageRecord & src, const std::vector<Annotation> & labels,
                  const Workspace & ws)
{
  const fs::path file = src.image_id + src.path.extension().string();
  try {
    fs::copy_file(src.path, ws.data / file, fs::copy_options::overwrite_existing);
  } catch (const fs::filesystem_error & e) {
    throw IoError(fmt::format("cannot stage image '{}': {}", src.path.string(), e.what()));
  }
  write_annotations(labels, label_path_for(ws.data / file));
  ImageRecord staged = src;
  staged.path = fs::path("..") / "data" / file;  // relative to a round directory
  staged.annotations = labels;
  return staged;
}

std::vector<ImageRecord> records_of(const ImageIdSet & ids,
                                    const std::map<std::string, ImageRecord> & by_id)
{
  std::vector<ImageRecord> out;
  for (const auto & id : ids) {
    out.push_back(by_id.at(id));
  }
  return out;
}

std::string run_adapter_step(const std::string & what, const std::string & command,
                             const Workspace & ws, const DetectorAdapter & adapter,
                             const fs::path & must_exist, int round, std::string & log)
{
  const auto timeout = std::chrono::milliseconds(
    static_cast<long long>(adapter.timeout_seconds * 1000.0));
  ProcessResult res;
  try {
    res = run_shell(command, ws.root, timeout);
  } catch (const TimeoutError & e) {
    throw TimeoutError(fmt::format("round {}: {} step: {}", round, what, e.what()));
  }
  log += fmt::format("== {} (exit {}) ==\n{}", what, res.exit_code, res.output);
  if (!res.output.empty() && res.output.back() != '\n') {
    log += '\n';
  }
  if (res.exit_code != 0) {
    throw RoundFailure(fmt::format("round {}: {} command exited with status {}", round, what,
                                   res.exit_code),
                       res.output);
  }
  if (!fs::exists(must_exist)) {
    throw RoundFailure(fmt::format("round {}: {} command did not produce '{}'", round, what,
                                   must_exist.filename().string()),
                       res.output);
  }
  return res.output;
}

}  // namespace

SsdaResult run_ssda(const std::vector<ImageRecord> & dataset, const DatasetPartition & partition,
                    const SsdaConfig & cfg)
{
  cfg.validate();
  partition.check();
  if (partition.train().empty()) {
    throw ValidationError("SSDA needs a non-empty train set");
  }

  std::map<std::string, ImageRecord> by_id;
  for (const auto & r : dataset) {
    ImageRecord rec = r;
    rec.path = fs::absolute(rec.path).lexically_normal();
    by_id.emplace(r.image_id, std::move(rec));
  }
  for (const auto & id : partition.universe()) {
    if (by_id.count(id) == 0) {
      throw ValidationError(fmt::format("image '{}' has no dataset record", id));
    }
  }
  for (const auto & id : partition.train()) {
    if (by_id.at(id).annotations.empty()) {
      throw ValidationError(fmt::format("train image '{}' has no annotations", id));
    }
  }

  Workspace ws{fs::absolute(cfg.workdir).lexically_normal(), {}};
  ws.data = ws.root / "data";
  try {
    fs::create_directories(ws.root);
    for (const auto & entry : fs::directory_iterator(ws.root)) {
      const auto name = entry.path().filename().string();
      if (entry.is_directory() && (name == "data" || name.rfind("round_", 0) == 0)) {
        fs::remove_all(entry.path());
      }
    }
    fs::create_directories(ws.data);
  } catch (const fs::filesystem_error & e) {
    throw IoError(fmt::format("cannot prepare workdir: {}", e.what()));
  }

  std::map<std::string, ImageRecord> staged;
  for (const auto & id : partition.train()) {
    staged[id] = stage(by_id.at(id), by_id.at(id).annotations, ws);
  }

  DatasetPartition current = partition;
  SsdaResult result;
  for (int round = 1; round <= cfg.max_rounds; ++round) {
    if (current.test().empty()) {
      break;
    }
    const auto started = std::chrono::steady_clock::now();
    const fs::path dir = ws.round_dir(round);
    fs::create_directories(dir);
    const fs::path train_list = dir / "train.list";
    const fs::path test_list = dir / "test.list";
    const fs::path model = dir / "model";
    const fs::path predictions_path = dir / "predictions";

    write_manifest(records_of(current.train(), staged), train_list);
    write_manifest(records_of(current.test(), by_id), test_list);

    std::string log;
    try {
      run_adapter_step("train",
                       substitute(cfg.adapter.train_command,
                                  {{"train_list", train_list.string()}, {"model_out", model.string()}}),
                       ws, cfg.adapter, model, round, log);
      run_adapter_step("infer",
                       substitute(cfg.adapter.infer_command,
                                  {{"model_in", model.string()},
                                   {"image_list", test_list.string()},
                                   {"predictions_out", predictions_path.string()}}),
                       ws, cfg.adapter, predictions_path, round, log);
    } catch (const Error &) {
      write_text_file(dir / "log", log);
      throw;
    }

    const PredictionSet predictions = read_predictions(predictions_path);
    check_keys(predictions, current.universe());
    const Promotion promotion =
      promote(current.test(), predictions, cfg.confidence_threshold, cfg.promotion_rule);

    std::vector<ImageRecord> promoted_records;
    for (const auto & id : promotion.add_set) {
      staged[id] = stage(by_id.at(id), promotion.pseudo_labels.at(id), ws);
      promoted_records.push_back(staged[id]);
      result.pseudo_labels[id] = promotion.pseudo_labels.at(id);
    }
    write_manifest(promoted_records, dir / "promoted.list");
    current.promote(promotion.add_set);

    IterationLog entry;
    entry.round = round;
    entry.promoted = static_cast<int>(promotion.add_set.size());
    entry.train_size = static_cast<int>(current.train().size());
    entry.test_size = static_cast<int>(current.test().size());
    entry.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.logs.push_back(entry);

    log += fmt::format("== summary ==\nround {}\npromoted {}\ntrain_size {}\ntest_size {}\n",
                       entry.round, entry.promoted, entry.train_size, entry.test_size);
    if (entry.promoted == 0) {
      log += "no images promoted; stopping early\n";
    }
    write_text_file(dir / "log", log);

    if (entry.promoted == 0) {
      result.stopped_early = true;
      break;
    }
  }

  result.final_train = current.train();
  result.final_test = current.test();
  return result;
}

void export_residuals(const SsdaResult & result, const std::vector<ImageRecord> & dataset,
                      const std::filesystem::path & out_path)
{
  std::map<std::string, ImageRecord> by_id;
  for (const auto & r : dataset) {
    by_id.emplace(r.image_id, r);
  }
  std::vector<ImageRecord> residuals;
  for (const auto & id : result.final_test) {  // std::set: sorted by id
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw ValidationError(fmt::format("residual image '{}' has no dataset record", id));
    }
    residuals.push_back(it->second);
  }
  write_manifest(residuals, out_path);
}

}  // namespace fvd::ssda
