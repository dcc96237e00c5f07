#include <algorithm>
#include "fvd/config.hpp"

#include <array>
#include <set>

#include <fmt/core.h>

#include "fvd/error.hpp"
#include "json.hpp"

namespace fvd
{
namespace
{

using nlohmann::json;
using nlohmann::ordered_json;

std::string join(const std::string & path, const std::string & key)
{
  return path.empty() ? key : path + "." + key;
}

/// Typed access to one JSON object that remembers which keys were read.
class Reader
{
public:
  Reader(const json * obj, std::string path) : obj_(obj), path_(std::move(path))
  {
    if (obj_ != nullptr && !obj_->is_object()) {
      throw ConfigError(path_, "expected an object");
    }
  }

  Reader section(const std::string & key)
  {
    seen_.insert(key);
    const json * child = find(key);
    return Reader(child, join(path_, key));
  }

  void get(const std::string & key, double & out) { read(key, out, &json::is_number, "number"); }
  void get(const std::string & key, bool & out) { read(key, out, &json::is_boolean, "boolean"); }
  void get(const std::string & key, std::string & out)
  {
    read(key, out, &json::is_string, "string");
  }

  void get(const std::string & key, int & out)
  {
    read(key, out, &json::is_number_integer, "integer");
  }

  void get(const std::string & key, std::uint64_t & out)
  {
    read(key, out, &json::is_number_unsigned, "non-negative integer");
  }

  void get(const std::string & key, std::vector<std::string> & out)
  {
    const json * v = mark(key);
    if (v == nullptr) {
      return;
    }
    if (!v->is_array()) {
      throw ConfigError(join(path_, key), "expected an array of strings");
    }
    std::vector<std::string> values;
    for (const auto & item : *v) {
      if (!item.is_string()) {
        throw ConfigError(join(path_, key), "expected an array of strings");
      }
      values.push_back(item.get<std::string>());
    }
    out = std::move(values);
  }

  void get(const std::string & key, std::vector<double> & out)
  {
    const json * v = mark(key);
    if (v == nullptr) {
      return;
    }
    if (!v->is_array()) {
      throw ConfigError(join(path_, key), "expected an array of numbers");
    }
    std::vector<double> values;
    for (const auto & item : *v) {
      if (!item.is_number()) {
        throw ConfigError(join(path_, key), "expected an array of numbers");
      }
      values.push_back(item.get<double>());
    }
    out = std::move(values);
  }

  template <typename T, std::size_t N>
  void get_array(const std::string & key, std::array<T, N> & out, bool (json::*check)() const,
                 const char * what)
  {
    const json * v = mark(key);
    if (v == nullptr) {
      return;
    }
    const auto message = fmt::format("expected an array of {} {}s", N, what);
    if (!v->is_array() || v->size() != N) {
      throw ConfigError(join(path_, key), message);
    }
    for (std::size_t i = 0; i < N; ++i) {
      if (!((*v)[i].*check)()) {
        throw ConfigError(join(path_, key), message);
      }
      out[i] = (*v)[i].get<T>();
    }
  }

  bool has(const std::string & key) const { return find(key) != nullptr; }

  const std::string & path() const { return path_; }

  /// Rejects keys that were never asked for.
  void finish() const
  {
    if (obj_ == nullptr) {
      return;
    }
    for (const auto & item : obj_->items()) {
      if (seen_.count(item.key()) == 0) {
        throw ConfigError(join(path_, item.key()), "unknown key");
      }
    }
  }

private:
  const json * find(const std::string & key) const
  {
    if (obj_ == nullptr) {
      return nullptr;
    }
    const auto it = obj_->find(key);
    return it == obj_->end() ? nullptr : &*it;
  }

  const json * mark(const std::string & key)
  {
    seen_.insert(key);
    return find(key);
  }

  template <typename T>
  void read(const std::string & key, T & out, bool (json::*check)() const, const char * what)
  {
    const json * v = mark(key);
    if (v == nullptr) {
      return;
    }
    if (!(v->*check)()) {
      throw ConfigError(join(path_, key), fmt::format("expected a {}", what));
    }
    out = v->get<T>();
  }

  const json * obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string & key, const std::string & message)
{
  if (!ok) {
    throw ConfigError(key, message);
  }
}

// Module validate() failures are reported against the section path.
template <typename F>
void validate_section(const std::string & path, F && fn)
{
  try {
    fn();
  } catch (const ConfigError &) {
    throw;
  } catch (const InputError & e) {
    throw ConfigError(path, e.what());
  }
}

void read_divergence(Reader r, DivergenceSettings & d)
{
  const std::string p = r.path();
  r.get("k", d.sigma.k);
  require(d.sigma.k > 0.0, join(p, "k"), "must be > 0");
  r.get("alpha", d.focal.alpha);
  require(d.focal.alpha > 0.0 && d.focal.alpha <= 1.0, join(p, "alpha"), "must be in (0, 1]");
  r.get("gamma", d.focal.gamma);
  require(d.focal.gamma >= 0.0, join(p, "gamma"), "must be >= 0");
  std::string kind = divergence::to_string(d.kind);
  r.get("kind", kind);
  require(kind == "jsd" || kind == "kld", join(p, "kind"), "must be \"jsd\" or \"kld\"");
  d.kind = kind == "jsd" ? divergence::DivergenceKind::jsd : divergence::DivergenceKind::kld;

  Reader q = r.section("quadrature");
  q.get("half_width", d.quadrature.half_width);
  q.get("nodes", d.quadrature.nodes);
  q.finish();
  validate_section(q.path(), [&] { d.quadrature.validate(); });

  Reader f = r.section("fit");
  f.get("learning_rate", d.fit.learning_rate);
  require(d.fit.learning_rate > 0.0, join(f.path(), "learning_rate"), "must be > 0");
  f.get("max_steps", d.fit.max_steps);
  require(d.fit.max_steps >= 1, join(f.path(), "max_steps"), "must be >= 1");
  f.get("tolerance", d.fit.tolerance);
  require(d.fit.tolerance >= 0.0, join(f.path(), "tolerance"), "must be >= 0");
  f.finish();
  d.fit.quadrature = d.quadrature;
  validate_section(f.path(), [&] { d.fit.validate(); });
  r.finish();
}

void read_fusion(Reader r, fusion::FusionConfig & c)
{
  const std::string p = r.path();
  r.get("match_iou", c.match_iou);
  require(c.match_iou > 0.0 && c.match_iou < 1.0, join(p, "match_iou"), "must be in (0, 1)");
  r.get("min_members", c.min_members);
  require(c.min_members >= 1, join(p, "min_members"), "must be >= 1");
  r.get("confidence_floor", c.confidence_floor);
  require(c.confidence_floor >= 0.0 && c.confidence_floor <= 1.0, join(p, "confidence_floor"),
          "must be in [0, 1]");
  r.get("nms_iou", c.nms_iou);
  require(c.nms_iou > 0.0 && c.nms_iou <= 1.0, join(p, "nms_iou"), "must be in (0, 1]");
  r.finish();
  validate_section(p, [&] { c.validate(); });
}

void read_eval(Reader r, EvalSettings & e)
{
  const std::string p = r.path();
  r.get("thresholds", e.thresholds);
  require(!e.thresholds.empty(), join(p, "thresholds"), "must not be empty");
  for (double t : e.thresholds) {
    require(t > 0.0 && t <= 1.0, join(p, "thresholds"), "values must be in (0, 1]");
  }
  r.get("include_unmatched", e.options.include_unmatched);
  r.finish();
}

void read_ssda(Reader r, ssda::SsdaConfig & s)
{
  const std::string p = r.path();
  r.get("max_rounds", s.max_rounds);
  require(s.max_rounds >= 1 && s.max_rounds <= 100, join(p, "max_rounds"), "must be in [1, 100]");
  r.get("confidence_threshold", s.confidence_threshold);
  require(s.confidence_threshold > 0.0 && s.confidence_threshold < 1.0,
          join(p, "confidence_threshold"), "must be in (0, 1)");
  std::string rule = ssda::to_string(s.promotion_rule);
  r.get("promotion_rule", rule);
  require(rule == "max" || rule == "majority", join(p, "promotion_rule"),
          "must be \"max\" or \"majority\"");
  s.promotion_rule = ssda::promotion_rule_from_string(rule);

  Reader a = r.section("adapter");
  a.get("train_command", s.adapter.train_command);
  a.get("infer_command", s.adapter.infer_command);
  a.get("timeout_seconds", s.adapter.timeout_seconds);
  require(s.adapter.timeout_seconds > 0.0, join(a.path(), "timeout_seconds"), "must be > 0");
  a.finish();
  // Commands may be left empty here; running SSDA requires them.
  if (!s.adapter.train_command.empty() || !s.adapter.infer_command.empty()) {
    validate_section(a.path(), [&] { s.adapter.validate(); });
  }
  r.finish();
}

void read_preproc(Reader r, preproc::PreprocConfig & c)
{
  const std::string p = r.path();
  r.get("target_size", c.target_size);
  require(c.target_size > 0, join(p, "target_size"), "must be > 0");
  r.get_array("mean", c.mean, &json::is_number, "number");
  r.get_array("std", c.stddev, &json::is_number, "number");
  for (double s : c.stddev) {
    require(s > 0.0, join(p, "std"), "components must be > 0");
  }
  r.get("smooth_kernel", c.smooth_kernel);
  require(c.smooth_kernel >= 3 && c.smooth_kernel % 2 == 1, join(p, "smooth_kernel"),
          "must be odd and >= 3");
  r.get("smooth_sigma", c.smooth_sigma);
  require(c.smooth_sigma > 0.0, join(p, "smooth_sigma"), "must be > 0");
  r.get("scales", c.scales);
  for (double s : c.scales) {
    require(s > 0.0, join(p, "scales"), "values must be > 0");
  }
  std::vector<std::string> names;
  for (auto step : c.order) {
    names.push_back(preproc::to_string(step));
  }
  r.get("order", names);
  std::vector<preproc::Step> order;
  for (const auto & name : names) {
    try {
      order.push_back(preproc::step_from_string(name));
    } catch (const InputError & e) {
      throw ConfigError(join(p, "order"), e.what());
    }
  }
  c.order = order;
  r.finish();
  validate_section(p, [&] { c.validate(); });
}


void read_scene(Reader r, synth::SceneSpec & s)
{
  r.get("canvas_px", s.canvas_px);
  r.get("num_classes", s.num_classes);
  r.get("min_objects", s.min_objects);
  r.get("max_objects", s.max_objects);
  r.get("min_size", s.min_size);
  r.get("max_size", s.max_size);
  r.get("overlap_allowed", s.overlap_allowed);
  r.get("seed", s.seed);
  std::array<int, 3> bg = {s.background[0], s.background[1], s.background[2]};
  r.get_array("background", bg, &json::is_number_integer, "integer");
  for (int i = 0; i < 3; ++i) {
    require(bg[i] >= 0 && bg[i] <= 255, join(r.path(), "background"), "values must be in [0, 255]");
    s.background[i] = static_cast<std::uint8_t>(bg[i]);
  }
  r.finish();
  validate_section(r.path(), [&] { s.validate(); });
}

void read_detector(Reader r, synth::MockDetectorSpec & d)
{
  r.get("center_jitter_sigma", d.center_jitter_sigma);
  r.get("size_jitter_sigma", d.size_jitter_sigma);
  r.get("miss_rate", d.miss_rate);
  r.get("small_object_miss_rate", d.small_object_miss_rate);
  r.get("small_object_size", d.small_object_size);
  r.get("false_positive_rate", d.false_positive_rate);
  r.get("confidence_mean", d.confidence_mean);
  r.get("confidence_sigma", d.confidence_sigma);
  r.get("false_positive_confidence_mean", d.false_positive_confidence_mean);
  r.get("class_error_rate", d.class_error_rate);
  r.get("num_classes", d.num_classes);
  r.get("seed", d.seed);
  r.finish();
  validate_section(r.path(), [&] { d.validate(); });
}

ordered_json detector_json(const synth::MockDetectorSpec & d)
{
  ordered_json j;
  j["center_jitter_sigma"] = d.center_jitter_sigma;
  j["size_jitter_sigma"] = d.size_jitter_sigma;
  j["miss_rate"] = d.miss_rate;
  j["small_object_miss_rate"] = d.small_object_miss_rate;
  j["small_object_size"] = d.small_object_size;
  j["false_positive_rate"] = d.false_positive_rate;
  j["confidence_mean"] = d.confidence_mean;
  j["confidence_sigma"] = d.confidence_sigma;
  j["false_positive_confidence_mean"] = d.false_positive_confidence_mean;
  j["class_error_rate"] = d.class_error_rate;
  j["num_classes"] = d.num_classes;
  j["seed"] = d.seed;
  return j;
}

}  // namespace

synth::MockDetectorSpec parse_detector_spec(const nlohmann::json & j, const std::string & path)
{
  synth::MockDetectorSpec d;
  read_detector(Reader(&j, path), d);
  return d;
}

nlohmann::ordered_json detector_spec_json(const synth::MockDetectorSpec & spec)
{
  return detector_json(spec);
}

ToolConfig parse_config(const std::string & text, const std::string & source)
{
  ToolConfig cfg;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    return cfg;
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error & e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ParseError(source, static_cast<int>(line), e.what());
  }
  Reader root(&doc, "");
  read_divergence(root.section("divergence"), cfg.divergence);
  read_fusion(root.section("fusion"), cfg.fusion);
  read_eval(root.section("eval"), cfg.eval);
  read_ssda(root.section("ssda"), cfg.ssda);
  read_preproc(root.section("preproc"), cfg.preproc);
  Reader synth = root.section("synth");
  read_scene(synth.section("scene"), cfg.synth.scene);
  if (synth.has("detector")) {
    cfg.synth.detector.emplace();
    read_detector(synth.section("detector"), *cfg.synth.detector);
  }
  synth.finish();
  root.finish();
  return cfg;
}

ToolConfig load_config(const std::filesystem::path & path)
{
  return parse_config(read_text_file(path), path.string());
}

std::string serialize(const ToolConfig & cfg)
{
  ordered_json j;
  auto & d = j["divergence"];
  d["k"] = cfg.divergence.sigma.k;
  d["alpha"] = cfg.divergence.focal.alpha;
  d["gamma"] = cfg.divergence.focal.gamma;
  d["kind"] = divergence::to_string(cfg.divergence.kind);
  d["quadrature"]["half_width"] = cfg.divergence.quadrature.half_width;
  d["quadrature"]["nodes"] = cfg.divergence.quadrature.nodes;
  d["fit"]["learning_rate"] = cfg.divergence.fit.learning_rate;
  d["fit"]["max_steps"] = cfg.divergence.fit.max_steps;
  d["fit"]["tolerance"] = cfg.divergence.fit.tolerance;

  auto & f = j["fusion"];
  f["match_iou"] = cfg.fusion.match_iou;
  f["min_members"] = cfg.fusion.min_members;
  f["confidence_floor"] = cfg.fusion.confidence_floor;
  f["nms_iou"] = cfg.fusion.nms_iou;

  j["eval"]["thresholds"] = cfg.eval.thresholds;
  j["eval"]["include_unmatched"] = cfg.eval.options.include_unmatched;

  auto & s = j["ssda"];
  s["max_rounds"] = cfg.ssda.max_rounds;
  s["confidence_threshold"] = cfg.ssda.confidence_threshold;
  s["promotion_rule"] = ssda::to_string(cfg.ssda.promotion_rule);
  s["adapter"]["train_command"] = cfg.ssda.adapter.train_command;
  s["adapter"]["infer_command"] = cfg.ssda.adapter.infer_command;
  s["adapter"]["timeout_seconds"] = cfg.ssda.adapter.timeout_seconds;

  auto & p = j["preproc"];
  p["target_size"] = cfg.preproc.target_size;
  p["mean"] = cfg.preproc.mean;
  p["std"] = cfg.preproc.stddev;
  p["smooth_kernel"] = cfg.preproc.smooth_kernel;
  p["smooth_sigma"] = cfg.preproc.smooth_sigma;
  p["scales"] = cfg.preproc.scales;
  std::vector<std::string> order;
  for (auto step : cfg.preproc.order) {
    order.push_back(preproc::to_string(step));
  }
  p["order"] = order;

  auto & sc = j["synth"]["scene"];
  const auto & scene = cfg.synth.scene;
  sc["canvas_px"] = scene.canvas_px;
  sc["num_classes"] = scene.num_classes;
  sc["min_objects"] = scene.min_objects;
  sc["max_objects"] = scene.max_objects;
  sc["min_size"] = scene.min_size;
  sc["max_size"] = scene.max_size;
  sc["overlap_allowed"] = scene.overlap_allowed;
  sc["seed"] = scene.seed;
  sc["background"] = {scene.background[0], scene.background[1], scene.background[2]};
  if (cfg.synth.detector) {
    j["synth"]["detector"] = detector_json(*cfg.synth.detector);
  }
  return j.dump(2) + "\n";
}

bool operator==(const ToolConfig & a, const ToolConfig & b)
{
  return serialize(a) == serialize(b);
}

}  // namespace fvd
