#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fvd/box_fit.hpp"
#include "fvd/eval.hpp"
#include "fvd/fusion.hpp"
#include "fvd/loss.hpp"
#include "fvd/preproc.hpp"
#include "fvd/ssda.hpp"
#include "fvd/synth.hpp"
#include "json.hpp"

namespace fvd
{

struct DivergenceSettings
{
  divergence::SigmaRule<double> sigma;
  divergence::FocalParams<double> focal;
  divergence::DivergenceKind kind = divergence::DivergenceKind::jsd;
  divergence::QuadratureConfig quadrature;
  divergence::FitConfig<double> fit;
};

struct EvalSettings
{
  std::vector<double> thresholds = {0.5, 0.75, 0.9};
  eval::EvalOptions options;
};

struct SynthSettings
{
  synth::SceneSpec scene;
  std::optional<synth::MockDetectorSpec> detector;
};

/// Everything the command-line tool can be configured with. `ssda.workdir`
/// is not part of the file; it comes from the command line.
struct ToolConfig
{
  DivergenceSettings divergence;
  fusion::FusionConfig fusion;
  EvalSettings eval;
  ssda::SsdaConfig ssda;
  preproc::PreprocConfig preproc;
  SynthSettings synth;

  /// Equal when both serialize to the same text.
  friend bool operator==(const ToolConfig & a, const ToolConfig & b);
};

/// Parses a JSON config document. Absent keys keep their defaults; an empty
/// (or whitespace-only) document is all defaults. Unknown keys, wrong types
/// and invalid values raise ConfigError naming the key path.
ToolConfig parse_config(const std::string & text, const std::string & source = "<config>");
ToolConfig load_config(const std::filesystem::path & path);

/// Mock detector settings from a JSON object; `path` prefixes error keys.
synth::MockDetectorSpec parse_detector_spec(const nlohmann::json & j, const std::string & path);
nlohmann::ordered_json detector_spec_json(const synth::MockDetectorSpec & spec);

/// Every field, pretty-printed, keys in a fixed order.
std::string serialize(const ToolConfig & cfg);

}  // namespace fvd
