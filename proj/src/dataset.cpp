#include "fvd/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include "json.hpp"

#include "fvd/error.hpp"

namespace fvd
{
namespace
{

std::vector<std::string_view> split_ws(std::string_view line)
{
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) {
      ++i;
    }
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') {
      ++i;
    }
    if (i > start) {
      out.push_back(line.substr(start, i - start));
    }
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T & out)
{
  const char * end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool blank(std::string_view line)
{
  return std::all_of(line.begin(), line.end(),
                     [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

Detection detection_from_json(const nlohmann::json & j)
{
  if (!j.is_object() || !j.contains("class_id") || !j.contains("confidence") ||
      !j.contains("box")) {
    throw ValidationError("detection needs class_id, confidence and box");
  }
  const auto & box = j.at("box");
  if (!box.is_array() || box.size() != 4) {
    throw ValidationError("box must be an array [cx, cy, w, h]");
  }
  if (!j.at("class_id").is_number_integer()) {
    throw ValidationError("class_id must be an integer");
  }
  Detection d;
  d.class_id = j.at("class_id").get<int>();
  d.confidence = j.at("confidence").get<double>();
  d.box = {box[0].get<double>(), box[1].get<double>(), box[2].get<double>(),
           box[3].get<double>()};
  validate(d);
  return d;
}

}  // namespace

DatasetPartition::DatasetPartition(ImageIdSet train, ImageIdSet test)
: train_(std::move(train)), test_(std::move(test))
{
  universe_ = train_;
  universe_.insert(test_.begin(), test_.end());
  check();
}

void DatasetPartition::promote(const ImageIdSet & ids)
{
  for (const auto & id : ids) {
    if (test_.erase(id) == 0) {
      throw ValidationError(fmt::format("cannot promote '{}': not in the test set", id));
    }
    train_.insert(id);
  }
  check();
}

void DatasetPartition::check() const
{
  for (const auto & id : train_) {
    if (test_.count(id) != 0) {
      throw ValidationError(fmt::format("image '{}' is in both train and test", id));
    }
  }
  if (train_.size() + test_.size() != universe_.size()) {
    throw ValidationError("train and test do not cover the universe");
  }
  for (const auto & id : universe_) {
    if (train_.count(id) == 0 && test_.count(id) == 0) {
      throw ValidationError(fmt::format("image '{}' missing from the partition", id));
    }
  }
}

void check_keys(const PredictionSet & predictions, const ImageIdSet & universe)
{
  for (const auto & [id, dets] : predictions) {
    if (universe.count(id) == 0) {
      throw ValidationError(fmt::format("predictions reference unknown image '{}'", id));
    }
  }
}

std::string read_text_file(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ValidationError(fmt::format("cannot open '{}'", path.string()));
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path & path, const std::string & content)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError(fmt::format("cannot write '{}'", path.string()));
  }
  out << content;
  if (!out) {
    throw IoError(fmt::format("write failed for '{}'", path.string()));
  }
}

// ---------------------------------------------------------------- annotations

std::vector<Annotation> parse_annotations(std::istream & in, const std::string & source)
{
  std::vector<Annotation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) {
      continue;
    }
    const auto tok = split_ws(line);
    if (tok.size() != 5) {
      throw ParseError(source, line_no, fmt::format("expected 5 fields, got {}", tok.size()));
    }
    Annotation a;
    double v[4];
    if (!parse_number(tok[0], a.class_id)) {
      throw ParseError(source, line_no, fmt::format("bad class id '{}'", tok[0]));
    }
    for (int i = 0; i < 4; ++i) {
      if (!parse_number(tok[i + 1], v[i])) {
        throw ParseError(source, line_no, fmt::format("bad coordinate '{}'", tok[i + 1]));
      }
    }
    a.box = {v[0], v[1], v[2], v[3]};
    try {
      validate(a);
    } catch (const ValidationError & e) {
      throw ValidationError(fmt::format("{}:{}: {}", source, line_no, e.what()));
    }
    out.push_back(a);
  }
  return out;
}

std::vector<Annotation> read_annotations(const std::filesystem::path & path)
{
  std::istringstream in(read_text_file(path));
  return parse_annotations(in, path.string());
}

std::string format_annotation(const Annotation & a)
{
  return fmt::format("{} {:.6f} {:.6f} {:.6f} {:.6f}\n", a.class_id, a.box.cx, a.box.cy,
                     a.box.w, a.box.h);
}

void write_annotations(const std::vector<Annotation> & annotations,
                       const std::filesystem::path & path)
{
  std::string s;
  for (const auto & a : annotations) {
    s += format_annotation(a);
  }
  write_text_file(path, s);
}

std::filesystem::path label_path_for(const std::filesystem::path & image_path)
{
  auto p = image_path;
  p.replace_extension(".txt");
  return p;
}

// ---------------------------------------------------------------- predictions

std::string format_prediction_line(const std::string & image_id,
                                   const std::vector<Detection> & detections)
{
  std::string s = fmt::format("{{\"image_id\": {}, \"detections\": [",
                              nlohmann::json(image_id).dump());
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const auto & d = detections[i];
    if (i != 0) {
      s += ", ";
    }
    s += fmt::format(
      "{{\"class_id\": {}, \"confidence\": {:.6f}, \"box\": [{:.6f}, {:.6f}, {:.6f}, {:.6f}]}}",
      d.class_id, d.confidence, d.box.cx, d.box.cy, d.box.w, d.box.h);
  }
  s += "]}\n";
  return s;
}

PredictionSet parse_predictions(std::istream & in, const std::string & source)
{
  PredictionSet out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) {
      continue;
    }
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object() || !j.contains("image_id") || !j.contains("detections") ||
          !j.at("image_id").is_string() || !j.at("detections").is_array()) {
        throw ValidationError("record needs a string image_id and a detections array");
      }
      const auto id = j.at("image_id").get<std::string>();
      if (out.count(id) != 0) {
        throw ValidationError(fmt::format("duplicate image_id '{}'", id));
      }
      auto & dets = out[id];
      for (const auto & jd : j.at("detections")) {
        dets.push_back(detection_from_json(jd));
      }
    } catch (const nlohmann::json::exception & e) {
      throw ParseError(source, line_no, e.what());
    } catch (const ValidationError & e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return out;
}

PredictionSet read_predictions(const std::filesystem::path & path)
{
  std::istringstream in(read_text_file(path));
  return parse_predictions(in, path.string());
}

void write_predictions(const PredictionSet & predictions, const std::filesystem::path & path)
{
  std::string s;
  for (const auto & [id, dets] : predictions) {
    s += format_prediction_line(id, dets);
  }
  write_text_file(path, s);
}

// ---------------------------------------------------------------- manifests

std::vector<ImageRecord> read_manifest(const std::filesystem::path & path)
{
  std::istringstream in(read_text_file(path));
  const auto base = path.parent_path();
  std::vector<ImageRecord> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (blank(line)) {
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
      fields.push_back(line.substr(start, tab - start));
    }
    fields.push_back(line.substr(start));
    if (fields.size() != 4) {
      throw ParseError(path.string(), line_no,
                       fmt::format("expected 4 tab-separated fields, got {}", fields.size()));
    }
    ImageRecord r;
    r.image_id = fields[0];
    if (r.image_id.empty()) {
      throw ParseError(path.string(), line_no, "empty image_id");
    }
    if (!seen.insert(r.image_id).second) {
      throw ParseError(path.string(), line_no, fmt::format("duplicate image_id '{}'", r.image_id));
    }
    r.path = fields[1];
    if (r.path.is_relative()) {
      r.path = base / r.path;
    }
    if (!parse_number(std::string_view(fields[2]), r.width_px) ||
        !parse_number(std::string_view(fields[3]), r.height_px) || r.width_px <= 0 ||
        r.height_px <= 0) {
      throw ParseError(path.string(), line_no, "width and height must be positive integers");
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_manifest(const std::vector<ImageRecord> & records, const std::filesystem::path & path)
{
  std::string s;
  for (const auto & r : records) {
    s += fmt::format("{}\t{}\t{}\t{}\n", r.image_id, r.path.string(), r.width_px, r.height_px);
  }
  write_text_file(path, s);
}

std::vector<ImageRecord> load_dataset(const std::filesystem::path & manifest)
{
  auto records = read_manifest(manifest);
  for (auto & r : records) {
    const auto label = label_path_for(r.path);
    if (std::filesystem::exists(label)) {
      r.annotations = read_annotations(label);
    }
  }
  return records;
}

GroundTruthSet ground_truth_of(const std::vector<ImageRecord> & records)
{
  GroundTruthSet gt;
  for (const auto & r : records) {
    gt[r.image_id] = r.annotations;
  }
  return gt;
}

}  // namespace fvd
