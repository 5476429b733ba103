#include "hybridgen/config.hpp"

#include "hybridgen/digest.hpp"
#include "hybridgen/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <limits>
#include <set>

namespace hybridgen {

using nlohmann::json;

std::string_view to_string(Modality modality) { return modality == Modality::text ? "text" : "image"; }

std::string_view to_string(Reduction reduction) {
  return reduction == Reduction::sum_positions ? "sum_positions" : "mean_positions";
}

namespace {

std::string child(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
}

void reject_unknown(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
  const std::set<std::string_view> keys(allowed);
  for (const auto& [key, value] : j.items()) {
    if (!keys.contains(key)) throw ConfigError(child(path, key), "unknown key");
  }
}

const json* find(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

void read(const json& j, const char* key, const std::string& path, double& out) {
  if (const json* v = find(j, key)) {
    if (!v->is_number()) throw ConfigError(child(path, key), "expected a number");
    out = v->get<double>();
    if (!std::isfinite(out)) throw ConfigError(child(path, key), "must be finite");
  }
}

void read(const json& j, const char* key, const std::string& path, int& out) {
  if (const json* v = find(j, key)) {
    if (!v->is_number_integer()) throw ConfigError(child(path, key), "expected an integer");
    const auto value = v->get<std::int64_t>();
    if (value < std::numeric_limits<int>::min() || value > std::numeric_limits<int>::max()) {
      throw ConfigError(child(path, key), "integer out of range");
    }
    out = static_cast<int>(value);
  }
}

void read(const json& j, const char* key, const std::string& path, std::uint64_t& out) {
  if (const json* v = find(j, key)) {
    if (!v->is_number_unsigned()) throw ConfigError(child(path, key), "expected a non-negative integer");
    out = v->get<std::uint64_t>();
  }
}

void read(const json& j, const char* key, const std::string& path, std::string& out) {
  if (const json* v = find(j, key)) {
    if (!v->is_string()) throw ConfigError(child(path, key), "expected a string");
    out = v->get<std::string>();
  }
}

void parse_source(const json& j, SourceSpec& source) {
  const std::string path = "source";
  require_object(j, path);
  reject_unknown(j, path, {"source_prompt", "checkpoint", "toy"});
  read(j, "source_prompt", path, source.source_prompt);
  std::string checkpoint;
  read(j, "checkpoint", path, checkpoint);
  source.checkpoint = checkpoint;
  if (const json* toy = find(j, "toy")) {
    if (!checkpoint.empty()) throw ConfigError("source.toy", "give either source.checkpoint or source.toy, not both");
    const std::string tp = "source.toy";
    require_object(*toy, tp);
    reject_unknown(*toy, tp, {"seed", "noise_dim", "hidden_dim", "height", "width", "channels"});
    read(*toy, "seed", tp, source.toy_seed);
    read(*toy, "noise_dim", tp, source.toy.noise_dim);
    read(*toy, "hidden_dim", tp, source.toy.hidden_dim);
    read(*toy, "height", tp, source.toy.resolution.height);
    read(*toy, "width", tp, source.toy.resolution.width);
    read(*toy, "channels", tp, source.toy.channels);
  }
}

void parse_domains(const json& j, std::vector<DomainReference>& domains) {
  if (!j.is_array()) throw ConfigError("domains", "expected a list");
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "domains[" + std::to_string(i) + "]";
    const json& d = j[i];
    require_object(d, path);
    reject_unknown(d, path, {"modality", "payload", "coefficient"});
    DomainReference ref;
    std::string modality;
    if (!d.contains("modality")) throw ConfigError(child(path, "modality"), "required");
    read(d, "modality", path, modality);
    if (modality == "text") {
      ref.modality = Modality::text;
    } else if (modality == "image") {
      ref.modality = Modality::image;
    } else {
      throw ConfigError(child(path, "modality"), "must be \"text\" or \"image\"");
    }
    if (!d.contains("payload")) throw ConfigError(child(path, "payload"), "required");
    read(d, "payload", path, ref.payload);
    read(d, "coefficient", path, ref.coefficient);
    domains.push_back(std::move(ref));
  }
}

void parse_train(const json& j, AdaptationConfig& c) {
  const std::string path = "train";
  require_object(j, path);
  reject_unknown(j, path,
                 {"lambda_css", "learning_rate", "batch_size", "iterations", "seed", "anchor_sample_count", "grad_clip"});
  read(j, "lambda_css", path, c.lambda_css);
  read(j, "learning_rate", path, c.learning_rate);
  read(j, "batch_size", path, c.batch_size);
  read(j, "iterations", path, c.iterations);
  read(j, "seed", path, c.seed);
  read(j, "anchor_sample_count", path, c.anchor_sample_count);
  read(j, "grad_clip", path, c.grad_clip);
}

void parse_css(const json& j, CssConfig& css) {
  const std::string path = "css";
  require_object(j, path);
  reject_unknown(j, path, {"temperature", "reduction"});
  read(j, "temperature", path, css.temperature);
  std::string reduction(to_string(css.reduction));
  read(j, "reduction", path, reduction);
  if (reduction == "mean_positions") {
    css.reduction = Reduction::mean_positions;
  } else if (reduction == "sum_positions") {
    css.reduction = Reduction::sum_positions;
  } else {
    throw ConfigError("css.reduction", "must be \"mean_positions\" or \"sum_positions\"");
  }
}

void parse_encoders(const json& j, AdaptationConfig& c) {
  require_object(j, "encoders");
  reject_unknown(j, "encoders", {"semantic", "patch"});
  if (const json* s = find(j, "semantic")) {
    const std::string path = "encoders.semantic";
    require_object(*s, path);
    reject_unknown(*s, path, {"name", "seed", "weights"});
    read(*s, "name", path, c.semantic_encoder.name);
    read(*s, "seed", path, c.semantic_encoder.seed);
    read(*s, "weights", path, c.semantic_encoder.weights);
  }
  if (const json* p = find(j, "patch")) {
    const std::string path = "encoders.patch";
    require_object(*p, path);
    reject_unknown(*p, path, {"name", "seed", "weights", "layer", "patch_size"});
    read(*p, "name", path, c.patch_encoder.name);
    read(*p, "seed", path, c.patch_encoder.seed);
    read(*p, "weights", path, c.patch_encoder.weights);
    read(*p, "layer", path, c.patch_encoder.layer);
    read(*p, "patch_size", path, c.patch_encoder.patch_size);
  }
}

json to_json(const AdaptationConfig& c, bool include_output) {
  json source = {{"source_prompt", c.source.source_prompt}};
  if (c.source.uses_checkpoint()) {
    source["checkpoint"] = c.source.checkpoint.generic_string();
  } else {
    source["toy"] = {{"seed", c.source.toy_seed},
                     {"noise_dim", c.source.toy.noise_dim},
                     {"hidden_dim", c.source.toy.hidden_dim},
                     {"height", c.source.toy.resolution.height},
                     {"width", c.source.toy.resolution.width},
                     {"channels", c.source.toy.channels}};
  }
  json domains = json::array();
  for (const DomainReference& d : c.domains) {
    domains.push_back({{"modality", to_string(d.modality)}, {"payload", d.payload}, {"coefficient", d.coefficient}});
  }
  json out = {
      {"source", source},
      {"domains", domains},
      {"train",
       {{"lambda_css", c.lambda_css},
        {"learning_rate", c.learning_rate},
        {"batch_size", c.batch_size},
        {"iterations", c.iterations},
        {"seed", c.seed},
        {"anchor_sample_count", c.anchor_sample_count},
        {"grad_clip", c.grad_clip}}},
      {"css", {{"temperature", c.css.temperature}, {"reduction", to_string(c.css.reduction)}}},
      {"encoders",
       {{"semantic",
         {{"name", c.semantic_encoder.name}, {"seed", c.semantic_encoder.seed}, {"weights", c.semantic_encoder.weights}}},
        {"patch",
         {{"name", c.patch_encoder.name},
          {"seed", c.patch_encoder.seed},
          {"weights", c.patch_encoder.weights},
          {"layer", c.patch_encoder.layer},
          {"patch_size", c.patch_encoder.patch_size}}}}},
      {"eval", {{"sample_count", c.eval_sample_count}}},
  };
  if (include_output) out["output"] = {{"directory", c.output_directory.generic_string()}};
  return out;
}

}  // namespace

void AdaptationConfig::validate() const {
  if (domains.empty()) throw ConfigError("domains", "at least one domain is required");
  for (std::size_t i = 0; i < domains.size(); ++i) {
    const std::string path = "domains[" + std::to_string(i) + "]";
    if (domains[i].payload.empty()) throw ConfigError(path + ".payload", "must be non-empty");
    if (!std::isfinite(domains[i].coefficient)) throw ConfigError(path + ".coefficient", "must be finite");
  }
  if (source.source_prompt.empty()) throw ConfigError("source.source_prompt", "must be non-empty");
  if (!(lambda_css >= 0.0)) throw ConfigError("train.lambda_css", "must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate", "must be > 0");
  if (batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  if (iterations < 1) throw ConfigError("train.iterations", "must be >= 1");
  if (anchor_sample_count < 1) throw ConfigError("train.anchor_sample_count", "must be >= 1");
  if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip", "must be >= 0");
  if (!(css.temperature > 0.0)) throw ConfigError("css.temperature", "must be > 0");
  if (eval_sample_count < 1) throw ConfigError("eval.sample_count", "must be >= 1");
  if (semantic_encoder.name.empty()) throw ConfigError("encoders.semantic.name", "must be non-empty");
  if (patch_encoder.name.empty()) throw ConfigError("encoders.patch.name", "must be non-empty");
  if (patch_encoder.patch_size < 1) throw ConfigError("encoders.patch.patch_size", "must be >= 1");
  if (output_directory.empty()) throw ConfigError("output.directory", "must be non-empty");
  if (!source.uses_checkpoint()) {
    const auto& t = source.toy;
    if (t.noise_dim < 1) throw ConfigError("source.toy.noise_dim", "must be >= 1");
    if (t.hidden_dim < 1) throw ConfigError("source.toy.hidden_dim", "must be >= 1");
    if (t.resolution.height < 1) throw ConfigError("source.toy.height", "must be >= 1");
    if (t.resolution.width < 1) throw ConfigError("source.toy.width", "must be >= 1");
    if (t.channels != 3) throw ConfigError("source.toy.channels", "encoders expect 3 channels");
  }
}

std::filesystem::path AdaptationConfig::resolve(const std::filesystem::path& p) const {
  if (p.is_relative() && !base_directory.empty()) return base_directory / p;
  return p;
}

AdaptationConfig parse_config(std::string_view json_text, const std::filesystem::path& base_directory) {
  json j;
  try {
    j = json::parse(json_text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  require_object(j, "");
  reject_unknown(j, "", {"source", "domains", "train", "css", "encoders", "eval", "output"});

  AdaptationConfig c;
  c.base_directory = base_directory;
  if (const json* s = find(j, "source")) parse_source(*s, c.source);
  if (const json* d = find(j, "domains")) {
    parse_domains(*d, c.domains);
  } else {
    throw ConfigError("domains", "required");
  }
  if (const json* t = find(j, "train")) parse_train(*t, c);
  if (const json* s = find(j, "css")) parse_css(*s, c.css);
  if (const json* e = find(j, "encoders")) parse_encoders(*e, c);
  if (const json* e = find(j, "eval")) {
    require_object(*e, "eval");
    reject_unknown(*e, "eval", {"sample_count"});
    read(*e, "sample_count", "eval", c.eval_sample_count);
  }
  if (const json* o = find(j, "output")) {
    require_object(*o, "output");
    reject_unknown(*o, "output", {"directory"});
    std::string dir = c.output_directory.string();
    read(*o, "directory", "output", dir);
    c.output_directory = dir;
  }
  c.validate();
  return c;
}

AdaptationConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, path.parent_path());
}

std::string config_to_json(const AdaptationConfig& config) { return to_json(config, true).dump(2) + "\n"; }

std::string config_fingerprint(const AdaptationConfig& config) {
  return sha256_hex(to_json(config, false).dump());
}

GeneratorHandle build_source_generator(const AdaptationConfig& config) {
  if (config.source.uses_checkpoint()) {
    return load_checkpoint(config.resolve(config.source.checkpoint), /*trainable=*/false);
  }
  return make_source_generator(std::make_shared<ToyMlpArchitecture>(config.source.toy), config.source.toy_seed);
}

}  // namespace hybridgen
