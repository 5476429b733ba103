#pragma once

#include "hybridgen/css.hpp"
#include "hybridgen/directions.hpp"
#include "hybridgen/encoders.hpp"
#include "hybridgen/generators.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hybridgen {

struct SourceSpec {
  std::string source_prompt = "photo";
  std::filesystem::path checkpoint;  // empty: build the toy generator below
  ToyMlpArchitecture::Options toy;
  std::uint64_t toy_seed = 0;

  bool uses_checkpoint() const { return !checkpoint.empty(); }
};

/// Everything needed to reproduce one adaptation run.
struct AdaptationConfig {
  SourceSpec source;
  std::vector<DomainReference> domains;

  double lambda_css = 5.0;
  double learning_rate = 0.002;
  int batch_size = 4;
  int iterations = 300;
  std::uint64_t seed = 0;
  int anchor_sample_count = 64;
  double grad_clip = 1.0;  // global L2 norm; 0 disables

  CssConfig css;
  SemanticEncoderSpec semantic_encoder;
  PatchEncoderSpec patch_encoder;

  int eval_sample_count = 64;

  std::filesystem::path output_directory = "hybridgen-run";
  // Directory relative payload/checkpoint/output paths are resolved against.
  // Not part of the serialized config.
  std::filesystem::path base_directory;

  /// Throws ConfigError naming the offending key path.
  void validate() const;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Parses the JSON experiment file format (comments allowed). Unknown keys
/// and type mismatches raise ConfigError with the key path.
AdaptationConfig parse_config(std::string_view json_text, const std::filesystem::path& base_directory = {});
AdaptationConfig load_config(const std::filesystem::path& path);

/// Canonical JSON with every default made explicit (sorted keys, 2-space
/// indent). Round-trips through parse_config.
std::string config_to_json(const AdaptationConfig& config);

/// SHA-256 of the canonical form minus output.directory: equal for configs
/// describing the same experiment regardless of formatting, comments,
/// omitted defaults or where the run is written.
std::string config_fingerprint(const AdaptationConfig& config);

GeneratorHandle build_source_generator(const AdaptationConfig& config);

std::string_view to_string(Modality modality);
std::string_view to_string(Reduction reduction);

}  // namespace hybridgen
