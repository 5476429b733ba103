#pragma once

#include "hybridgen/config.hpp"
#include "hybridgen/encoders.hpp"
#include "hybridgen/generators.hpp"
#include "hybridgen/image.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace hybridgen {

/// Mean over images of cosine(embed_text(prompt), embed_image(image)).
double cs_text(std::string_view prompt, std::span<const Image> generated, const SemanticEncoder& encoder);

/// Mean cosine over the full references × generated cross product.
double cs_image(std::span<const Image> references, std::span<const Image> generated, const SemanticEncoder& encoder);

/// Same reduction on precomputed embeddings.
double mean_cross_cosine(std::span<const EmbeddingVector> a, std::span<const EmbeddingVector> b);

/// Structural score of one aligned pair: build each grid's P×P token cosine
/// matrix and average the cosine between corresponding rows.
double structural_consistency(const PatchTokenGrid& source, const PatchTokenGrid& target);

/// Self-similarity variant of SCS: mean of structural_consistency over
/// index-aligned pairs.
double scs(std::span<const Image> source_images, std::span<const Image> target_images, const PatchEncoder& encoder);

inline constexpr std::string_view kScsLabel = "scs (self-similarity variant)";

struct MetricsReport {
  std::optional<double> cs_t;
  std::optional<double> cs_i;
  std::optional<double> cs;
  std::optional<double> scs;
  int generated_samples = 0;
  int reference_images = 0;
  int text_prompts = 0;
  std::string config_fingerprint;

  /// Fills cs from cs_t and cs_i when both are present.
  void combine();

  /// key=value lines; absent metrics are omitted.
  std::string to_text() const;
  static MetricsReport parse(std::string_view text);

  /// Fixed-width table, one column per metric.
  std::string to_table() const;
};

/// Samples eval_sample_count noises from the "eval-noise" stream, generates
/// with the config's source and the given target, and computes every metric
/// the domain modalities allow: CS-T averaged over text domains, CS-I averaged
/// over image domains, and SCS between source and target samples.
MetricsReport evaluate(const AdaptationConfig& config, const GeneratorHandle& target);

}  // namespace hybridgen
