#pragma once

#include "hybridgen/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

namespace hybridgen {

/// Unit-norm point in the shared image/text embedding space.
struct EmbeddingVector {
  Eigen::VectorXd values;

  Eigen::Index dim() const { return values.size(); }

  /// Normalizes `raw`; throws InvalidInputError for zero or non-finite input.
  static EmbeddingVector normalized(const Eigen::VectorXd& raw);
};

/// P×D tokens, one row per spatial position in row-major grid order. Rows are
/// unit-norm when produced by an encoder; the losses do not require it.
struct PatchTokenGrid {
  Eigen::MatrixXd tokens;
  int grid_height = 0;
  int grid_width = 0;

  Eigen::Index positions() const { return tokens.rows(); }
  Eigen::Index dim() const { return tokens.cols(); }
};

struct EncoderDescriptor {
  std::string name;
  int embedding_dim = 0;  // D_sem for semantic encoders, D_tok for patch encoders
  Resolution input_resolution;
  ValueRange value_range;

  void validate() const;
};

/// Joint image/text encoder. Implementations are immutable after
/// construction, so all methods may be called concurrently.
class SemanticEncoder {
 public:
  virtual ~SemanticEncoder() = default;

  virtual const EncoderDescriptor& descriptor() const = 0;
  virtual EmbeddingVector embed_image(const Image& image) const = 0;
  virtual EmbeddingVector embed_text(std::string_view prompt) const = 0;

  /// Gradient of <upstream, embed_image(image)> with respect to the pixels.
  virtual Image embed_image_vjp(const Image& image, const Eigen::VectorXd& upstream) const = 0;
};

/// Spatial token encoder. Global/class tokens are never part of the grid.
class PatchEncoder {
 public:
  virtual ~PatchEncoder() = default;

  virtual const EncoderDescriptor& descriptor() const = 0;
  virtual PatchTokenGrid encode_patches(const Image& image) const = 0;

  /// Gradient of sum(upstream .* encode_patches(image).tokens) w.r.t. pixels.
  virtual Image encode_patches_vjp(const Image& image, const Eigen::MatrixXd& upstream) const = 0;
};

/// Toy joint encoder. Images: bilinear resize to input_resolution, channel
/// mean, orthonormal-row projection, normalize. Text: byte n-gram (n ≤ 3)
/// hash histogram, seeded Gaussian projection into the same space, normalize.
class ToySemanticEncoder final : public SemanticEncoder {
 public:
  struct Options {
    std::uint64_t seed = 7;
    int embedding_dim = 64;
    Resolution input_resolution{16, 16};
    int text_buckets = 512;
  };

  explicit ToySemanticEncoder(const Options& options);
  ToySemanticEncoder() : ToySemanticEncoder(Options{}) {}

  /// Explicit projections. image_projection is D×(H·W) over the grayscale
  /// raster at `input_resolution`; text_projection is D×buckets.
  ToySemanticEncoder(Eigen::MatrixXd image_projection, Eigen::MatrixXd text_projection, Resolution input_resolution,
                     ValueRange value_range = kImageRange);

  const EncoderDescriptor& descriptor() const override { return descriptor_; }
  EmbeddingVector embed_image(const Image& image) const override;
  EmbeddingVector embed_text(std::string_view prompt) const override;
  Image embed_image_vjp(const Image& image, const Eigen::VectorXd& upstream) const override;

  /// Pre-normalization image features (exposed for the homogeneity property).
  Eigen::VectorXd project_image(const Image& image) const;
  Eigen::VectorXd text_histogram(std::string_view prompt) const;

  const Eigen::MatrixXd& image_projection() const { return image_projection_; }

 private:
  Eigen::VectorXd grayscale(const Image& image) const;

  EncoderDescriptor descriptor_;
  Eigen::MatrixXd image_projection_;
  Eigen::MatrixXd text_projection_;
};

/// Toy patch encoder. Bilinear resize to input_resolution, split into
/// non-overlapping patch_size² patches, mean-pool each patch over a
/// cells×cells sub-grid per channel, seeded affine map to token_dim,
/// subtract `centering` times the image's mean token, normalize each token.
/// cells = 1 is plain per-patch mean pooling.
///
/// Centering makes tokens describe a patch relative to the rest of the
/// image, so different positions are well separated. Keeping it below 1
/// (with the bias) leaves identical patches with identical, non-zero tokens.
class ToyPatchEncoder final : public PatchEncoder {
 public:
  struct Options {
    std::uint64_t seed = 7;
    int token_dim = 32;
    Resolution input_resolution{32, 32};
    int patch_size = 8;
    int cells = 2;
    int channels = 3;
    double centering = 0.95;
  };

  explicit ToyPatchEncoder(const Options& options);
  ToyPatchEncoder() : ToyPatchEncoder(Options{}) {}

  const EncoderDescriptor& descriptor() const override { return descriptor_; }
  PatchTokenGrid encode_patches(const Image& image) const override;
  Image encode_patches_vjp(const Image& image, const Eigen::MatrixXd& upstream) const override;

  int grid_height() const { return options_.input_resolution.height / options_.patch_size; }
  int grid_width() const { return options_.input_resolution.width / options_.patch_size; }
  int positions() const { return grid_height() * grid_width(); }

 private:
  // positions × (cells² · channels) pooled features.
  Eigen::MatrixXd pooled(const Image& resized) const;
  Eigen::MatrixXd raw_tokens(const Image& resized) const;
  Image prepare(const Image& image) const;

  Options options_;
  EncoderDescriptor descriptor_;
  Eigen::MatrixXd map_;  // token_dim × features
  Eigen::VectorXd bias_;
};

struct SemanticEncoderSpec {
  std::string name = "toy";
  std::uint64_t seed = 7;
  std::string weights;  // pretrained adapters only
};

struct PatchEncoderSpec {
  std::string name = "toy";
  std::uint64_t seed = 7;
  std::string weights;
  std::string layer = "output";  // which final-layer features a pretrained adapter exposes
  int patch_size = 8;
};

/// Builds the encoder named by `spec`. Only "toy" is built in; pretrained
/// adapters must be registered by the embedding application.
std::shared_ptr<const SemanticEncoder> make_semantic_encoder(const SemanticEncoderSpec& spec);
std::shared_ptr<const PatchEncoder> make_patch_encoder(const PatchEncoderSpec& spec);

using SemanticEncoderFactory = std::shared_ptr<const SemanticEncoder> (*)(const SemanticEncoderSpec&);
using PatchEncoderFactory = std::shared_ptr<const PatchEncoder> (*)(const PatchEncoderSpec&);
void register_semantic_encoder(const std::string& name, SemanticEncoderFactory factory);
void register_patch_encoder(const std::string& name, PatchEncoderFactory factory);

}  // namespace hybridgen
