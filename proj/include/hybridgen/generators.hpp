#pragma once

#include "hybridgen/image.hpp"
#include "hybridgen/rng.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hybridgen {

/// B×Z standard-normal latent codes, one row per sample.
struct NoiseBatch {
  Eigen::MatrixXd values;
  std::uint64_t seed = 0;

  Eigen::Index batch() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }

  static NoiseBatch sample(Eigen::Index batch, Eigen::Index dim, std::uint64_t seed);
  static NoiseBatch sample(Eigen::Index batch, Eigen::Index dim, Engine& engine, std::uint64_t seed_tag = 0);
};

/// A differentiable map from (parameters, noise) to images. Parameters are
/// passed in, so one architecture instance serves any number of handles.
class GeneratorArchitecture {
 public:
  virtual ~GeneratorArchitecture() = default;

  virtual const std::string& id() const = 0;
  virtual Eigen::Index parameter_count() const = 0;
  virtual int noise_dim() const = 0;
  virtual Resolution resolution() const = 0;
  virtual int channels() const = 0;

  virtual Eigen::VectorXf initial_parameters(std::uint64_t seed) const = 0;

  /// Output pixels lie in kImageRange.
  virtual Image forward(const Eigen::VectorXd& params, const Eigen::VectorXd& noise) const = 0;

  /// Gradient of <upstream, forward(params, noise)> with respect to params.
  virtual Eigen::VectorXd backward(const Eigen::VectorXd& params, const Eigen::VectorXd& noise,
                                   const Image& upstream) const = 0;
};

/// z → tanh(W1 z + b1) → tanh(W2 h + b2), reshaped to H×W×C.
/// Parameter layout: W1 (hidden×noise, column-major), b1, W2 (pixels×hidden,
/// column-major), b2.
class ToyMlpArchitecture final : public GeneratorArchitecture {
 public:
  struct Options {
    int noise_dim = 32;
    int hidden_dim = 16;
    Resolution resolution{32, 32};
    int channels = 3;
  };

  explicit ToyMlpArchitecture(const Options& options);
  ToyMlpArchitecture() : ToyMlpArchitecture(Options{}) {}

  /// Format: "toy-mlp/z<noise>-h<hidden>-<height>x<width>x<channels>".
  static std::string make_id(const Options& options);
  static bool parse_id(const std::string& id, Options& out);

  const std::string& id() const override { return id_; }
  Eigen::Index parameter_count() const override;
  int noise_dim() const override { return options_.noise_dim; }
  Resolution resolution() const override { return options_.resolution; }
  int channels() const override { return options_.channels; }
  const Options& options() const { return options_; }

  Eigen::VectorXf initial_parameters(std::uint64_t seed) const override;
  Image forward(const Eigen::VectorXd& params, const Eigen::VectorXd& noise) const override;
  Eigen::VectorXd backward(const Eigen::VectorXd& params, const Eigen::VectorXd& noise,
                           const Image& upstream) const override;

 private:
  Eigen::Index pixel_count() const;
  void check(const Eigen::VectorXd& params, const Eigen::VectorXd& noise) const;

  Options options_;
  std::string id_;
};

/// Resolves an architecture id (as stored in checkpoints).
std::shared_ptr<const GeneratorArchitecture> make_architecture(const std::string& id);

/// Parameters plus the architecture they belong to. Frozen handles reject
/// parameter updates. Copying a handle copies its parameters.
class GeneratorHandle {
 public:
  GeneratorHandle(std::shared_ptr<const GeneratorArchitecture> architecture, Eigen::VectorXf parameters,
                  bool trainable);

  const GeneratorArchitecture& architecture() const { return *architecture_; }
  const std::shared_ptr<const GeneratorArchitecture>& architecture_ptr() const { return architecture_; }
  const std::string& architecture_id() const { return architecture_->id(); }
  const Eigen::VectorXf& parameters() const { return parameters_; }
  bool trainable() const { return trainable_; }

  /// Throws FrozenHandleError on a frozen handle, ShapeError on size change.
  void set_parameters(Eigen::VectorXf parameters);

  /// SHA-256 over the little-endian float32 parameter bytes.
  std::string parameter_fingerprint() const;

 private:
  std::shared_ptr<const GeneratorArchitecture> architecture_;
  Eigen::VectorXf parameters_;
  bool trainable_;
};

/// Frozen source generator with seeded initial parameters.
GeneratorHandle make_source_generator(std::shared_ptr<const GeneratorArchitecture> architecture, std::uint64_t seed);

/// One image per noise row.
std::vector<Image> generate(const GeneratorHandle& handle, const NoiseBatch& noise);

/// Trainable copy with identical parameters.
GeneratorHandle clone_as_target(const GeneratorHandle& source);

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const GeneratorHandle& handle);
GeneratorHandle decode_checkpoint(std::span<const std::uint8_t> bytes, bool trainable = false);
void save_checkpoint(const GeneratorHandle& handle, const std::filesystem::path& path);
GeneratorHandle load_checkpoint(const std::filesystem::path& path, bool trainable = false);

}  // namespace hybridgen
