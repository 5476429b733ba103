#pragma once

#include "hybridgen/encoders.hpp"
#include "hybridgen/errors.hpp"
#include "hybridgen/generators.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hybridgen {

/// Stabilizer added to both norms of the direction cosine.
inline constexpr double kDirectionEps = 1e-8;
/// Domain directions at or below this length are rejected.
inline constexpr double kDegenerateDirectionNorm = 1e-6;

/// Coefficient schedule of the two-domain interpolation traversal.
inline constexpr std::array<double, 6> kDefaultSweepGrid{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};

enum class Modality { text, image };

struct DomainReference {
  Modality modality = Modality::text;
  std::string payload;  // prompt, or image path
  double coefficient = 0.5;

  void validate() const;
};

struct DirectionVector {
  Eigen::VectorXd values;

  Eigen::Index dim() const { return values.size(); }
};

/// Reference points the domain shifts are measured from.
struct SourceAnchor {
  EmbeddingVector mean_image_embedding;     // mean over source samples, re-normalized
  EmbeddingVector source_prompt_embedding;  // embedding of the source prompt
  int sample_count = 0;
  std::uint64_t seed = 0;
};

struct WeightedDirection {
  DirectionVector direction;
  double coefficient = 1.0;
};

// ---------------------------------------------------------------------------
// Direction loss: 1 - <s, d> / ((|s| + eps)(|d| + eps)).
//
// The eps terms keep the loss (≈ 1) and its gradient finite at s = 0, which
// is where every run starts because the target is cloned from the source.

template <typename DerivedS, typename DerivedD>
typename DerivedS::Scalar direction_loss(const Eigen::MatrixBase<DerivedS>& sample_shift,
                                         const Eigen::MatrixBase<DerivedD>& domain_shift) {
  using Scalar = typename DerivedS::Scalar;
  if (sample_shift.size() != domain_shift.size()) throw ShapeError("direction_loss: dimension mismatch");
  const Scalar d_norm = domain_shift.norm();
  if (!(d_norm > Scalar(kDegenerateDirectionNorm))) {
    throw DegenerateDomainError("domain direction is degenerate (norm <= 1e-6)");
  }
  const Scalar eps(kDirectionEps);
  const Scalar s_norm = sample_shift.norm();
  return Scalar(1) - sample_shift.dot(domain_shift) / ((s_norm + eps) * (d_norm + eps));
}

/// Gradient of direction_loss with respect to the sample shift. At s = 0 the
/// norm's contribution vanishes and the result is -d / (eps (|d| + eps)).
template <typename DerivedS, typename DerivedD>
Eigen::Matrix<typename DerivedS::Scalar, Eigen::Dynamic, 1> direction_loss_gradient(
    const Eigen::MatrixBase<DerivedS>& sample_shift, const Eigen::MatrixBase<DerivedD>& domain_shift) {
  using Scalar = typename DerivedS::Scalar;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (sample_shift.size() != domain_shift.size()) throw ShapeError("direction_loss: dimension mismatch");
  const Scalar d_norm = domain_shift.norm();
  if (!(d_norm > Scalar(kDegenerateDirectionNorm))) {
    throw DegenerateDomainError("domain direction is degenerate (norm <= 1e-6)");
  }
  const Scalar eps(kDirectionEps);
  const Scalar s_norm = sample_shift.norm();
  const Scalar a = s_norm + eps;
  const Scalar b = d_norm + eps;
  Vector grad = -domain_shift.derived().template cast<Scalar>() / (a * b);
  if (s_norm > Scalar(0)) grad += sample_shift.dot(domain_shift) / (a * a * b * s_norm) * sample_shift;
  return grad;
}

/// Plain cosine; zero when either side is the zero vector.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: dimension mismatch");
  const Scalar denom = a.norm() * b.norm();
  return denom > Scalar(0) ? a.dot(b) / denom : Scalar(0);
}

inline double direction_loss(const DirectionVector& sample_shift, const DirectionVector& domain_shift) {
  return direction_loss(sample_shift.values, domain_shift.values);
}

// ---------------------------------------------------------------------------
// Domain shifts and composition

DirectionVector image_domain_shift(const EmbeddingVector& reference_embedding, const SourceAnchor& anchor);
DirectionVector text_domain_shift(const EmbeddingVector& target_prompt_embedding, const SourceAnchor& anchor);

/// Sum of coefficient · direction, accumulated in list order. Throws
/// InvalidInputError on an empty list and ShapeError on mixed dimensions.
DirectionVector compose_directions(std::span<const WeightedDirection> shifts);

/// Element k is compose({(a, 1 - t_k), (b, t_k)}).
std::vector<DirectionVector> interpolation_sweep(const DirectionVector& shift_a, const DirectionVector& shift_b,
                                                 std::span<const double> grid = kDefaultSweepGrid);

/// Embeds sample_count source samples drawn from NoiseBatch::sample(seed),
/// averages and re-normalizes them, and embeds the source prompt.
SourceAnchor compute_source_anchor(const GeneratorHandle& generator, const SemanticEncoder& encoder,
                                   const std::string& source_prompt, int sample_count, std::uint64_t seed);

/// Shift for one reference; image payloads are resolved against
/// base_directory when relative.
DirectionVector domain_shift(const DomainReference& reference, const SemanticEncoder& encoder,
                             const SourceAnchor& anchor, const std::filesystem::path& base_directory = {});

// ---------------------------------------------------------------------------
// UHDV files: "UHDV" | u32 version | u32 dim | u32 count | f32 × count·dim

inline constexpr std::uint32_t kDirectionFileVersion = 1;

std::vector<std::uint8_t> encode_directions(std::span<const DirectionVector> directions);
std::vector<DirectionVector> decode_directions(std::span<const std::uint8_t> bytes);
void write_directions(const std::filesystem::path& path, std::span<const DirectionVector> directions);
std::vector<DirectionVector> read_directions(const std::filesystem::path& path);

}  // namespace hybridgen
