#include "hybridgen/directions.hpp"

#include "detail/binary_io.hpp"
#include "hybridgen/image_io.hpp"

#include <cmath>
#include <string>

namespace hybridgen {

void DomainReference::validate() const {
  if (payload.empty()) throw InvalidInputError("domain payload must be non-empty");
  if (!std::isfinite(coefficient)) throw InvalidInputError("domain coefficient must be finite");
}

namespace {

DirectionVector difference(const EmbeddingVector& target, const EmbeddingVector& source) {
  if (target.dim() != source.dim()) {
    throw ShapeError("embedding dimensions differ (" + std::to_string(target.dim()) + " vs " +
                     std::to_string(source.dim()) + ")");
  }
  return {target.values - source.values};
}

}  // namespace

DirectionVector image_domain_shift(const EmbeddingVector& reference_embedding, const SourceAnchor& anchor) {
  return difference(reference_embedding, anchor.mean_image_embedding);
}

DirectionVector text_domain_shift(const EmbeddingVector& target_prompt_embedding, const SourceAnchor& anchor) {
  return difference(target_prompt_embedding, anchor.source_prompt_embedding);
}

DirectionVector compose_directions(std::span<const WeightedDirection> shifts) {
  if (shifts.empty()) throw InvalidInputError("compose_directions needs at least one direction");
  const Eigen::Index dim = shifts.front().direction.dim();
  DirectionVector out{shifts.front().coefficient * shifts.front().direction.values};
  for (std::size_t k = 1; k < shifts.size(); ++k) {
    if (shifts[k].direction.dim() != dim) throw ShapeError("compose_directions: dimension mismatch");
    out.values += shifts[k].coefficient * shifts[k].direction.values;
  }
  if (!out.values.allFinite()) throw InvalidInputError("composed direction is not finite");
  return out;
}

std::vector<DirectionVector> interpolation_sweep(const DirectionVector& shift_a, const DirectionVector& shift_b,
                                                 std::span<const double> grid) {
  if (shift_a.dim() != shift_b.dim()) throw ShapeError("interpolation_sweep: dimension mismatch");
  std::vector<DirectionVector> out;
  out.reserve(grid.size());
  for (double t : grid) {
    if (!std::isfinite(t)) throw InvalidInputError("interpolation grid values must be finite");
    const WeightedDirection pair[2] = {{shift_a, 1.0 - t}, {shift_b, t}};
    out.push_back(compose_directions(pair));
  }
  return out;
}

SourceAnchor compute_source_anchor(const GeneratorHandle& generator, const SemanticEncoder& encoder,
                                   const std::string& source_prompt, int sample_count, std::uint64_t seed) {
  if (sample_count < 1) throw InvalidInputError("anchor sample_count must be >= 1");
  const NoiseBatch noise = NoiseBatch::sample(sample_count, generator.architecture().noise_dim(), seed);
  const std::vector<Image> images = generate(generator, noise);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(encoder.descriptor().embedding_dim);
  for (const Image& image : images) sum += encoder.embed_image(image).values;
  return {EmbeddingVector::normalized(sum / sample_count), encoder.embed_text(source_prompt), sample_count, seed};
}

DirectionVector domain_shift(const DomainReference& reference, const SemanticEncoder& encoder,
                             const SourceAnchor& anchor, const std::filesystem::path& base_directory) {
  reference.validate();
  if (reference.modality == Modality::text) return text_domain_shift(encoder.embed_text(reference.payload), anchor);
  std::filesystem::path path(reference.payload);
  if (path.is_relative() && !base_directory.empty()) path = base_directory / path;
  return image_domain_shift(encoder.embed_image(read_image(path)), anchor);
}

// ---------------------------------------------------------------------------
// UHDV

namespace {
constexpr std::string_view kDirectionMagic = "UHDV";
}

std::vector<std::uint8_t> encode_directions(std::span<const DirectionVector> directions) {
  const Eigen::Index dim = directions.empty() ? 0 : directions.front().dim();
  detail::ByteWriter w;
  w.raw(kDirectionMagic);
  w.u32(kDirectionFileVersion);
  w.u32(static_cast<std::uint32_t>(dim));
  w.u32(static_cast<std::uint32_t>(directions.size()));
  for (const DirectionVector& d : directions) {
    if (d.dim() != dim) throw ShapeError("all directions in a file must share one dimension");
    for (Eigen::Index i = 0; i < dim; ++i) w.f32(static_cast<float>(d.values[i]));
  }
  return std::move(w.bytes());
}

std::vector<DirectionVector> decode_directions(std::span<const std::uint8_t> bytes) {
  detail::ByteReader<DirectionFormatError> r(bytes, "direction file");
  if (r.raw(4) != kDirectionMagic) throw DirectionFormatError("direction file: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kDirectionFileVersion) {
    throw DirectionFormatError("direction file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t dim = r.u32();
  const std::uint32_t count = r.u32();
  if (std::uint64_t(dim) * count * 4 != r.remaining()) {
    throw DirectionFormatError(std::uint64_t(dim) * count * 4 > r.remaining() ? "direction file: truncated data"
                                                                              : "direction file: trailing bytes");
  }
  std::vector<DirectionVector> out(count, DirectionVector{Eigen::VectorXd(dim)});
  for (DirectionVector& d : out) {
    for (std::uint32_t i = 0; i < dim; ++i) d.values[i] = r.f32();
  }
  return out;
}

void write_directions(const std::filesystem::path& path, std::span<const DirectionVector> directions) {
  detail::write_file_atomic(path, encode_directions(directions));
}

std::vector<DirectionVector> read_directions(const std::filesystem::path& path) {
  return decode_directions(detail::read_file(path));
}

}  // namespace hybridgen
