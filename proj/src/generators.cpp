#include "hybridgen/generators.hpp"

#include "detail/binary_io.hpp"
#include "hybridgen/digest.hpp"
#include "hybridgen/errors.hpp"

#include <cmath>
#include <cstdio>
#include <string>

namespace hybridgen {

NoiseBatch NoiseBatch::sample(Eigen::Index batch, Eigen::Index dim, std::uint64_t seed) {
  Engine engine = make_stream(seed, "noise");
  return sample(batch, dim, engine, seed);
}

NoiseBatch NoiseBatch::sample(Eigen::Index batch, Eigen::Index dim, Engine& engine, std::uint64_t seed_tag) {
  if (batch < 1 || dim < 1) throw InvalidInputError("noise batch needs B >= 1 and Z >= 1");
  return {standard_normal(batch, dim, engine), seed_tag};
}

// ---------------------------------------------------------------------------
// ToyMlpArchitecture

ToyMlpArchitecture::ToyMlpArchitecture(const Options& options) : options_(options), id_(make_id(options)) {
  if (options.noise_dim < 1 || options.hidden_dim < 1 || options.resolution.height < 1 ||
      options.resolution.width < 1 || options.channels < 1) {
    throw InvalidInputError("toy generator dimensions must be positive");
  }
}

std::string ToyMlpArchitecture::make_id(const Options& o) {
  return "toy-mlp/z" + std::to_string(o.noise_dim) + "-h" + std::to_string(o.hidden_dim) + "-" +
         std::to_string(o.resolution.height) + "x" + std::to_string(o.resolution.width) + "x" +
         std::to_string(o.channels);
}

bool ToyMlpArchitecture::parse_id(const std::string& id, Options& out) {
  Options o;
  char tail = 0;
  const int n = std::sscanf(id.c_str(), "toy-mlp/z%d-h%d-%dx%dx%d%c", &o.noise_dim, &o.hidden_dim,
                            &o.resolution.height, &o.resolution.width, &o.channels, &tail);
  if (n != 5 || make_id(o) != id) return false;
  out = o;
  return true;
}

Eigen::Index ToyMlpArchitecture::pixel_count() const {
  return Eigen::Index(options_.resolution.height) * options_.resolution.width * options_.channels;
}

Eigen::Index ToyMlpArchitecture::parameter_count() const {
  const Eigen::Index h = options_.hidden_dim;
  return h * options_.noise_dim + h + pixel_count() * h + pixel_count();
}

Eigen::VectorXf ToyMlpArchitecture::initial_parameters(std::uint64_t seed) const {
  Engine engine = make_stream(seed, "toy-mlp-init");
  const Eigen::Index h = options_.hidden_dim;
  const Eigen::Index z = options_.noise_dim;
  const Eigen::Index n = pixel_count();
  Eigen::VectorXd params(parameter_count());
  Eigen::Index offset = 0;
  auto fill = [&](Eigen::Index rows, Eigen::Index cols, double scale) {
    const Eigen::MatrixXd block = standard_normal(rows, cols, engine) * scale;
    params.segment(offset, rows * cols) = Eigen::Map<const Eigen::VectorXd>(block.data(), rows * cols);
    offset += rows * cols;
  };
  fill(h, z, 1.0 / std::sqrt(double(z)));
  fill(h, 1, 0.1);
  fill(n, h, 1.0 / std::sqrt(double(h)));
  fill(n, 1, 0.3);
  return params.cast<float>();
}

void ToyMlpArchitecture::check(const Eigen::VectorXd& params, const Eigen::VectorXd& noise) const {
  if (params.size() != parameter_count()) throw ShapeError("parameter vector has wrong length for " + id_);
  if (noise.size() != options_.noise_dim) {
    throw ShapeError("noise dimension " + std::to_string(noise.size()) + " does not match " + id_);
  }
}

Image ToyMlpArchitecture::forward(const Eigen::VectorXd& params, const Eigen::VectorXd& noise) const {
  check(params, noise);
  const Eigen::Index h = options_.hidden_dim;
  const Eigen::Index z = options_.noise_dim;
  const Eigen::Index n = pixel_count();
  Eigen::Map<const Eigen::MatrixXd> w1(params.data(), h, z);
  Eigen::Map<const Eigen::VectorXd> b1(params.data() + h * z, h);
  Eigen::Map<const Eigen::MatrixXd> w2(params.data() + h * z + h, n, h);
  Eigen::Map<const Eigen::VectorXd> b2(params.data() + h * z + h + n * h, n);

  const Eigen::VectorXd hidden = (w1 * noise + b1).array().tanh().matrix();
  Eigen::VectorXd out = (w2 * hidden + b2).array().tanh().matrix();
  return Image(options_.resolution.height, options_.resolution.width, options_.channels, std::move(out));
}

Eigen::VectorXd ToyMlpArchitecture::backward(const Eigen::VectorXd& params, const Eigen::VectorXd& noise,
                                             const Image& upstream) const {
  check(params, noise);
  if (upstream.pixels.size() != pixel_count()) throw ShapeError("upstream image gradient has wrong size");
  const Eigen::Index h = options_.hidden_dim;
  const Eigen::Index z = options_.noise_dim;
  const Eigen::Index n = pixel_count();
  Eigen::Map<const Eigen::MatrixXd> w1(params.data(), h, z);
  Eigen::Map<const Eigen::VectorXd> b1(params.data() + h * z, h);
  Eigen::Map<const Eigen::MatrixXd> w2(params.data() + h * z + h, n, h);
  Eigen::Map<const Eigen::VectorXd> b2(params.data() + h * z + h + n * h, n);

  const Eigen::VectorXd hidden = (w1 * noise + b1).array().tanh().matrix();
  const Eigen::VectorXd out = (w2 * hidden + b2).array().tanh().matrix();

  const Eigen::VectorXd d_pre_out = upstream.pixels.array() * (1.0 - out.array().square());
  const Eigen::VectorXd d_pre_hidden = (w2.transpose() * d_pre_out).array() * (1.0 - hidden.array().square());

  Eigen::VectorXd grad(parameter_count());
  Eigen::Map<Eigen::MatrixXd>(grad.data(), h, z) = d_pre_hidden * noise.transpose();
  grad.segment(h * z, h) = d_pre_hidden;
  Eigen::Map<Eigen::MatrixXd>(grad.data() + h * z + h, n, h) = d_pre_out * hidden.transpose();
  grad.segment(h * z + h + n * h, n) = d_pre_out;
  return grad;
}

std::shared_ptr<const GeneratorArchitecture> make_architecture(const std::string& id) {
  ToyMlpArchitecture::Options options;
  if (ToyMlpArchitecture::parse_id(id, options)) return std::make_shared<ToyMlpArchitecture>(options);
  throw InvalidInputError("unknown generator architecture '" + id + "'");
}

// ---------------------------------------------------------------------------
// GeneratorHandle

GeneratorHandle::GeneratorHandle(std::shared_ptr<const GeneratorArchitecture> architecture,
                                 Eigen::VectorXf parameters, bool trainable)
    : architecture_(std::move(architecture)), parameters_(std::move(parameters)), trainable_(trainable) {
  if (!architecture_) throw InvalidInputError("generator handle needs an architecture");
  if (parameters_.size() == 0 || parameters_.size() != architecture_->parameter_count()) {
    throw ShapeError("parameter count does not match architecture " + architecture_->id());
  }
}

void GeneratorHandle::set_parameters(Eigen::VectorXf parameters) {
  if (!trainable_) throw FrozenHandleError("cannot update a frozen generator");
  if (parameters.size() != parameters_.size()) throw ShapeError("parameter update changes the parameter count");
  parameters_ = std::move(parameters);
}

std::string GeneratorHandle::parameter_fingerprint() const {
  detail::ByteWriter w;
  for (Eigen::Index i = 0; i < parameters_.size(); ++i) w.f32(parameters_[i]);
  return sha256_hex(w.bytes());
}

GeneratorHandle make_source_generator(std::shared_ptr<const GeneratorArchitecture> architecture, std::uint64_t seed) {
  Eigen::VectorXf params = architecture->initial_parameters(seed);
  return GeneratorHandle(std::move(architecture), std::move(params), false);
}

std::vector<Image> generate(const GeneratorHandle& handle, const NoiseBatch& noise) {
  if (noise.dim() != handle.architecture().noise_dim()) {
    throw ShapeError("noise dimension " + std::to_string(noise.dim()) + " does not match " + handle.architecture_id());
  }
  const Eigen::VectorXd params = handle.parameters().cast<double>();
  std::vector<Image> images;
  images.reserve(static_cast<std::size_t>(noise.batch()));
  for (Eigen::Index b = 0; b < noise.batch(); ++b) {
    images.push_back(handle.architecture().forward(params, noise.values.row(b).transpose()));
  }
  return images;
}

GeneratorHandle clone_as_target(const GeneratorHandle& source) {
  return GeneratorHandle(source.architecture_ptr(), source.parameters(), true);
}

// ---------------------------------------------------------------------------
// Checkpoints: "UHGC" | u32 version | u32 id length | id | u64 count | f32 × count | u32 crc32

namespace {
constexpr std::string_view kCheckpointMagic = "UHGC";
}

std::vector<std::uint8_t> encode_checkpoint(const GeneratorHandle& handle) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(handle.architecture_id().size()));
  w.raw(handle.architecture_id());
  w.u64(static_cast<std::uint64_t>(handle.parameters().size()));
  for (Eigen::Index i = 0; i < handle.parameters().size(); ++i) w.f32(handle.parameters()[i]);
  w.u32(crc32(w.bytes()));
  return std::move(w.bytes());
}

GeneratorHandle decode_checkpoint(std::span<const std::uint8_t> bytes, bool trainable) {
  detail::ByteReader<CheckpointFormatError> r(bytes, "checkpoint");
  if (r.raw(4) != kCheckpointMagic) throw CheckpointFormatError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw UnsupportedVersionError("checkpoint: unsupported version " + std::to_string(version), version);
  }
  const std::uint32_t id_length = r.u32();
  if (id_length > r.remaining()) throw CheckpointFormatError("checkpoint: truncated data");
  const std::string id = r.raw(id_length);
  const std::uint64_t count = r.u64();
  if (count == 0 || count > r.remaining() / 4) throw CheckpointFormatError("checkpoint: truncated data");
  Eigen::VectorXf params(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < params.size(); ++i) params[i] = r.f32();
  const std::size_t body = r.position();
  const std::uint32_t stored = r.u32();
  if (r.remaining() != 0) throw CheckpointFormatError("checkpoint: trailing bytes after checksum");
  if (stored != crc32(bytes.first(body))) throw CheckpointFormatError("checkpoint: checksum mismatch");

  std::shared_ptr<const GeneratorArchitecture> architecture;
  try {
    architecture = make_architecture(id);
  } catch (const InvalidInputError& e) {
    throw CheckpointFormatError(std::string("checkpoint: ") + e.what());
  }
  if (architecture->parameter_count() != params.size()) {
    throw CheckpointFormatError("checkpoint: parameter count does not match " + id);
  }
  return GeneratorHandle(std::move(architecture), std::move(params), trainable);
}

void save_checkpoint(const GeneratorHandle& handle, const std::filesystem::path& path) {
  detail::write_file_atomic(path, encode_checkpoint(handle));
}

GeneratorHandle load_checkpoint(const std::filesystem::path& path, bool trainable) {
  return decode_checkpoint(detail::read_file(path), trainable);
}

}  // namespace hybridgen
