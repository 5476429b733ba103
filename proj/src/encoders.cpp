#include "hybridgen/encoders.hpp"

#include "hybridgen/errors.hpp"
#include "hybridgen/rng.hpp"

#include <Eigen/QR>

#include <map>
#include <mutex>
#include <string>

namespace hybridgen {

EmbeddingVector EmbeddingVector::normalized(const Eigen::VectorXd& raw) {
  if (!raw.allFinite()) throw InvalidInputError("embedding has non-finite entries");
  const double norm = raw.norm();
  if (norm == 0.0) throw InvalidInputError("cannot normalize a zero embedding");
  return {raw / norm};
}

void EncoderDescriptor::validate() const {
  if (embedding_dim <= 0) throw InvalidInputError("encoder '" + name + "': embedding dimension must be positive");
  if (input_resolution.height <= 0 || input_resolution.width <= 0) {
    throw InvalidInputError("encoder '" + name + "': input resolution must be positive");
  }
  if (!(value_range.high > value_range.low)) throw InvalidInputError("encoder '" + name + "': empty value range");
}

namespace {

// Gradient of n = u/|u| pulled back to u.
Eigen::VectorXd normalize_vjp(const Eigen::VectorXd& u, const Eigen::VectorXd& upstream) {
  const double norm = u.norm();
  const Eigen::VectorXd n = u / norm;
  return (upstream - n * n.dot(upstream)) / norm;
}

}  // namespace

// ---------------------------------------------------------------------------
// ToySemanticEncoder

ToySemanticEncoder::ToySemanticEncoder(const Options& options) {
  const int pixels = options.input_resolution.height * options.input_resolution.width;
  if (options.embedding_dim <= 0 || options.embedding_dim > pixels) {
    throw InvalidInputError("toy semantic encoder needs 0 < embedding_dim <= input pixels");
  }
  if (options.text_buckets <= 0) throw InvalidInputError("toy semantic encoder needs text_buckets > 0");

  Engine image_stream = make_stream(options.seed, "semantic-image-projection");
  const Eigen::MatrixXd gaussian = standard_normal(pixels, options.embedding_dim, image_stream);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  image_projection_ = (qr.householderQ() * Eigen::MatrixXd::Identity(pixels, options.embedding_dim)).transpose();

  Engine text_stream = make_stream(options.seed, "semantic-text-projection");
  text_projection_ = standard_normal(options.embedding_dim, options.text_buckets, text_stream);

  descriptor_ = {"toy-semantic", options.embedding_dim, options.input_resolution, kImageRange};
}

ToySemanticEncoder::ToySemanticEncoder(Eigen::MatrixXd image_projection, Eigen::MatrixXd text_projection,
                                       Resolution input_resolution, ValueRange value_range)
    : image_projection_(std::move(image_projection)), text_projection_(std::move(text_projection)) {
  if (image_projection_.cols() != Eigen::Index(input_resolution.height) * input_resolution.width) {
    throw ShapeError("image projection must have one column per input pixel");
  }
  if (text_projection_.rows() != image_projection_.rows() || text_projection_.cols() == 0) {
    throw ShapeError("text projection must map into the image embedding space");
  }
  descriptor_ = {"toy-semantic", static_cast<int>(image_projection_.rows()), input_resolution, value_range};
  descriptor_.validate();
}

Eigen::VectorXd ToySemanticEncoder::grayscale(const Image& image) const {
  validate_image(image, 3);
  const Image resized = resize_bilinear(image, descriptor_.input_resolution);
  const auto [scale, offset] = range_map(kImageRange, descriptor_.value_range);
  const Eigen::Index n = Eigen::Index(resized.height) * resized.width;
  const auto rgb = Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>>(resized.pixels.data(), 3, n);
  return ((rgb.colwise().sum() / 3.0).array() * scale + offset).matrix().transpose();
}

Eigen::VectorXd ToySemanticEncoder::project_image(const Image& image) const {
  return image_projection_ * grayscale(image);
}

EmbeddingVector ToySemanticEncoder::embed_image(const Image& image) const {
  return EmbeddingVector::normalized(project_image(image));
}

Image ToySemanticEncoder::embed_image_vjp(const Image& image, const Eigen::VectorXd& upstream) const {
  if (upstream.size() != descriptor_.embedding_dim) throw ShapeError("upstream gradient has wrong dimension");
  const Eigen::VectorXd u = project_image(image);
  const Eigen::VectorXd d_gray = image_projection_.transpose() * normalize_vjp(u, upstream);
  const double scale = range_map(kImageRange, descriptor_.value_range).first;

  const Resolution res = descriptor_.input_resolution;
  Eigen::VectorXd d_resized(d_gray.size() * 3);
  for (Eigen::Index p = 0; p < d_gray.size(); ++p) d_resized.segment<3>(3 * p).setConstant(d_gray[p] * scale / 3.0);
  if (image.resolution() == res) return Image(image.height, image.width, 3, std::move(d_resized));
  const auto op = bilinear_resize_operator(image.resolution(), res, 3);
  return Image(image.height, image.width, 3, op.transpose() * d_resized);
}

Eigen::VectorXd ToySemanticEncoder::text_histogram(std::string_view prompt) const {
  if (prompt.empty()) throw InvalidInputError("prompt must be non-empty");
  const std::string padded = "^" + std::string(prompt) + "$";
  Eigen::VectorXd histogram = Eigen::VectorXd::Zero(text_projection_.cols());
  const auto buckets = static_cast<std::uint64_t>(text_projection_.cols());
  for (std::size_t n = 1; n <= 3; ++n) {
    for (std::size_t i = 0; i + n <= padded.size(); ++i) {
      const std::uint64_t h = fnv1a(std::string_view(padded).substr(i, n), fnv1a(std::to_string(n)));
      histogram[static_cast<Eigen::Index>(h % buckets)] += 1.0;
    }
  }
  return histogram;
}

EmbeddingVector ToySemanticEncoder::embed_text(std::string_view prompt) const {
  return EmbeddingVector::normalized(text_projection_ * text_histogram(prompt));
}

// ---------------------------------------------------------------------------
// ToyPatchEncoder

ToyPatchEncoder::ToyPatchEncoder(const Options& options) : options_(options) {
  const Resolution res = options.input_resolution;
  if (options.patch_size <= 0 || options.cells <= 0 || options.channels <= 0 || options.token_dim <= 0) {
    throw InvalidInputError("toy patch encoder options must be positive");
  }
  if (res.height % options.patch_size != 0 || res.width % options.patch_size != 0) {
    throw InvalidInputError("input resolution must be a multiple of patch_size");
  }
  if (options.patch_size % options.cells != 0) throw InvalidInputError("patch_size must be a multiple of cells");
  if (!(options.centering >= 0.0 && options.centering < 1.0)) throw InvalidInputError("centering must be in [0, 1)");

  Engine stream = make_stream(options.seed, "patch-token-map");
  map_ = standard_normal(options.token_dim, options.cells * options.cells * options.channels, stream);
  bias_ = standard_normal(options.token_dim, 1, stream).col(0);
  descriptor_ = {"toy-patch", options.token_dim, res, kImageRange};
  descriptor_.validate();
}

Image ToyPatchEncoder::prepare(const Image& image) const {
  validate_image(image, options_.channels);
  Image resized = resize_bilinear(image, options_.input_resolution);
  const auto [scale, offset] = range_map(kImageRange, descriptor_.value_range);
  if (scale != 1.0 || offset != 0.0) resized.pixels = (resized.pixels.array() * scale + offset).matrix();
  return resized;
}

Eigen::MatrixXd ToyPatchEncoder::pooled(const Image& resized) const {
  const int ps = options_.patch_size;
  const int cells = options_.cells;
  const int cell = ps / cells;
  const int ch = options_.channels;
  const double inv = 1.0 / (cell * cell);
  Eigen::MatrixXd features = Eigen::MatrixXd::Zero(positions(), cells * cells * ch);
  for (int py = 0; py < grid_height(); ++py) {
    for (int px = 0; px < grid_width(); ++px) {
      const Eigen::Index p = Eigen::Index(py) * grid_width() + px;
      for (int y = 0; y < ps; ++y) {
        for (int x = 0; x < ps; ++x) {
          const int f0 = ((y / cell) * cells + (x / cell)) * ch;
          for (int c = 0; c < ch; ++c) features(p, f0 + c) += resized.at(py * ps + y, px * ps + x, c) * inv;
        }
      }
    }
  }
  return features;
}

Eigen::MatrixXd ToyPatchEncoder::raw_tokens(const Image& resized) const {
  Eigen::MatrixXd raw = pooled(resized) * map_.transpose();
  raw.rowwise() += bias_.transpose();
  if (options_.centering > 0.0) {
    const Eigen::RowVectorXd mean = raw.colwise().mean();
    raw.rowwise() -= options_.centering * mean;
  }
  return raw;
}

PatchTokenGrid ToyPatchEncoder::encode_patches(const Image& image) const {
  const Eigen::MatrixXd raw = raw_tokens(prepare(image));
  PatchTokenGrid grid{Eigen::MatrixXd(raw.rows(), raw.cols()), grid_height(), grid_width()};
  for (Eigen::Index p = 0; p < raw.rows(); ++p) {
    const double norm = raw.row(p).norm();
    if (!(norm > 0.0)) throw InvalidInputError("patch " + std::to_string(p) + " maps to a zero token");
    grid.tokens.row(p) = raw.row(p) / norm;
  }
  return grid;
}

Image ToyPatchEncoder::encode_patches_vjp(const Image& image, const Eigen::MatrixXd& upstream) const {
  if (upstream.rows() != positions() || upstream.cols() != options_.token_dim) {
    throw ShapeError("upstream token gradient has wrong shape");
  }
  const Image resized = prepare(image);
  const Eigen::MatrixXd raw = raw_tokens(resized);

  Eigen::MatrixXd d_raw(raw.rows(), raw.cols());
  for (Eigen::Index p = 0; p < raw.rows(); ++p) {
    d_raw.row(p) = normalize_vjp(raw.row(p).transpose(), upstream.row(p).transpose()).transpose();
  }
  if (options_.centering > 0.0) {
    const Eigen::RowVectorXd mean = d_raw.colwise().mean();  // I - c·11ᵀ/P is symmetric
    d_raw.rowwise() -= options_.centering * mean;
  }
  const Eigen::MatrixXd d_features = d_raw * map_;

  const int ps = options_.patch_size;
  const int cells = options_.cells;
  const int cell = ps / cells;
  const int ch = options_.channels;
  const double scale = range_map(kImageRange, descriptor_.value_range).first / (cell * cell);
  Image d_resized(resized.height, resized.width, ch);
  for (int py = 0; py < grid_height(); ++py) {
    for (int px = 0; px < grid_width(); ++px) {
      const Eigen::Index p = Eigen::Index(py) * grid_width() + px;
      for (int y = 0; y < ps; ++y) {
        for (int x = 0; x < ps; ++x) {
          const int f0 = ((y / cell) * cells + (x / cell)) * ch;
          for (int c = 0; c < ch; ++c) d_resized.at(py * ps + y, px * ps + x, c) = d_features(p, f0 + c) * scale;
        }
      }
    }
  }
  if (image.resolution() == options_.input_resolution) return d_resized;
  const auto op = bilinear_resize_operator(image.resolution(), options_.input_resolution, ch);
  return Image(image.height, image.width, ch, op.transpose() * d_resized.pixels);
}

// ---------------------------------------------------------------------------
// Registry

namespace {

struct Registry {
  std::mutex mutex;
  std::map<std::string, SemanticEncoderFactory> semantic;
  std::map<std::string, PatchEncoderFactory> patch;
};

Registry& registry() {
  static Registry r;
  return r;
}

std::shared_ptr<const SemanticEncoder> make_toy_semantic(const SemanticEncoderSpec& spec) {
  ToySemanticEncoder::Options options;
  options.seed = spec.seed;
  return std::make_shared<ToySemanticEncoder>(options);
}

std::shared_ptr<const PatchEncoder> make_toy_patch(const PatchEncoderSpec& spec) {
  if (spec.layer != "output") throw InvalidInputError("toy patch encoder only exposes 'output' tokens");
  ToyPatchEncoder::Options options;
  options.seed = spec.seed;
  options.patch_size = spec.patch_size;
  return std::make_shared<ToyPatchEncoder>(options);
}

}  // namespace

void register_semantic_encoder(const std::string& name, SemanticEncoderFactory factory) {
  std::lock_guard lock(registry().mutex);
  registry().semantic[name] = factory;
}

void register_patch_encoder(const std::string& name, PatchEncoderFactory factory) {
  std::lock_guard lock(registry().mutex);
  registry().patch[name] = factory;
}

std::shared_ptr<const SemanticEncoder> make_semantic_encoder(const SemanticEncoderSpec& spec) {
  if (spec.name == "toy") return make_toy_semantic(spec);
  SemanticEncoderFactory factory = nullptr;
  {
    std::lock_guard lock(registry().mutex);
    if (auto it = registry().semantic.find(spec.name); it != registry().semantic.end()) factory = it->second;
  }
  if (factory == nullptr) throw InvalidInputError("no semantic encoder adapter registered under '" + spec.name + "'");
  return factory(spec);
}

std::shared_ptr<const PatchEncoder> make_patch_encoder(const PatchEncoderSpec& spec) {
  if (spec.name == "toy") return make_toy_patch(spec);
  PatchEncoderFactory factory = nullptr;
  {
    std::lock_guard lock(registry().mutex);
    if (auto it = registry().patch.find(spec.name); it != registry().patch.end()) factory = it->second;
  }
  if (factory == nullptr) throw InvalidInputError("no patch encoder adapter registered under '" + spec.name + "'");
  return factory(spec);
}

}  // namespace hybridgen
