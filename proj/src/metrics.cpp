#include "hybridgen/metrics.hpp"

#include "hybridgen/directions.hpp"
#include "hybridgen/errors.hpp"
#include "hybridgen/image_io.hpp"
#include "hybridgen/trainer.hpp"

#include <charconv>
#include <iomanip>
#include <sstream>
#include <vector>

namespace hybridgen {

namespace {

std::vector<EmbeddingVector> embed_all(std::span<const Image> images, const SemanticEncoder& encoder) {
  std::vector<EmbeddingVector> out;
  out.reserve(images.size());
  for (const Image& image : images) out.push_back(encoder.embed_image(image));
  return out;
}

// Row-normalized tokens; zero rows stay zero.
Eigen::MatrixXd unit_rows(const Eigen::MatrixXd& tokens) {
  Eigen::MatrixXd out = tokens;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n > 0.0) out.row(i) /= n;
  }
  return out;
}

}  // namespace

double cs_text(std::string_view prompt, std::span<const Image> generated, const SemanticEncoder& encoder) {
  if (generated.empty()) throw InvalidInputError("cs_text: empty image set");
  const EmbeddingVector text = encoder.embed_text(prompt);
  double total = 0.0;
  for (const Image& image : generated) total += cosine_similarity(text.values, encoder.embed_image(image).values);
  return total / static_cast<double>(generated.size());
}

double mean_cross_cosine(std::span<const EmbeddingVector> a, std::span<const EmbeddingVector> b) {
  if (a.empty() || b.empty()) throw InvalidInputError("cs_image: empty image set");
  double total = 0.0;
  for (const auto& x : a) {
    for (const auto& y : b) total += cosine_similarity(x.values, y.values);
  }
  return total / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

double cs_image(std::span<const Image> references, std::span<const Image> generated, const SemanticEncoder& encoder) {
  if (references.empty() || generated.empty()) throw InvalidInputError("cs_image: empty image set");
  return mean_cross_cosine(embed_all(references, encoder), embed_all(generated, encoder));
}

double structural_consistency(const PatchTokenGrid& source, const PatchTokenGrid& target) {
  if (source.positions() != target.positions()) throw InvalidInputError("scs: token grids differ in position count");
  if (source.positions() == 0) throw InvalidInputError("scs: empty token grid");
  const Eigen::MatrixXd s = unit_rows(source.tokens);
  const Eigen::MatrixXd t = unit_rows(target.tokens);
  const Eigen::MatrixXd self_s = s * s.transpose();
  const Eigen::MatrixXd self_t = t * t.transpose();
  double total = 0.0;
  for (Eigen::Index i = 0; i < self_s.rows(); ++i) total += cosine_similarity(self_s.row(i), self_t.row(i));
  return total / static_cast<double>(self_s.rows());
}

double scs(std::span<const Image> source_images, std::span<const Image> target_images, const PatchEncoder& encoder) {
  if (source_images.size() != target_images.size()) throw InvalidInputError("scs: image lists differ in length");
  if (source_images.empty()) throw InvalidInputError("scs: empty image lists");
  double total = 0.0;
  for (std::size_t i = 0; i < source_images.size(); ++i) {
    total += structural_consistency(encoder.encode_patches(source_images[i]), encoder.encode_patches(target_images[i]));
  }
  return total / static_cast<double>(source_images.size());
}

// ---------------------------------------------------------------------------
// Report

void MetricsReport::combine() {
  if (cs_t && cs_i) {
    cs = (*cs_t + *cs_i) / 2.0;
  } else {
    cs.reset();
  }
}

std::string MetricsReport::to_text() const {
  std::string text = "# metrics report; scs is the " + std::string(kScsLabel) + "\n";
  text += "config_fingerprint=" + config_fingerprint + "\n";
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) text += std::string(key) + "=" + format_double(*v) + "\n";
  };
  put("cs_t", cs_t);
  put("cs_i", cs_i);
  put("cs", cs);
  put("scs", scs);
  text += "generated_samples=" + std::to_string(generated_samples) + "\n";
  text += "reference_images=" + std::to_string(reference_images) + "\n";
  text += "text_prompts=" + std::to_string(text_prompts) + "\n";
  return text;
}

MetricsReport MetricsReport::parse(std::string_view text) {
  MetricsReport report;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidInputError("metrics report: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    auto number = [&](auto& out) {
      const auto r = std::from_chars(value.data(), value.data() + value.size(), out);
      if (r.ec != std::errc() || r.ptr != value.data() + value.size()) {
        throw InvalidInputError("metrics report: bad value for '" + key + "'");
      }
    };
    auto optional = [&](std::optional<double>& out) {
      double v = 0.0;
      number(v);
      out = v;
    };
    if (key == "config_fingerprint") {
      report.config_fingerprint = value;
    } else if (key == "cs_t") {
      optional(report.cs_t);
    } else if (key == "cs_i") {
      optional(report.cs_i);
    } else if (key == "cs") {
      optional(report.cs);
    } else if (key == "scs") {
      optional(report.scs);
    } else if (key == "generated_samples") {
      number(report.generated_samples);
    } else if (key == "reference_images") {
      number(report.reference_images);
    } else if (key == "text_prompts") {
      number(report.text_prompts);
    } else {
      throw InvalidInputError("metrics report: unknown key '" + key + "'");
    }
  }
  return report;
}

std::string MetricsReport::to_table() const {
  std::ostringstream out;
  auto cell = [&](const std::optional<double>& v) {
    if (v) {
      out << std::right << std::setw(10) << std::fixed << std::setprecision(4) << *v;
    } else {
      out << std::right << std::setw(10) << "-";
    }
  };
  out << std::right << std::setw(10) << "CS-T" << std::setw(10) << "CS-I" << std::setw(10) << "CS" << std::setw(10)
      << "SCS" << "\n";
  cell(cs_t);
  cell(cs_i);
  cell(cs);
  cell(scs);
  out << "\n";
  out << "SCS: " << kScsLabel << "; " << generated_samples << " samples, " << reference_images
      << " reference images, " << text_prompts << " prompts\n";
  return out.str();
}

MetricsReport evaluate(const AdaptationConfig& config, const GeneratorHandle& target) {
  config.validate();
  const GeneratorHandle source = build_source_generator(config);
  if (source.architecture_id() != target.architecture_id()) {
    throw InvalidInputError("evaluate: target architecture '" + target.architecture_id() +
                            "' does not match the source '" + source.architecture_id() + "'");
  }
  const auto semantic = make_semantic_encoder(config.semantic_encoder);
  const auto patch = make_patch_encoder(config.patch_encoder);

  Engine stream = make_stream(config.seed, "eval-noise");
  const NoiseBatch noise = NoiseBatch::sample(config.eval_sample_count, source.architecture().noise_dim(), stream);
  const std::vector<Image> source_images = generate(source, noise);
  const std::vector<Image> target_images = generate(target, noise);
  const std::vector<EmbeddingVector> target_embeddings = embed_all(target_images, *semantic);

  MetricsReport report;
  report.config_fingerprint = config_fingerprint(config);
  report.generated_samples = config.eval_sample_count;

  double text_total = 0.0;
  double image_total = 0.0;
  for (const DomainReference& d : config.domains) {
    if (d.modality == Modality::text) {
      text_total += cs_text(d.payload, target_images, *semantic);
      ++report.text_prompts;
    } else {
      const EmbeddingVector ref = semantic->embed_image(read_image(config.resolve(d.payload)));
      image_total += mean_cross_cosine(std::span(&ref, 1), target_embeddings);
      ++report.reference_images;
    }
  }
  if (report.text_prompts > 0) report.cs_t = text_total / report.text_prompts;
  if (report.reference_images > 0) report.cs_i = image_total / report.reference_images;
  report.combine();
  report.scs = scs(source_images, target_images, *patch);
  return report;
}

}  // namespace hybridgen
