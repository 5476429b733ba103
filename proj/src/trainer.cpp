#include "hybridgen/trainer.hpp"

#include "detail/binary_io.hpp"
#include "hybridgen/digest.hpp"
#include "hybridgen/errors.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <sstream>

namespace hybridgen {

std::string format_double(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(Eigen::Index size, const AdamOptions& options)
    : options_(options), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

Eigen::VectorXd Adam::step(const Eigen::VectorXd& gradient) {
  if (gradient.size() != m_.size()) throw ShapeError("Adam: gradient size does not match parameters");
  ++steps_;
  m_ = options_.beta1 * m_ + (1.0 - options_.beta1) * gradient;
  v_ = options_.beta2 * v_ + (1.0 - options_.beta2) * gradient.cwiseAbs2();
  const double m_scale = 1.0 / (1.0 - std::pow(options_.beta1, static_cast<double>(steps_)));
  const double v_scale = 1.0 / (1.0 - std::pow(options_.beta2, static_cast<double>(steps_)));
  return (-options_.learning_rate * (m_.array() * m_scale) / ((v_.array() * v_scale).sqrt() + options_.epsilon)).matrix();
}

// ---------------------------------------------------------------------------
// Log records

std::string TrainingLogRecord::to_log_line() const {
  return "iteration=" + std::to_string(iteration) + " loss_direct=" + format_double(loss_direct) +
         " loss_css=" + format_double(loss_css) + " loss_overall=" + format_double(loss_overall) +
         " sample_shift_cosine=" + format_double(sample_shift_cosine);
}

TrainingLogRecord TrainingLogRecord::parse_log_line(std::string_view line) {
  TrainingLogRecord record;
  int seen = 0;
  std::istringstream in{std::string(line)};
  std::string field;
  while (in >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw InvalidInputError("malformed log field '" + field + "'");
    const std::string key = field.substr(0, eq);
    const char* first = field.data() + eq + 1;
    const char* last = field.data() + field.size();
    auto parse = [&](auto& out) {
      const auto r = std::from_chars(first, last, out);
      if (r.ec != std::errc() || r.ptr != last) throw InvalidInputError("malformed value for '" + key + "'");
    };
    if (key == "iteration") {
      parse(record.iteration);
    } else if (key == "loss_direct") {
      parse(record.loss_direct);
    } else if (key == "loss_css") {
      parse(record.loss_css);
    } else if (key == "loss_overall") {
      parse(record.loss_overall);
    } else if (key == "sample_shift_cosine") {
      parse(record.sample_shift_cosine);
    } else if (key == "wall_time_ms") {
      parse(record.wall_time_ms);
      continue;
    } else {
      throw InvalidInputError("unknown log field '" + key + "'");
    }
    ++seen;
  }
  if (seen != 5) throw InvalidInputError("log line is missing fields");
  return record;
}

// ---------------------------------------------------------------------------
// State

std::string AdaptationState::fingerprint() const {
  detail::ByteWriter w;
  w.raw(config_fingerprint(config));
  w.raw(source.parameter_fingerprint());
  w.raw(target.parameter_fingerprint());
  auto put = [&](const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) w.u64(std::bit_cast<std::uint64_t>(v[i]));
  };
  put(anchor.mean_image_embedding.values);
  put(anchor.source_prompt_embedding.values);
  for (const auto& d : domain_shifts) put(d.values);
  put(domain_direction.values);
  w.u64(static_cast<std::uint64_t>(optimizer.steps()));
  w.u64(static_cast<std::uint64_t>(iteration));
  std::ostringstream engine_state;
  engine_state << train_noise;
  w.raw(engine_state.str());
  return sha256_hex(w.bytes());
}

DomainSetup prepare_domains(const AdaptationConfig& config, const GeneratorHandle& source,
                            const SemanticEncoder& encoder) {
  Engine anchor_stream = make_stream(config.seed, "anchor");
  DomainSetup setup;
  setup.anchor = compute_source_anchor(source, encoder, config.source.source_prompt, config.anchor_sample_count,
                                       anchor_stream());
  std::vector<WeightedDirection> weighted;
  for (const DomainReference& d : config.domains) {
    setup.shifts.push_back(domain_shift(d, encoder, setup.anchor, config.base_directory));
    weighted.push_back({setup.shifts.back(), d.coefficient});
  }
  setup.composed = compose_directions(weighted);
  return setup;
}

AdaptationState prepare(const AdaptationConfig& config) {
  config.validate();
  auto semantic = make_semantic_encoder(config.semantic_encoder);
  auto patch = make_patch_encoder(config.patch_encoder);
  GeneratorHandle source = build_source_generator(config);
  GeneratorHandle target = clone_as_target(source);

  DomainSetup domains = prepare_domains(config, source, *semantic);
  DirectionVector composed = std::move(domains.composed);
  if (!(composed.values.norm() > kDegenerateDirectionNorm)) {
    throw DegenerateDomainError("composed domain direction is degenerate (norm <= 1e-6); "
                                "check that references differ from the source");
  }

  const Eigen::Index params = target.parameters().size();
  AdamOptions adam;
  adam.learning_rate = config.learning_rate;
  return AdaptationState{config,
                         std::move(semantic),
                         std::move(patch),
                         std::move(source),
                         std::move(target),
                         std::move(domains.anchor),
                         std::move(domains.shifts),
                         std::move(composed),
                         make_stream(config.seed, "train-noise"),
                         Adam(params, adam)};
}

// ---------------------------------------------------------------------------
// Objective

ObjectiveValue evaluate_objective(const AdaptationState& state, const Eigen::VectorXd& target_parameters,
                                  const NoiseBatch& noise, bool with_gradient) {
  const GeneratorArchitecture& arch = state.target.architecture();
  if (target_parameters.size() != arch.parameter_count()) throw ShapeError("target parameter vector has wrong size");
  const Eigen::VectorXd source_parameters = state.source.parameters().cast<double>();
  const SemanticEncoder& semantic = *state.semantic_encoder;
  const PatchEncoder& patch = *state.patch_encoder;
  const Eigen::VectorXd& direction = state.domain_direction.values;
  const auto batch = static_cast<std::size_t>(noise.batch());
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const double lambda = state.config.lambda_css;

  std::vector<Eigen::VectorXd> latents(batch);
  std::vector<Image> target_images(batch);
  std::vector<Eigen::VectorXd> shift_gradients(batch);
  std::vector<PatchTokenGrid> target_tokens(batch);
  std::vector<PatchTokenGrid> source_tokens(batch);

  ObjectiveValue out;
  Eigen::VectorXd mean_shift = Eigen::VectorXd::Zero(direction.size());
  for (std::size_t b = 0; b < batch; ++b) {
    latents[b] = noise.values.row(static_cast<Eigen::Index>(b)).transpose();
    const Image source_image = arch.forward(source_parameters, latents[b]);
    target_images[b] = arch.forward(target_parameters, latents[b]);

    const Eigen::VectorXd shift =
        semantic.embed_image(target_images[b]).values - semantic.embed_image(source_image).values;
    out.loss_direct += direction_loss(shift, direction);
    if (with_gradient) shift_gradients[b] = direction_loss_gradient(shift, direction) * inv_batch;
    mean_shift += shift;

    target_tokens[b] = patch.encode_patches(target_images[b]);
    source_tokens[b] = patch.encode_patches(source_image);
  }
  out.loss_direct *= inv_batch;
  out.sample_shift_cosine = cosine_similarity(mean_shift, direction);

  std::vector<Eigen::MatrixXd> token_gradients;
  out.loss_css = css_batch_loss(target_tokens, source_tokens, state.config.css,
                                with_gradient && lambda > 0.0 ? &token_gradients : nullptr);
  out.loss_overall = out.loss_direct + lambda * out.loss_css;

  if (with_gradient) {
    out.gradient = Eigen::VectorXd::Zero(target_parameters.size());
    for (std::size_t b = 0; b < batch; ++b) {
      Image image_gradient = semantic.embed_image_vjp(target_images[b], shift_gradients[b]);
      if (lambda > 0.0) {
        image_gradient.pixels += lambda * patch.encode_patches_vjp(target_images[b], token_gradients[b]).pixels;
      }
      out.gradient += arch.backward(target_parameters, latents[b], image_gradient);
    }
  }
  return out;
}

TrainingLogRecord train_step(AdaptationState& state) {
  const auto start = std::chrono::steady_clock::now();
  const GeneratorArchitecture& arch = state.target.architecture();
  const NoiseBatch noise = NoiseBatch::sample(state.config.batch_size, arch.noise_dim(), state.train_noise,
                                              static_cast<std::uint64_t>(state.iteration));
  const Eigen::VectorXd params = state.target.parameters().cast<double>();
  ObjectiveValue objective = evaluate_objective(state, params, noise, true);

  if (!std::isfinite(objective.loss_overall) || !objective.gradient.allFinite()) {
    throw TrainingDivergedError("training diverged: non-finite loss at iteration " + std::to_string(state.iteration),
                                state.iteration);
  }
  if (state.iteration == 0) state.initial_loss = objective.loss_overall;
  state.blowup_streak = objective.loss_overall > 10.0 * state.initial_loss ? state.blowup_streak + 1 : 0;
  if (state.blowup_streak >= 20) {
    throw TrainingDivergedError("training diverged: loss above 10x its initial value for 20 steps at iteration " +
                                    std::to_string(state.iteration),
                                state.iteration);
  }

  const double clip = state.config.grad_clip;
  if (clip > 0.0) {
    const double norm = objective.gradient.norm();
    if (norm > clip) objective.gradient *= clip / norm;
  }
  Eigen::VectorXf updated = (params + state.optimizer.step(objective.gradient)).cast<float>();
  if (!updated.allFinite()) {
    throw TrainingDivergedError("training diverged: non-finite parameters after the update at iteration " +
                                    std::to_string(state.iteration),
                                state.iteration);
  }
  state.target.set_parameters(std::move(updated));

  TrainingLogRecord record;
  record.iteration = state.iteration++;
  record.loss_direct = objective.loss_direct;
  record.loss_css = objective.loss_css;
  record.loss_overall = objective.loss_overall;
  record.sample_shift_cosine = objective.sample_shift_cosine;
  record.wall_time_ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  return record;
}

AlignmentSummary measure_alignment(const AdaptationState& state, const NoiseBatch& noise) {
  const std::vector<Image> sources = generate(state.source, noise);
  const std::vector<Image> targets = generate(state.target, noise);
  AlignmentSummary summary;
  for (std::size_t b = 0; b < sources.size(); ++b) {
    const Eigen::VectorXd shift = state.semantic_encoder->embed_image(targets[b]).values -
                                  state.semantic_encoder->embed_image(sources[b]).values;
    summary.mean_sample_shift_cosine += cosine_similarity(shift, state.domain_direction.values);

    const PatchTokenGrid t = state.patch_encoder->encode_patches(targets[b]);
    const PatchTokenGrid s = state.patch_encoder->encode_patches(sources[b]);
    double positional = 0.0;
    for (Eigen::Index i = 0; i < t.positions(); ++i) positional += cosine_similarity(t.tokens.row(i), s.tokens.row(i));
    summary.mean_positional_token_cosine += positional / static_cast<double>(t.positions());
  }
  summary.mean_sample_shift_cosine /= static_cast<double>(sources.size());
  summary.mean_positional_token_cosine /= static_cast<double>(sources.size());
  return summary;
}

// ---------------------------------------------------------------------------
// Run

namespace {

std::string render_log(const std::vector<TrainingLogRecord>& records) {
  std::string text;
  for (const auto& r : records) text += r.to_log_line() + "\n";
  return text;
}

std::string render_timing(const std::vector<TrainingLogRecord>& records) {
  std::string text;
  for (const auto& r : records) {
    text += "iteration=" + std::to_string(r.iteration) + " wall_time_ms=" + std::to_string(r.wall_time_ms) + "\n";
  }
  return text;
}

}  // namespace

RunResult run(const AdaptationConfig& config, const std::filesystem::path& output_directory) {
  std::filesystem::create_directories(output_directory);
  RunResult result;
  result.checkpoint = output_directory / kTargetCheckpointName;
  result.log_file = output_directory / kTrainLogName;
  result.timing_file = output_directory / kTimingLogName;

  try {
    AdaptationState state = prepare(config);
    result.log.reserve(static_cast<std::size_t>(config.iterations));
    for (int i = 0; i < config.iterations; ++i) result.log.push_back(train_step(state));
    save_checkpoint(state.target, result.checkpoint);
  } catch (...) {
    std::filesystem::path partial = result.log_file;
    partial += kIncompleteSuffix;
    detail::write_file_atomic(partial, render_log(result.log));
    throw;
  }
  detail::write_file_atomic(result.log_file, render_log(result.log));
  detail::write_file_atomic(result.timing_file, render_timing(result.log));
  return result;
}

}  // namespace hybridgen
