#pragma once

#include "hybridgen/config.hpp"
#include "hybridgen/css.hpp"
#include "hybridgen/directions.hpp"
#include "hybridgen/encoders.hpp"
#include "hybridgen/generators.hpp"
#include "hybridgen/rng.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hybridgen {

struct AdamOptions {
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam without weight decay.
class Adam {
 public:
  Adam(Eigen::Index size, const AdamOptions& options);

  /// Consumes one gradient and returns the parameter delta to add.
  Eigen::VectorXd step(const Eigen::VectorXd& gradient);

  std::int64_t steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }

 private:
  AdamOptions options_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::int64_t steps_ = 0;
};

struct TrainingLogRecord {
  std::int64_t iteration = 0;
  double loss_direct = 0.0;
  double loss_css = 0.0;
  double loss_overall = 0.0;
  double sample_shift_cosine = 0.0;  // cosine(batch-mean sample shift, domain direction)
  std::int64_t wall_time_ms = 0;

  /// "iteration=<i> loss_direct=<x> loss_css=<x> loss_overall=<x>
  /// sample_shift_cosine=<x>", shortest round-trip decimal floats. Wall time
  /// is kept out of the log so reruns stay byte-identical.
  std::string to_log_line() const;
  static TrainingLogRecord parse_log_line(std::string_view line);
};

/// Losses and target-parameter gradient for one noise batch.
struct ObjectiveValue {
  double loss_direct = 0.0;  // mean of per-sample direction losses
  double loss_css = 0.0;     // mean of per-sample structure losses
  double loss_overall = 0.0;
  double sample_shift_cosine = 0.0;
  Eigen::VectorXd gradient;  // empty unless requested
};

struct AlignmentSummary {
  double mean_sample_shift_cosine = 0.0;    // mean over samples of cosine(shift_b, domain direction)
  double mean_positional_token_cosine = 0.0;  // mean over samples and positions of cosine(target_i, source_i)
};

struct AdaptationState {
  AdaptationConfig config;
  std::shared_ptr<const SemanticEncoder> semantic_encoder;
  std::shared_ptr<const PatchEncoder> patch_encoder;
  GeneratorHandle source;
  GeneratorHandle target;
  SourceAnchor anchor;
  std::vector<DirectionVector> domain_shifts;  // one per config domain, unweighted
  DirectionVector domain_direction;            // coefficient-weighted composition
  Engine train_noise;
  Adam optimizer;
  std::int64_t iteration = 0;
  double initial_loss = 0.0;
  int blowup_streak = 0;

  /// SHA-256 over parameters, anchor, directions, optimizer step and RNG state.
  std::string fingerprint() const;
};

/// Anchor, per-domain shifts and their coefficient-weighted composition.
struct DomainSetup {
  SourceAnchor anchor;
  std::vector<DirectionVector> shifts;
  DirectionVector composed;
};

/// Anchor from the "anchor" substream, then one shift per domain. Does not
/// check the composition for degeneracy.
DomainSetup prepare_domains(const AdaptationConfig& config, const GeneratorHandle& source,
                            const SemanticEncoder& encoder);

/// Builds encoders and generators, the source anchor and the composed domain
/// direction. Throws DegenerateDomainError if the composition is ~zero.
AdaptationState prepare(const AdaptationConfig& config);

ObjectiveValue evaluate_objective(const AdaptationState& state, const Eigen::VectorXd& target_parameters,
                                  const NoiseBatch& noise, bool with_gradient = true);

/// Draws a fresh noise batch, logs the losses at the current parameters and
/// applies one Adam update to the target. Throws TrainingDivergedError on a
/// non-finite loss or update, or a sustained blow-up (loss > 10× initial for 20 steps).
TrainingLogRecord train_step(AdaptationState& state);

AlignmentSummary measure_alignment(const AdaptationState& state, const NoiseBatch& noise);

struct RunResult {
  std::vector<TrainingLogRecord> log;
  std::filesystem::path checkpoint;
  std::filesystem::path log_file;
  std::filesystem::path timing_file;
};

inline constexpr std::string_view kTargetCheckpointName = "target.uhgc";
inline constexpr std::string_view kTrainLogName = "train.log";
inline constexpr std::string_view kTimingLogName = "train.timing";
inline constexpr std::string_view kIncompleteSuffix = ".incomplete";

/// prepare + `iterations` train steps; writes target.uhgc, train.log and
/// train.timing into output_directory. On failure the records so far are
/// written to train.log.incomplete and the error is rethrown.
RunResult run(const AdaptationConfig& config, const std::filesystem::path& output_directory);

std::string format_double(double value);

}  // namespace hybridgen
