#include "hybridgen/cli.hpp"

#include "detail/binary_io.hpp"
#include "hybridgen/config.hpp"
#include "hybridgen/digest.hpp"
#include "hybridgen/directions.hpp"
#include "hybridgen/errors.hpp"
#include "hybridgen/image_io.hpp"
#include "hybridgen/metrics.hpp"
#include "hybridgen/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <optional>

namespace hybridgen::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

class OutputExistsError : public Error {
 public:
  using Error::Error;
};

// Exclusive lock file; creation fails if another process holds it.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& directory) : path_(directory / kLockName) {
    fs::create_directories(directory);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr) {
      throw IoError("output directory is locked by another run (" + path_.string() + " exists)");
    }
    std::fputs("locked\n", f);
    std::fclose(f);
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

void refuse_existing(const std::vector<fs::path>& paths, bool force) {
  if (force) return;
  for (const auto& p : paths) {
    if (fs::exists(p)) throw OutputExistsError("refusing to overwrite " + p.string() + " (pass --force)");
  }
}

fs::path run_directory(const AdaptationConfig& config) { return config.resolve(config.output_directory); }

// Rewrites manifest.json with an inventory of everything currently in the
// run directory.
void write_manifest(const fs::path& directory, const AdaptationConfig& config, const std::string& command,
                    const std::string& started_at) {
  nlohmann::json files = nlohmann::json::array();
  std::vector<fs::path> entries;
  for (const auto& entry : fs::recursive_directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), directory);
    const std::string name = rel.generic_string();
    if (name == kManifestName || name == kLockName || name.find(".tmp") != std::string::npos) continue;
    entries.push_back(rel);
  }
  std::sort(entries.begin(), entries.end());
  for (const auto& rel : entries) {
    const auto bytes = detail::read_file(directory / rel);
    files.push_back({{"path", rel.generic_string()}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}});
  }
  const nlohmann::json manifest = {{"config_fingerprint", config_fingerprint(config)},
                                   {"toolkit_version", std::string(kVersion)},
                                   {"command", command},
                                   {"started_at", started_at},
                                   {"finished_at", utc_timestamp()},
                                   {"files", files}};
  detail::write_file_atomic(directory / kManifestName, manifest.dump(2) + "\n");
}

fs::path checkpoint_or_default(const AdaptationConfig& config, const std::string& flag) {
  const fs::path path = flag.empty() ? run_directory(config) / kTargetCheckpointName : fs::path(flag);
  if (!fs::exists(path)) throw IoError("checkpoint not found: " + path.string());
  return path;
}

int cmd_adapt(const std::string& config_path, bool force, std::ostream& out) {
  const std::string started = utc_timestamp();
  const AdaptationConfig config = load_config(config_path);
  const fs::path dir = run_directory(config);
  DirectoryLock lock(dir);
  refuse_existing({dir / kConfigCopyName, dir / kTargetCheckpointName, dir / kTrainLogName}, force);
  fs::path incomplete = dir / kTrainLogName;
  incomplete += kIncompleteSuffix;
  fs::remove(incomplete);

  detail::write_file_atomic(dir / kConfigCopyName, config_to_json(config));
  const RunResult result = run(config, dir);
  write_manifest(dir, config, "adapt", started);

  const TrainingLogRecord& last = result.log.back();
  out << "adapted " << result.log.size() << " iterations; final loss_overall=" << format_double(last.loss_overall)
      << " sample_shift_cosine=" << format_double(last.sample_shift_cosine) << "\n";
  out << "checkpoint: " << result.checkpoint.string() << "\n";
  return ok;
}

int cmd_compose(const std::string& config_path, const std::string& out_flag, const std::string& grid_flag, bool sweep,
                bool force, std::ostream& out) {
  const std::string started = utc_timestamp();
  const AdaptationConfig config = load_config(config_path);
  std::vector<double> grid(kDefaultSweepGrid.begin(), kDefaultSweepGrid.end());
  if (!grid_flag.empty()) {
    try {
      grid = parse_grid(grid_flag);
    } catch (const InvalidInputError& e) {
      throw UsageError(std::string("--grid: ") + e.what());
    }
    sweep = true;
  }
  if (sweep && config.domains.size() != 2) {
    throw UsageError("sweep mode needs exactly two domains, config has " + std::to_string(config.domains.size()));
  }

  const fs::path dir = run_directory(config);
  const fs::path target = out_flag.empty() ? dir / kDirectionsName : fs::path(out_flag);
  const fs::path target_dir = target.has_parent_path() ? target.parent_path() : fs::path(".");
  DirectoryLock lock(target_dir);
  refuse_existing({target}, force);

  const auto semantic = make_semantic_encoder(config.semantic_encoder);
  const GeneratorHandle source = build_source_generator(config);
  const DomainSetup setup = prepare_domains(config, source, *semantic);
  const std::vector<DirectionVector> directions =
      sweep ? interpolation_sweep(setup.shifts[0], setup.shifts[1], grid) : std::vector{setup.composed};
  for (std::size_t k = 0; k < directions.size(); ++k) {
    if (!(directions[k].values.norm() > kDegenerateDirectionNorm)) {
      throw DegenerateDomainError("direction " + std::to_string(k) + " is degenerate (norm <= 1e-6)");
    }
  }
  write_directions(target, directions);
  std::error_code ec;
  if (fs::equivalent(target_dir, dir, ec)) write_manifest(dir, config, "compose", started);
  out << "wrote " << directions.size() << " direction(s) of dim " << directions.front().dim() << " to "
      << target.string() << "\n";
  return ok;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_flag, bool force, std::ostream& out) {
  const std::string started = utc_timestamp();
  const AdaptationConfig config = load_config(config_path);
  const fs::path checkpoint = checkpoint_or_default(config, checkpoint_flag);
  const fs::path dir = run_directory(config);
  DirectoryLock lock(dir);
  refuse_existing({dir / kMetricsReportName}, force);

  const MetricsReport report = evaluate(config, load_checkpoint(checkpoint));
  detail::write_file_atomic(dir / kMetricsReportName, report.to_text());
  write_manifest(dir, config, "eval", started);
  out << report.to_table();
  return ok;
}

int cmd_sample(const std::string& config_path, const std::string& checkpoint_flag, int count, bool has_seed,
               std::uint64_t seed, bool force, std::ostream& out) {
  const std::string started = utc_timestamp();
  const AdaptationConfig config = load_config(config_path);
  const fs::path checkpoint = checkpoint_or_default(config, checkpoint_flag);
  const fs::path dir = run_directory(config);
  const fs::path samples = dir / kSamplesDirName;
  DirectoryLock lock(dir);
  if (fs::exists(samples) && !fs::is_empty(samples)) {
    if (!force) throw OutputExistsError("refusing to overwrite " + samples.string() + " (pass --force)");
    fs::remove_all(samples);
  }
  fs::create_directories(samples);

  const GeneratorHandle source = build_source_generator(config);
  const GeneratorHandle target = load_checkpoint(checkpoint);
  if (source.architecture_id() != target.architecture_id()) {
    throw InvalidInputError("checkpoint architecture '" + target.architecture_id() + "' does not match the source '" +
                            source.architecture_id() + "'");
  }
  const NoiseBatch noise = NoiseBatch::sample(count, source.architecture().noise_dim(), has_seed ? seed : config.seed);
  const std::vector<Image> from_source = generate(source, noise);
  const std::vector<Image> from_target = generate(target, noise);
  for (int i = 0; i < count; ++i) {
    const std::vector<Image> pair{from_source[i], from_target[i]};
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%03d.ppm", i);
    write_image(samples / name, concat_horizontal(pair));
  }
  write_manifest(dir, config, "sample", started);
  out << "wrote " << count << " source|target pairs to " << samples.string() << "\n";
  return ok;
}

}  // namespace

std::vector<double> parse_grid(std::string_view text) {
  std::vector<double> values;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    std::string_view item = text.substr(start, comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    double v = 0.0;
    const auto r = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || r.ec != std::errc() || r.ptr != item.data() + item.size() || !std::isfinite(v)) {
      throw InvalidInputError("malformed grid value '" + std::string(item) + "'");
    }
    values.push_back(v);
    start = comma + 1;
  }
  return values;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-domain hybrid generator adaptation toolkit", "hybridgen"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  std::string config_path;
  std::string checkpoint;
  std::string out_path;
  std::string grid;
  bool sweep = false;
  bool force = false;
  int count = 8;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "Experiment config (JSON)")->required();
    sub->add_flag("--force", force, "Overwrite existing outputs");
  };
  CLI::App* adapt = app.add_subcommand("adapt", "Adapt the source generator to the configured hybrid domain");
  add_common(adapt);
  CLI::App* compose = app.add_subcommand("compose", "Write the composed direction or a two-domain sweep (UHDV)");
  add_common(compose);
  compose->add_option("--out", out_path, "Output file (default <output>/directions.uhdv)");
  compose->add_option("--grid", grid, "Comma-separated sweep coefficients; implies --sweep");
  compose->add_flag("--sweep", sweep, "Interpolate between the two domains on the default grid");
  CLI::App* eval = app.add_subcommand("eval", "Compute CS-T / CS-I / CS / SCS for a checkpoint");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "Target checkpoint (default <output>/target.uhgc)");
  CLI::App* sample = app.add_subcommand("sample", "Write source|target sample pairs generated from shared noise");
  add_common(sample);
  sample->add_option("--checkpoint", checkpoint, "Target checkpoint (default <output>/target.uhgc)");
  sample->add_option("--count", count, "Number of pairs")->check(CLI::PositiveNumber);
  CLI::Option* seed_option = sample->add_option("--seed", seed, "Noise seed (default: config seed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage;
  }

  try {
    if (adapt->parsed()) return cmd_adapt(config_path, force, out);
    if (compose->parsed()) return cmd_compose(config_path, out_path, grid, sweep, force, out);
    if (eval->parsed()) return cmd_eval(config_path, checkpoint, force, out);
    if (sample->parsed()) {
      return cmd_sample(config_path, checkpoint, count, seed_option->count() > 0, seed, force, out);
    }
  } catch (const ConfigError& e) {
    err << "error: invalid config: " << e.what() << "\n";
    return usage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return usage;
  } catch (const TrainingDivergedError& e) {
    err << "error: training diverged at iteration " << e.iteration() << ": " << e.what() << "\n";
    return failure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return failure;
  }
  return usage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"hybridgen"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace hybridgen::cli
