#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string_view>

namespace hybridgen {

using Engine = std::mt19937_64;

/// 64-bit FNV-1a. Stable across platforms; used wherever a hash feeds into
/// persisted or seeded state.
constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL) {
  std::uint64_t h = basis;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Independent engine for a named substream of a run seed ("anchor",
/// "train-noise", "eval-noise", ...).
inline Engine make_stream(std::uint64_t seed, std::string_view name) {
  const std::uint64_t tag = fnv1a(name);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return Engine(seq);
}

/// rows×cols matrix of N(0, 1) draws, filled row by row.
inline Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Engine& engine) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = normal(engine);
  }
  return out;
}

}  // namespace hybridgen
