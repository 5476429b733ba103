#pragma once

#include "hybridgen/encoders.hpp"
#include "hybridgen/errors.hpp"

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <vector>

namespace hybridgen {

enum class Reduction { sum_positions, mean_positions };

struct CssConfig {
  double temperature = 1.0;
  Reduction reduction = Reduction::mean_positions;

  void validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw InvalidInputError("css temperature must be > 0");
  }
};

/// Position-wise contrastive structure loss between a target and a source
/// token grid (rows are positions). For each position i the logits are
/// <t_i, s_j> / temperature over every source position j, and the loss is the
/// cross-entropy of picking j = i. Negatives come from the same grid only.
///
/// When grad_target / grad_source are given they receive dLoss/dTarget and
/// dLoss/dSource (same shape as the inputs).
template <typename DerivedT, typename DerivedS>
typename DerivedT::Scalar css_loss(const Eigen::MatrixBase<DerivedT>& target, const Eigen::MatrixBase<DerivedS>& source,
                                   const CssConfig& config = {},
                                   Eigen::Matrix<typename DerivedT::Scalar, Eigen::Dynamic, Eigen::Dynamic>* grad_target = nullptr,
                                   Eigen::Matrix<typename DerivedT::Scalar, Eigen::Dynamic, Eigen::Dynamic>* grad_source = nullptr) {
  using Scalar = typename DerivedT::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  config.validate();
  if (target.rows() != source.rows() || target.cols() != source.cols()) {
    throw ShapeError("css_loss: target and source grids differ in shape");
  }
  const Eigen::Index positions = target.rows();
  if (positions == 0) throw InvalidInputError("css_loss: grid has no positions");

  const Scalar inv_temp = Scalar(1) / Scalar(config.temperature);
  const Matrix logits = (target * source.transpose()) * inv_temp;
  const Vector row_max = logits.rowwise().maxCoeff();
  Matrix probs = (logits.colwise() - row_max).array().exp().matrix();
  const Vector row_sum = probs.rowwise().sum();
  const Vector lse = row_max + row_sum.array().log().matrix();

  const Scalar weight = config.reduction == Reduction::mean_positions ? Scalar(1) / Scalar(positions) : Scalar(1);
  const Scalar loss = (lse - logits.diagonal()).sum() * weight;

  if (grad_target != nullptr || grad_source != nullptr) {
    probs.array().colwise() /= row_sum.array();
    probs.diagonal().array() -= Scalar(1);  // dLoss_i/dlogit_ij = p_ij - [i == j]
    if (grad_target != nullptr) *grad_target = probs * source * (inv_temp * weight);
    if (grad_source != nullptr) *grad_source = probs.transpose() * target * (inv_temp * weight);
  }
  return loss;
}

inline double css_loss(const PatchTokenGrid& target, const PatchTokenGrid& source, const CssConfig& config = {}) {
  if (target.grid_height != source.grid_height || target.grid_width != source.grid_width) {
    throw ShapeError("css_loss: grid layouts differ");
  }
  return css_loss(target.tokens, source.tokens, config);
}

/// Mean of per-pair css_loss, accumulated in index order. When
/// grad_targets is given it receives one dLoss/dTarget per pair.
double css_batch_loss(std::span<const PatchTokenGrid> targets, std::span<const PatchTokenGrid> sources,
                      const CssConfig& config = {}, std::vector<Eigen::MatrixXd>* grad_targets = nullptr);

}  // namespace hybridgen
