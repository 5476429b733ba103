#include "hybridgen/css.hpp"

namespace hybridgen {

double css_batch_loss(std::span<const PatchTokenGrid> targets, std::span<const PatchTokenGrid> sources,
                      const CssConfig& config, std::vector<Eigen::MatrixXd>* grad_targets) {
  if (targets.size() != sources.size()) throw InvalidInputError("css_batch_loss: batch sizes differ");
  if (targets.empty()) throw InvalidInputError("css_batch_loss: empty batch");
  const double inv_batch = 1.0 / static_cast<double>(targets.size());
  if (grad_targets != nullptr) grad_targets->assign(targets.size(), Eigen::MatrixXd());

  double total = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    if (targets[k].grid_height != sources[k].grid_height || targets[k].grid_width != sources[k].grid_width) {
      throw ShapeError("css_batch_loss: grid layouts differ at index " + std::to_string(k));
    }
    if (grad_targets != nullptr) {
      total += css_loss(targets[k].tokens, sources[k].tokens, config, &(*grad_targets)[k]);
      (*grad_targets)[k] *= inv_batch;
    } else {
      total += css_loss(targets[k].tokens, sources[k].tokens, config);
    }
  }
  return total * inv_batch;
}

}  // namespace hybridgen
