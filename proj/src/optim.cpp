#include "rick/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace rick {

double CosineSchedule::lr(long iter) const {
  if (iter >= total_iters) return 0.0;
  if (iter < 0) iter = 0;
  const double phase = 3.14159265358979323846 * static_cast<double>(iter) /
                       static_cast<double>(total_iters);
  return 0.5 * lr0 * (1.0 + std::cos(phase));
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params,
                             std::vector<ParamSpan> spans, double lr0,
                             long total_iters)
    : params_(std::move(params)), spans_(std::move(spans)) {
  schedule_.lr0 = lr0;
  schedule_.total_iters = total_iters;
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].data().size(), 0.0);
    v_[i].assign(params_[i].data().size(), 0.0);
  }
  for (const ParamSpan& s : spans_) {
    if (s.param < 0 || s.param >= static_cast<int>(params_.size()) ||
        s.offset + s.length > params_[s.param].data().size())
      throw std::invalid_argument("parameter span out of range");
  }
}

void AdamOptimizer::step(long iter, std::span<const std::uint8_t> mask) {
  ++step_;
  const double lr = schedule_.lr(iter);
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (const ParamSpan& s : spans_) {
    if (!mask.empty()) {
      if (s.mask_index < 0 || s.mask_index >= static_cast<int>(mask.size()))
        throw std::invalid_argument("update mask shorter than span table");
      if (!mask[s.mask_index]) continue;
    }
    Tensor& p = params_[s.param];
    auto& pv = p.data();
    const auto& g = p.grad();  // throws if gradients were never populated
    auto& m = m_[s.param];
    auto& v = v_[s.param];
    for (std::size_t i = s.offset; i < s.offset + s.length; ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      pv[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void AdamOptimizer::zero_moments(int mask_index) {
  for (const ParamSpan& s : spans_) {
    if (s.mask_index != mask_index) continue;
    auto& m = m_[s.param];
    auto& v = v_[s.param];
    for (std::size_t i = s.offset; i < s.offset + s.length; ++i) {
      m[i] = 0.0;
      v[i] = 0.0;
    }
  }
}

}  // namespace rick
