#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rick/tensor.hpp"

namespace rick {

// lr(iter) = 0.5 * lr0 * (1 + cos(pi * iter / total)), floored at 0.
struct CosineSchedule {
  double lr0 = 0.002;
  long total_iters = 1;
  double lr(long iter) const;
};

// Maps a contiguous slice of one parameter tensor to a mask slot. Spans
// must partition the full parameter set; several spans may share a slot
// (a filter owns its weight row and its bias element).
struct ParamSpan {
  int param;          // index into the optimizer's parameter list
  std::size_t offset;
  std::size_t length;
  int mask_index;
};

// Adam over a list of parameter tensors with per-filter update masking.
// Masked-off spans are left untouched, moments included.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, std::vector<ParamSpan> spans,
                double lr0, long total_iters);

  // mask[i] != 0 means spans with mask_index i are updated this step.
  // An empty mask updates everything.
  void step(long iter, std::span<const std::uint8_t> mask);

  void zero_grad();
  void zero_moments(int mask_index);

  long step_count() const { return step_; }
  const CosineSchedule& schedule() const { return schedule_; }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }

 private:
  std::vector<Tensor> params_;
  std::vector<ParamSpan> spans_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  CosineSchedule schedule_;
  long step_ = 0;
  double beta1_ = 0.5;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
};

}  // namespace rick
