#pragma once

#include <vector>

#include "rick/models.hpp"
#include "rick/optim.hpp"
#include "rick/tensor.hpp"

namespace rick {

// Row-major sample matrix; each row is one data point (a 2-D point or a
// flattened 8x8 icon).
struct Dataset {
  int dim = 0;
  std::vector<double> values;  // n * dim
  int count() const {
    return dim == 0 ? 0 : static_cast<int>(values.size()) / dim;
  }
  std::vector<double> row(int i) const {
    return {values.begin() + static_cast<std::size_t>(i) * dim,
            values.begin() + static_cast<std::size_t>(i + 1) * dim};
  }
  void push(const std::vector<double>& v) {
    values.insert(values.end(), v.begin(), v.end());
  }
};

constexpr double kProbClamp = 1e-7;

// -mean(log d_real) - mean(log(1 - d_fake)); inputs are clamped to
// [1e-7, 1 - 1e-7] before the logs.
Tensor d_loss(Graph& g, Tensor d_real, Tensor d_fake);

// Non-saturating generator loss -mean(log d_fake); the saturating form
// mean(log(1 - d_fake)) is available for ablation.
Tensor g_loss(Graph& g, Tensor d_fake, bool saturating = false);

// Draws a k-shot real batch: without replacement while the batch fits,
// with replacement once batch_size exceeds the dataset.
Tensor sample_real_batch(const Dataset& data, int batch_size, Rng& rng);

// Elementwise EWC penalty weights and anchors, aligned with net_params()
// order for one network.
struct EwcTerm {
  double lambda = 0.0;
  std::vector<Tensor> fisher;  // constants
  std::vector<Tensor> anchor;  // source parameter snapshot, constants
};

// One discriminator update through d_loss with the generator detached.
// Returns the loss value. `iter` indexes the LR schedule.
double train_step_d(Graph& g, GanPair& gan, const Dataset& data,
                    int batch_size, AdamOptimizer& opt_d,
                    std::span<const std::uint8_t> d_mask, long iter, Rng& rng,
                    const EwcTerm* ewc = nullptr,
                    const std::vector<Tensor>* mod_g = nullptr,
                    const std::vector<Tensor>* mod_d = nullptr,
                    AdamOptimizer* opt_mod = nullptr,
                    std::span<const std::uint8_t> mod_mask = {});

// One generator update through g_loss with the discriminator detached
// (D gradients are discarded, its parameters and moments untouched).
double train_step_g(Graph& g, GanPair& gan, int batch_size,
                    AdamOptimizer& opt_g, std::span<const std::uint8_t> g_mask,
                    long iter, Rng& rng, bool saturating = false,
                    const EwcTerm* ewc = nullptr,
                    const std::vector<Tensor>* mod_g = nullptr,
                    const std::vector<Tensor>* mod_d = nullptr,
                    AdamOptimizer* opt_mod = nullptr,
                    std::span<const std::uint8_t> mod_mask = {});

// Exactly n_warmup discriminator-only steps; the generator is untouched.
void warmup_d(Graph& g, GanPair& gan, const Dataset& data, int batch_size,
              AdamOptimizer& opt_d, std::span<const std::uint8_t> d_mask,
              long n_warmup, Rng& rng, long iter_offset = 0,
              const EwcTerm* ewc = nullptr);

// Forward pass without recording; returns generated samples as a plain
// row-major matrix [n x output_dim].
std::vector<double> generate_nograd(const GeneratorNet& gen, const Tensor& z);

}  // namespace rick
