#include "rick/adversarial.hpp"

#include <cmath>
#include <stdexcept>

namespace rick {

Tensor d_loss(Graph& g, Tensor d_real, Tensor d_fake) {
  if (d_real.size() != d_fake.size())
    throw std::invalid_argument("real/fake batch sizes must match");
  auto real_term = g.mean_all(g.log(g.clamp(d_real, kProbClamp, 1.0 - kProbClamp)));
  auto fake_term = g.mean_all(
      g.log(g.affine(g.clamp(d_fake, kProbClamp, 1.0 - kProbClamp), -1.0, 1.0)));
  return g.sub(g.affine(real_term, -1.0, 0.0), fake_term);
}

Tensor g_loss(Graph& g, Tensor d_fake, bool saturating) {
  auto clamped = g.clamp(d_fake, kProbClamp, 1.0 - kProbClamp);
  if (saturating)
    return g.mean_all(g.log(g.affine(clamped, -1.0, 1.0)));
  return g.affine(g.mean_all(g.log(clamped)), -1.0, 0.0);
}

Tensor sample_real_batch(const Dataset& data, int batch_size, Rng& rng) {
  if (data.count() == 0) throw std::invalid_argument("empty dataset");
  const int n = data.count();
  std::vector<int> idx(static_cast<std::size_t>(batch_size));
  if (batch_size <= n) {
    // partial Fisher-Yates over [0, n)
    std::vector<int> pool(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int i = 0; i < batch_size; ++i) {
      const int j = i + static_cast<int>(rng.next_below(
                            static_cast<std::uint64_t>(n - i)));
      std::swap(pool[i], pool[j]);
      idx[i] = pool[i];
    }
  } else {
    for (int i = 0; i < batch_size; ++i)
      idx[i] = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
  }
  Tensor batch({batch_size, data.dim});
  auto& bv = batch.data();
  for (int i = 0; i < batch_size; ++i)
    for (int j = 0; j < data.dim; ++j)
      bv[static_cast<std::size_t>(i) * data.dim + j] =
          data.values[static_cast<std::size_t>(idx[i]) * data.dim + j];
  return batch;
}

namespace {

// lambda * sum_i F_i (theta_i - anchor_i)^2 over one network's parameters.
Tensor ewc_penalty(Graph& g, std::vector<Tensor>& params, const EwcTerm& ewc) {
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto diff = g.sub(params[i], ewc.anchor[i]);
    auto term = g.sum_all(g.mul(ewc.fisher[i], g.mul(diff, diff)));
    total = g.add(total, term);
  }
  return g.affine(total, ewc.lambda, 0.0);
}

Tensor detached(const Tensor& t) {
  Tensor c = t.clone();
  c.set_requires_grad(false);
  return c;
}

}  // namespace

std::vector<double> generate_nograd(const GeneratorNet& gen, const Tensor& z) {
  Graph scratch;
  GeneratorNet shadow = gen;  // layers share storage; flip tracking off
  std::vector<std::pair<Tensor, bool>> saved;
  for (Layer& l : shadow.layers) {
    saved.emplace_back(l.weight, l.weight.requires_grad());
    saved.emplace_back(l.bias, l.bias.requires_grad());
    l.weight.set_requires_grad(false);
    l.bias.set_requires_grad(false);
  }
  Tensor out = shadow.forward(scratch, z);
  for (auto& [t, rg] : saved) t.set_requires_grad(rg);
  return out.data();
}

double train_step_d(Graph& g, GanPair& gan, const Dataset& data,
                    int batch_size, AdamOptimizer& opt_d,
                    std::span<const std::uint8_t> d_mask, long iter, Rng& rng,
                    const EwcTerm* ewc, const std::vector<Tensor>* mod_g,
                    const std::vector<Tensor>* mod_d, AdamOptimizer* opt_mod,
                    std::span<const std::uint8_t> mod_mask) {
  Tensor z = sample_latent(batch_size, gan.g.dz, rng);
  Tensor real = sample_real_batch(data, batch_size, rng);

  Tensor fake;
  if (mod_g != nullptr && !mod_g->empty()) {
    Graph scratch;
    fake = detached(gan.g.forward(scratch, z, mod_g));
    scratch.clear();
  } else {
    fake = Tensor::from({batch_size, gan.g.output_dim()},
                        generate_nograd(gan.g, z));
  }

  Tensor d_real = gan.d.forward(g, real, mod_d);
  Tensor d_fake = gan.d.forward(g, fake, mod_d);
  Tensor loss = d_loss(g, d_real, d_fake);
  if (ewc != nullptr && ewc->lambda > 0.0) {
    auto params = net_params(gan, Net::D);
    loss = g.add(loss, ewc_penalty(g, params, *ewc));
  }
  const double value = loss.item();
  if (!std::isfinite(value)) throw std::runtime_error("non-finite d loss");
  g.backward(loss);
  opt_d.step(iter, d_mask);
  if (opt_mod != nullptr) opt_mod->step(iter, mod_mask);
  return value;
}

double train_step_g(Graph& g, GanPair& gan, int batch_size,
                    AdamOptimizer& opt_g, std::span<const std::uint8_t> g_mask,
                    long iter, Rng& rng, bool saturating, const EwcTerm* ewc,
                    const std::vector<Tensor>* mod_g,
                    const std::vector<Tensor>* mod_d, AdamOptimizer* opt_mod,
                    std::span<const std::uint8_t> mod_mask) {
  Tensor z = sample_latent(batch_size, gan.g.dz, rng);
  Tensor fake = gan.g.forward(g, z, mod_g);

  // Detach D: keep its parameters out of the recorded graph so this
  // backward cannot touch them.
  DiscriminatorNet d_shadow = gan.d;
  std::vector<std::pair<Tensor, bool>> saved;
  for (Layer& l : d_shadow.layers) {
    saved.emplace_back(l.weight, l.weight.requires_grad());
    saved.emplace_back(l.bias, l.bias.requires_grad());
    l.weight.set_requires_grad(false);
    l.bias.set_requires_grad(false);
  }
  Tensor d_fake = d_shadow.forward(g, fake, mod_d);
  Tensor loss = g_loss(g, d_fake, saturating);
  if (ewc != nullptr && ewc->lambda > 0.0) {
    auto params = net_params(gan, Net::G);
    loss = g.add(loss, ewc_penalty(g, params, *ewc));
  }
  const double value = loss.item();
  if (!std::isfinite(value)) {
    for (auto& [t, rg] : saved) t.set_requires_grad(rg);
    throw std::runtime_error("non-finite g loss");
  }
  g.backward(loss);
  for (auto& [t, rg] : saved) t.set_requires_grad(rg);
  opt_g.step(iter, g_mask);
  if (opt_mod != nullptr) opt_mod->step(iter, mod_mask);
  return value;
}

void warmup_d(Graph& g, GanPair& gan, const Dataset& data, int batch_size,
              AdamOptimizer& opt_d, std::span<const std::uint8_t> d_mask,
              long n_warmup, Rng& rng, long iter_offset, const EwcTerm* ewc) {
  if (n_warmup < 0) throw std::invalid_argument("warmup must be >= 0");
  for (long i = 0; i < n_warmup; ++i) {
    opt_d.zero_grad();
    train_step_d(g, gan, data, batch_size, opt_d, d_mask, iter_offset + i, rng,
                 ewc);
  }
}

}  // namespace rick
