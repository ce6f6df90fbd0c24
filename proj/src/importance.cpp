#include "rick/importance.hpp"

#include <algorithm>
#include <stdexcept>

namespace rick {

std::string estimator_name(Estimator e) {
  switch (e) {
    case Estimator::Fisher: return "fisher";
    case Estimator::Salience: return "salience";
    case Estimator::Modulation: return "modulation";
  }
  return "fisher";
}

Estimator parse_estimator(const std::string& name) {
  if (name == "fisher") return Estimator::Fisher;
  if (name == "salience") return Estimator::Salience;
  if (name == "modulation") return Estimator::Modulation;
  throw std::invalid_argument("unknown estimator: " + name);
}

void ImportanceAccumulator::accumulate(const GanPair& gan,
                                       const FilterLayout& layout, Net net) {
  if (layout.size() != size())
    throw std::logic_error("accumulator/layout size mismatch");
  for (const FilterDescriptor& f : layout.filters) {
    if (f.net != net) continue;
    if (!span_has_grad(gan, f))
      throw std::logic_error("importance accumulation requires gradients");
    sum_sq_[f.filter_id] += span_mean_sq_grad(gan, f);
    sum_abs_[f.filter_id] += span_mean_abs_grad(gan, f);
  }
  if (net == Net::G)
    ++steps_g_;
  else
    ++steps_d_;
}

void ImportanceAccumulator::reset() {
  std::fill(sum_sq_.begin(), sum_sq_.end(), 0.0);
  std::fill(sum_abs_.begin(), sum_abs_.end(), 0.0);
  steps_g_ = 0;
  steps_d_ = 0;
}

const ImportanceEntry* ImportanceReport::find(int filter_id) const {
  for (const ImportanceEntry& e : entries)
    if (e.filter_id == filter_id) return &e;
  return nullptr;
}

std::vector<double> quantile_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> q(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double rank = static_cast<double>(i) / static_cast<double>(n);
    for (std::size_t k = i; k < j; ++k) q[order[k]] = rank;
    i = j;
  }
  return q;
}

namespace {

ImportanceReport finalize_impl(ImportanceAccumulator& acc,
                               const FilterLayout& layout,
                               const std::vector<std::uint8_t>& active,
                               int round, Estimator tag, bool use_abs) {
  if (layout.size() != acc.size())
    throw std::logic_error("accumulator/layout size mismatch");
  ImportanceReport report;
  report.round = round;
  report.tag = tag;
  for (Net net : {Net::G, Net::D}) {
    std::vector<int> ids;
    std::vector<double> vals;
    const int steps = acc.steps(net);
    for (const FilterDescriptor& f : layout.filters) {
      if (f.net != net) continue;
      if (!active.empty() && !active[f.filter_id]) continue;
      if (steps < 1)
        throw std::logic_error("finalize requires at least one accumulated step");
      ids.push_back(f.filter_id);
      vals.push_back((use_abs ? acc.sum_abs(f.filter_id)
                              : acc.sum_sq(f.filter_id)) /
                     static_cast<double>(steps));
    }
    const std::vector<double> q = quantile_ranks(vals);
    for (std::size_t i = 0; i < ids.size(); ++i)
      report.entries.push_back({ids[i], vals[i], q[i]});
  }
  std::sort(report.entries.begin(), report.entries.end(),
            [](const ImportanceEntry& a, const ImportanceEntry& b) {
              return a.filter_id < b.filter_id;
            });
  acc.reset();
  return report;
}

}  // namespace

ImportanceReport finalize_fisher(ImportanceAccumulator& acc,
                                 const FilterLayout& layout,
                                 const std::vector<std::uint8_t>& active,
                                 int round) {
  return finalize_impl(acc, layout, active, round, Estimator::Fisher, false);
}

ImportanceReport finalize_salience(ImportanceAccumulator& acc,
                                   const FilterLayout& layout,
                                   const std::vector<std::uint8_t>& active,
                                   int round) {
  return finalize_impl(acc, layout, active, round, Estimator::Salience, true);
}

std::vector<std::vector<double>> ewc_source_fisher(GanPair& gan, int n_batches,
                                                   int batch_size, Rng& rng) {
  std::vector<Tensor> params = net_params(gan, Net::G);
  for (Tensor& t : net_params(gan, Net::D)) params.push_back(t);

  std::vector<std::vector<double>> fisher(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    fisher[i].assign(params[i].data().size(), 0.0);

  Graph g;
  for (int b = 0; b < n_batches; ++b) {
    for (Tensor& t : params) t.zero_grad();
    Tensor z = sample_latent(batch_size, gan.g.dz, rng);
    Tensor fake = gan.g.forward(g, z);
    Tensor score = gan.d.forward(g, fake);
    g.backward(g_loss(g, score));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].has_grad()) continue;  // no gradient path to this loss
      const auto& gr = params[i].grad();
      for (std::size_t j = 0; j < gr.size(); ++j)
        fisher[i][j] += gr[j] * gr[j];
    }
  }
  for (auto& f : fisher)
    for (double& v : f) v /= static_cast<double>(n_batches);
  for (Tensor& t : params) t.zero_grad();
  return fisher;
}

ImportanceReport probe_modulation(GanPair& gan, const Dataset& target,
                                  const FilterLayout& layout,
                                  const std::vector<std::uint8_t>& active,
                                  const ProbeConfig& cfg, int round, Rng& rng) {
  std::vector<Tensor> mod_g = make_modulation(gan.g, true);
  std::vector<Tensor> mod_d = make_modulation(gan.d, true);

  auto make_opt = [&](std::vector<Tensor>& mods) {
    std::vector<ParamSpan> spans;
    int mask_index = 0;
    for (std::size_t li = 0; li < mods.size(); ++li)
      for (int o = 0; o < mods[li].size(); ++o)
        spans.push_back({static_cast<int>(li), static_cast<std::size_t>(o), 1,
                         mask_index++});
    // constant-rate probe: steps run at iter 0 of a flat cosine schedule
    return AdamOptimizer(mods, spans, cfg.lr, 1L << 40);
  };
  AdamOptimizer opt_mg = make_opt(mod_g);
  AdamOptimizer opt_md = make_opt(mod_d);

  std::vector<double> fis(static_cast<std::size_t>(layout.size()), 0.0);
  const int window_start = std::max(0, cfg.probe_iters - cfg.fisher_window);

  Graph g;
  std::vector<std::uint8_t> no_base_update_g(
      static_cast<std::size_t>(layout.n_g), 0);
  std::vector<std::uint8_t> no_base_update_d(
      static_cast<std::size_t>(layout.n_d), 0);
  AdamOptimizer opt_g(net_params(gan, Net::G), net_spans(gan, layout, Net::G),
                      cfg.lr, 1);
  AdamOptimizer opt_d(net_params(gan, Net::D), net_spans(gan, layout, Net::D),
                      cfg.lr, 1);

  auto accumulate_mod_fisher = [&](const std::vector<Tensor>& mods, Net net) {
    for (const FilterDescriptor& f : layout.filters) {
      if (f.net != net) continue;
      const Tensor& m = mods[static_cast<std::size_t>(f.layer)];
      if (!m.has_grad()) continue;
      const double gm = m.grad()[f.output_index];
      fis[f.filter_id] += gm * gm;
    }
  };

  int window_steps = 0;
  for (int it = 0; it < cfg.probe_iters; ++it) {
    opt_d.zero_grad();
    opt_mg.zero_grad();
    opt_md.zero_grad();
    train_step_d(g, gan, target, cfg.batch_size, opt_d, no_base_update_d, 0,
                 rng, nullptr, &mod_g, &mod_d, &opt_md, {});
    if (it >= window_start) accumulate_mod_fisher(mod_d, Net::D);

    opt_g.zero_grad();
    opt_mg.zero_grad();
    opt_md.zero_grad();
    train_step_g(g, gan, cfg.batch_size, opt_g, no_base_update_g, 0, rng,
                 false, nullptr, &mod_g, &mod_d, &opt_mg, {});
    if (it >= window_start) accumulate_mod_fisher(mod_g, Net::G);
    if (it >= window_start) ++window_steps;
  }

  ImportanceReport report;
  report.round = round;
  report.tag = Estimator::Modulation;
  for (Net net : {Net::G, Net::D}) {
    std::vector<int> ids;
    std::vector<double> vals;
    for (const FilterDescriptor& f : layout.filters) {
      if (f.net != net) continue;
      if (!active.empty() && !active[f.filter_id]) continue;
      ids.push_back(f.filter_id);
      vals.push_back(fis[f.filter_id] /
                     static_cast<double>(std::max(1, window_steps)));
    }
    const std::vector<double> q = quantile_ranks(vals);
    for (std::size_t i = 0; i < ids.size(); ++i)
      report.entries.push_back({ids[i], vals[i], q[i]});
  }
  std::sort(report.entries.begin(), report.entries.end(),
            [](const ImportanceEntry& a, const ImportanceEntry& b) {
              return a.filter_id < b.filter_id;
            });
  return report;
}

}  // namespace rick
