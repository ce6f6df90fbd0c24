#include "rick/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rick {

std::vector<std::uint8_t> MemoryBank::active_flags() const {
  std::vector<std::uint8_t> a(state.size(), 1);
  for (std::size_t i = 0; i < state.size(); ++i)
    if (state[i] == Assign::Pruned) a[i] = 0;
  return a;
}

std::string MemoryBank::to_chars() const {
  std::string s;
  s.reserve(state.size());
  for (Assign a : state) s.push_back(static_cast<char>(a));
  return s;
}

MemoryBank MemoryBank::from_chars(const std::string& s,
                                  const std::vector<int>& prune_rounds) {
  MemoryBank bank(static_cast<int>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c != 'F' && c != 'P' && c != 'X')
      throw std::invalid_argument("invalid memory bank state character");
    bank.state[i] = static_cast<Assign>(c);
  }
  if (!prune_rounds.empty()) {
    if (prune_rounds.size() != s.size())
      throw std::invalid_argument("prune round list length mismatch");
    bank.prune_round = prune_rounds;
  }
  return bank;
}

int MemoryBank::count(const FilterLayout& layout, Net net, Assign a) const {
  int n = 0;
  for (const FilterDescriptor& f : layout.filters)
    if (f.net == net && state[f.filter_id] == a) ++n;
  return n;
}

double MemoryBank::fraction(const FilterLayout& layout, Net net,
                            Assign a) const {
  const int total = layout.net_count(net);
  return total == 0 ? 0.0
                    : static_cast<double>(count(layout, net, a)) / total;
}

void RickConfig::validate() const {
  if (total_iters < 1 || interval < 1 || warmup_iters < 0 || batch_size < 1)
    throw std::invalid_argument("non-positive iteration/batch setting");
  if (warmup_iters + interval > total_iters)
    throw std::invalid_argument("warmup + interval must not exceed total iterations");
  for (double p : {prune_rate_g, prune_rate_d}) {
    if (p < 0.0 || p >= t_high || t_high > 1.0)
      throw std::invalid_argument("require 0 <= prune rate < t_high <= 1");
  }
  if (t_low && (*t_low < 0.0 || *t_low > 1.0))
    throw std::invalid_argument("t_low must lie in [0,1]");
}

RickConfig apply_method(RickConfig cfg, const std::string& method) {
  cfg.baseline = Baseline::None;
  cfg.schedule = Schedule::Dynamic;
  cfg.preserve = PreserveMode::Freeze;
  cfg.prune = PruneMode::Prune;
  if (method == "tgan") {
    cfg.baseline = Baseline::Tgan;
    cfg.preserve = PreserveMode::None;
    cfg.prune = PruneMode::None;
  } else if (method == "ewc") {
    cfg.baseline = Baseline::Ewc;
    cfg.preserve = PreserveMode::None;
    cfg.prune = PruneMode::None;
  } else if (method == "freezed") {
    cfg.baseline = Baseline::Freezed;
    cfg.prune = PruneMode::None;
  } else if (method == "rick") {
    // defaults already describe rick-dynamic
  } else if (method == "rick-static") {
    cfg.schedule = Schedule::Static;
  } else if (method == "rick-noprune") {
    cfg.prune = PruneMode::None;
  } else if (method == "rick-nofreeze") {
    cfg.preserve = PreserveMode::None;
  } else if (method == "rick-reinit") {
    cfg.prune = PruneMode::Reinit;
  } else if (method == "adam-probe") {
    cfg.schedule = Schedule::Static;
    cfg.preserve = PreserveMode::Modulate;
    cfg.prune = PruneMode::None;
    cfg.estimator = Estimator::Modulation;
  } else {
    throw std::invalid_argument("unknown method: " + method);
  }
  return cfg;
}

std::vector<std::string> known_methods() {
  return {"tgan",         "ewc",          "freezed",
          "rick",         "rick-static",  "rick-noprune",
          "rick-nofreeze", "rick-reinit", "adam-probe"};
}

AssignResult estimate_and_assign(const MemoryBank& bank,
                                 const ImportanceReport& report,
                                 const RickConfig& cfg,
                                 const FilterLayout& layout, int round,
                                 int total_rounds) {
  if (bank.size() != layout.size())
    throw std::logic_error("memory bank / layout size mismatch");
  int active_count = 0;
  for (int i = 0; i < bank.size(); ++i)
    if (!bank.pruned(i)) ++active_count;
  if (static_cast<int>(report.entries.size()) != active_count)
    throw std::logic_error("importance report must cover exactly the active filters");
  for (const ImportanceEntry& e : report.entries)
    if (bank.pruned(e.filter_id))
      throw std::logic_error("importance report contains a pruned filter");

  AssignResult result{bank, {}, {}};
  result.bank.round = round;

  for (Net net : {Net::G, Net::D}) {
    const double p = net == Net::G ? cfg.prune_rate_g : cfg.prune_rate_d;
    const int n_total = layout.net_count(net);

    std::vector<const ImportanceEntry*> entries;
    for (const ImportanceEntry& e : report.entries)
      if (layout.filters[e.filter_id].net == net) entries.push_back(&e);

    // --- pruning ---
    std::vector<const ImportanceEntry*> doomed;
    if (cfg.prune != PruneMode::None) {
      if (cfg.t_low) {
        // literal per-round rule: prune the filters ranked below t_low
        for (const ImportanceEntry* e : entries)
          if (e->quantile < *cfg.t_low) doomed.push_back(e);
      } else {
        // cumulative schedule toward p% of the network, linear in rounds
        const int already = result.bank.count(layout, net, Assign::Pruned);
        const double frac =
            cfg.schedule == Schedule::Static
                ? p
                : p * static_cast<double>(round) / total_rounds;
        const int target = static_cast<int>(std::floor(frac * n_total + 1e-9));
        const int newly = std::max(0, target - already);
        std::vector<const ImportanceEntry*> sorted = entries;
        std::sort(sorted.begin(), sorted.end(),
                  [](const ImportanceEntry* a, const ImportanceEntry* b) {
                    if (a->importance != b->importance)
                      return a->importance < b->importance;
                    return a->filter_id < b->filter_id;
                  });
        for (int i = 0; i < newly && i < static_cast<int>(sorted.size()); ++i)
          doomed.push_back(sorted[i]);
      }
    }
    for (const ImportanceEntry* e : doomed) {
      if (cfg.prune == PruneMode::Reinit) {
        result.bank.state[e->filter_id] = Assign::FineTune;
        result.to_reinit.push_back(e->filter_id);
      } else {
        result.bank.state[e->filter_id] = Assign::Pruned;
        result.bank.prune_round[e->filter_id] = round;
        result.newly_pruned.push_back(e->filter_id);
      }
    }

    // --- preserve / fine-tune split over the survivors ---
    for (const ImportanceEntry* e : entries) {
      if (result.bank.state[e->filter_id] == Assign::Pruned) continue;
      const bool reinit_hit =
          std::find(result.to_reinit.begin(), result.to_reinit.end(),
                    e->filter_id) != result.to_reinit.end();
      if (reinit_hit) continue;  // freshly drawn filters stay fine-tuned
      const bool preserve =
          cfg.preserve != PreserveMode::None && e->quantile >= cfg.t_high;
      result.bank.state[e->filter_id] =
          preserve ? Assign::Preserve : Assign::FineTune;
    }
  }
  return result;
}

UpdateMasks apply_bank(GanPair& gan, const MemoryBank& bank,
                       const FilterLayout& layout) {
  if (bank.size() != layout.size())
    throw std::logic_error("memory bank / layout size mismatch");
  UpdateMasks masks;
  masks.g.assign(static_cast<std::size_t>(layout.n_g), 0);
  masks.d.assign(static_cast<std::size_t>(layout.n_d), 0);
  masks.g_mod.assign(static_cast<std::size_t>(layout.n_g), 0);
  masks.d_mod.assign(static_cast<std::size_t>(layout.n_d), 0);
  for (const FilterDescriptor& f : layout.filters) {
    const Assign a = bank.state[f.filter_id];
    const int ord = layout.net_ordinal(f.filter_id);
    auto& base = f.net == Net::G ? masks.g : masks.d;
    auto& mod = f.net == Net::G ? masks.g_mod : masks.d_mod;
    if (a == Assign::FineTune) base[ord] = 1;
    if (a == Assign::Preserve) mod[ord] = 1;
    if (a == Assign::Pruned) zero_span(gan, f);
  }
  return masks;
}

AdaptResult adapt(const GanPair& source, const Dataset& target,
                  const RickConfig& cfg, Rng& rng, const AdaptHooks& hooks) {
  cfg.validate();
  if (target.count() < 1) throw std::invalid_argument("target data is empty");

  AdaptResult res{source.clone(), MemoryBank(0), {}, 0.0, 0.0};
  GanPair& gan = res.gan;
  const FilterLayout layout = build_filter_layout(gan);
  res.bank = MemoryBank(layout.size());

  if (cfg.baseline == Baseline::Freezed) {
    // permanently freeze the first ceil(L/2) discriminator layers
    const int n_layers = static_cast<int>(gan.d.layers.size());
    const int frozen_layers = (n_layers + 1) / 2;
    for (const FilterDescriptor& f : layout.filters)
      if (f.net == Net::D && f.layer < frozen_layers)
        res.bank.state[f.filter_id] = Assign::Preserve;
  }

  // EWC baseline: per-parameter source Fisher and parameter anchors.
  EwcTerm ewc_g, ewc_d;
  const bool use_ewc = cfg.baseline == Baseline::Ewc && cfg.ewc_lambda > 0.0;
  if (use_ewc) {  // lambda == 0 must not perturb the rng stream
    GanPair probe_copy = source.clone();
    auto fisher = ewc_source_fisher(probe_copy, cfg.ewc_batches,
                                    cfg.batch_size, rng);
    const std::size_t n_g_params = net_params(gan, Net::G).size();
    GanPair anchor = source.clone();
    auto pack = [&](EwcTerm& term, Net net, std::size_t offset) {
      term.lambda = cfg.ewc_lambda;
      auto params = net_params(anchor, net);
      for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor f = Tensor::from(params[i].shape(), fisher[offset + i]);
        term.fisher.push_back(f);
        Tensor a = params[i].clone();
        a.set_requires_grad(false);
        term.anchor.push_back(a);
      }
    };
    pack(ewc_g, Net::G, 0);
    pack(ewc_d, Net::D, n_g_params);
  }

  const bool modulating = cfg.preserve == PreserveMode::Modulate;
  std::vector<Tensor> mod_g, mod_d;
  std::optional<AdamOptimizer> opt_mg, opt_md;
  if (modulating) {
    mod_g = make_modulation(gan.g, true);
    mod_d = make_modulation(gan.d, true);
    auto spans_for = [&](std::vector<Tensor>& mods) {
      std::vector<ParamSpan> spans;
      int mask_index = 0;
      for (std::size_t li = 0; li < mods.size(); ++li)
        for (int o = 0; o < mods[li].size(); ++o)
          spans.push_back({static_cast<int>(li), static_cast<std::size_t>(o),
                           1, mask_index++});
      return spans;
    };
    opt_mg.emplace(mod_g, spans_for(mod_g), cfg.lr0, cfg.total_iters);
    opt_md.emplace(mod_d, spans_for(mod_d), cfg.lr0, cfg.total_iters);
  }

  AdamOptimizer opt_g(net_params(gan, Net::G), net_spans(gan, layout, Net::G),
                      cfg.lr0, cfg.total_iters);
  AdamOptimizer opt_d(net_params(gan, Net::D), net_spans(gan, layout, Net::D),
                      cfg.lr0, cfg.total_iters);

  UpdateMasks masks = apply_bank(gan, res.bank, layout);
  ImportanceAccumulator acc(layout.size());
  Graph graph;

  const auto* use_mod_g = modulating ? &mod_g : nullptr;
  const auto* use_mod_d = modulating ? &mod_d : nullptr;

  if (hooks.checkpoint) hooks.checkpoint(0, gan, res.bank);

  // estimation rounds happen at iterations in (warmup, N] divisible by T
  int total_rounds = 0;
  for (long it = cfg.warmup_iters + 1; it <= cfg.total_iters; ++it)
    if (it % cfg.interval == 0) ++total_rounds;

  const bool is_baseline = cfg.baseline != Baseline::None;
  bool static_done = false;
  int round = 0;

  for (long it = 1; it <= cfg.total_iters; ++it) {
    try {
      const bool estimation_iter =
          it > cfg.warmup_iters && it % cfg.interval == 0;
      if (it <= cfg.warmup_iters) {
        opt_d.zero_grad();
        if (opt_md) opt_md->zero_grad();
        res.final_d_loss = train_step_d(
            graph, gan, target, cfg.batch_size, opt_d, masks.d, it - 1, rng,
            use_ewc ? &ewc_d : nullptr, use_mod_g, use_mod_d,
            opt_md ? &*opt_md : nullptr, masks.d_mod);
      } else if (estimation_iter) {
        ++round;
        const bool skip = is_baseline || (cfg.schedule == Schedule::Static &&
                                          static_done);
        if (!skip) {
          ImportanceReport report;
          const auto active = res.bank.active_flags();
          switch (cfg.estimator) {
            case Estimator::Fisher:
              report = finalize_fisher(acc, layout, active, round);
              break;
            case Estimator::Salience:
              report = finalize_salience(acc, layout, active, round);
              break;
            case Estimator::Modulation:
              report = probe_modulation(gan, target, layout, active,
                                        cfg.probe, round, rng);
              acc.reset();
              break;
          }
          AssignResult assigned = estimate_and_assign(res.bank, report, cfg,
                                                      layout, round,
                                                      total_rounds);
          res.bank = std::move(assigned.bank);
          for (int fid : assigned.newly_pruned) {
            const FilterDescriptor& f = layout.filters[fid];
            zero_span(gan, f);
            auto& opt = f.net == Net::G ? opt_g : opt_d;
            opt.zero_moments(layout.net_ordinal(fid));
          }
          for (int fid : assigned.to_reinit)
            reinit_span(gan, layout.filters[fid], rng);
          masks = apply_bank(gan, res.bank, layout);

          RoundRecord rec{round, it, report, {}};
          for (const ImportanceEntry& e : report.entries)
            rec.assignment.push_back(res.bank.state[e.filter_id]);
          res.rounds.push_back(std::move(rec));
          if (cfg.schedule == Schedule::Static) static_done = true;
        }
      } else {
        opt_d.zero_grad();
        if (opt_md) opt_md->zero_grad();
        res.final_d_loss = train_step_d(
            graph, gan, target, cfg.batch_size, opt_d, masks.d, it - 1, rng,
            use_ewc ? &ewc_d : nullptr, use_mod_g, use_mod_d,
            opt_md ? &*opt_md : nullptr, masks.d_mod);
        const bool track = !is_baseline && cfg.estimator != Estimator::Modulation &&
                           !(cfg.schedule == Schedule::Static && static_done);
        if (track) acc.accumulate(gan, layout, Net::D);

        opt_g.zero_grad();
        if (opt_mg) opt_mg->zero_grad();
        res.final_g_loss = train_step_g(
            graph, gan, cfg.batch_size, opt_g, masks.g, it - 1, rng,
            cfg.saturating_gloss, use_ewc ? &ewc_g : nullptr, use_mod_g,
            use_mod_d, opt_mg ? &*opt_mg : nullptr, masks.g_mod);
        if (track) acc.accumulate(gan, layout, Net::G);
      }
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(std::string(e.what()) + " at iteration " +
                               std::to_string(it));
    }
    if (hooks.observe) hooks.observe(it, gan, res.bank);
    if (hooks.checkpoint && cfg.checkpoint_interval > 0 &&
        it % cfg.checkpoint_interval == 0)
      hooks.checkpoint(it, gan, res.bank);
  }
  return res;
}

}  // namespace rick
