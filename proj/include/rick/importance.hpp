#pragma once

#include <string>
#include <vector>

#include "rick/adversarial.hpp"
#include "rick/models.hpp"

namespace rick {

enum class Estimator { Fisher, Salience, Modulation };

std::string estimator_name(Estimator e);
Estimator parse_estimator(const std::string& name);

// Windowed per-filter gradient statistics. accumulate() is called once
// per training step per network, after that network's backward pass; the
// per-network step counters gate finalisation.
class ImportanceAccumulator {
 public:
  explicit ImportanceAccumulator(int n_filters)
      : sum_sq_(n_filters, 0.0), sum_abs_(n_filters, 0.0) {}

  // Adds mean(grad^2) and mean(|grad|) over each filter span of `net`.
  // Throws std::logic_error if gradients are missing.
  void accumulate(const GanPair& gan, const FilterLayout& layout, Net net);

  void reset();
  int steps(Net net) const { return net == Net::G ? steps_g_ : steps_d_; }
  double sum_sq(int filter_id) const { return sum_sq_[filter_id]; }
  double sum_abs(int filter_id) const { return sum_abs_[filter_id]; }
  int size() const { return static_cast<int>(sum_sq_.size()); }

 private:
  std::vector<double> sum_sq_;
  std::vector<double> sum_abs_;
  int steps_g_ = 0;
  int steps_d_ = 0;
};

struct ImportanceEntry {
  int filter_id;
  double importance;
  double quantile;  // fraction of same-network active filters strictly below
};

// Snapshot of one estimation round, covering exactly the active filters.
struct ImportanceReport {
  int round = 0;
  Estimator tag = Estimator::Fisher;
  std::vector<ImportanceEntry> entries;

  const ImportanceEntry* find(int filter_id) const;
};

// active[filter_id] == false excludes a filter from the report and from
// quantile ranking; pass empty to rank everything. Quantile pools are
// separate per network. Finalising resets the accumulator; finalising an
// accumulator with no recorded steps is a contract error.
ImportanceReport finalize_fisher(ImportanceAccumulator& acc,
                                 const FilterLayout& layout,
                                 const std::vector<std::uint8_t>& active,
                                 int round);
ImportanceReport finalize_salience(ImportanceAccumulator& acc,
                                   const FilterLayout& layout,
                                   const std::vector<std::uint8_t>& active,
                                   int round);

// Per-parameter (not per-filter) Fisher of the generator loss on
// source-generated batches, for the EWC baseline. Output is aligned with
// net_params() order: G tensors first, then D.
std::vector<std::vector<double>> ewc_source_fisher(GanPair& gan, int n_batches,
                                                   int batch_size, Rng& rng);

// AdAM-style probing: per-filter scalars m (init 0) modulate every filter
// as W * (1 + m); only m trains for probe_iters adversarial steps while
// base weights stay frozen. Importance is the Fisher of m accumulated
// over the last `fisher_window` probing steps.
struct ProbeConfig {
  int probe_iters = 500;
  int fisher_window = 50;
  int batch_size = 4;
  double lr = 0.002;
};

ImportanceReport probe_modulation(GanPair& gan, const Dataset& target,
                                  const FilterLayout& layout,
                                  const std::vector<std::uint8_t>& active,
                                  const ProbeConfig& cfg, int round, Rng& rng);

// Quantile ranks within one pool: q_i = #{j : v_j < v_i} / n.
std::vector<double> quantile_ranks(const std::vector<double>& values);

}  // namespace rick
