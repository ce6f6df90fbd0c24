#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rick/importance.hpp"
#include "rick/models.hpp"

namespace rick {

enum class Assign : char { FineTune = 'F', Preserve = 'P', Pruned = 'X' };

// Per-filter operation record mirroring the layout, one character of
// state per filter. Pruned is absorbing.
struct MemoryBank {
  std::vector<Assign> state;
  std::vector<int> prune_round;  // -1 when never pruned
  int round = 0;

  explicit MemoryBank(int n_filters = 0)
      : state(n_filters, Assign::FineTune), prune_round(n_filters, -1) {}

  int size() const { return static_cast<int>(state.size()); }
  bool pruned(int fid) const { return state[fid] == Assign::Pruned; }
  std::vector<std::uint8_t> active_flags() const;
  std::string to_chars() const;
  static MemoryBank from_chars(const std::string& s,
                               const std::vector<int>& prune_rounds);

  int count(const FilterLayout& layout, Net net, Assign a) const;
  double fraction(const FilterLayout& layout, Net net, Assign a) const;
};

enum class Schedule { Dynamic, Static };
enum class PreserveMode { Freeze, Modulate, None };
enum class PruneMode { Prune, Reinit, None };
enum class Baseline { None, Tgan, Ewc, Freezed };

// Full adaptation recipe. The named methods from the CLI are presets over
// the orthogonal axes (schedule x preserve x prune) plus the baselines.
struct RickConfig {
  long total_iters = 1250;      // N
  long warmup_iters = 250;      // N_w
  long interval = 50;           // T
  long checkpoint_interval = 250;
  int batch_size = 4;
  double lr0 = 0.002;
  double t_high = 0.7;
  double prune_rate_g = 0.03;
  double prune_rate_d = 0.03;
  std::optional<double> t_low;  // literal per-round quantile rule when set
  Estimator estimator = Estimator::Fisher;
  Schedule schedule = Schedule::Dynamic;
  PreserveMode preserve = PreserveMode::Freeze;
  PruneMode prune = PruneMode::Prune;
  Baseline baseline = Baseline::None;
  double ewc_lambda = 500.0;
  int ewc_batches = 64;
  bool saturating_gloss = false;
  ProbeConfig probe;

  void validate() const;
};

// Named policy presets; `method` is the CLI spelling.
RickConfig apply_method(RickConfig cfg, const std::string& method);
std::vector<std::string> known_methods();

struct AssignResult {
  MemoryBank bank;
  std::vector<int> newly_pruned;  // irreversibly zeroed
  std::vector<int> to_reinit;     // redrawn from init instead (reinit mode)
};

// One estimation round: prunes toward the cumulative schedule, then
// splits the remaining active filters at the preserve threshold.
AssignResult estimate_and_assign(const MemoryBank& bank,
                                 const ImportanceReport& report,
                                 const RickConfig& cfg,
                                 const FilterLayout& layout, int round,
                                 int total_rounds);

// Per-network fine-tune masks for adam_step plus, in modulation mode,
// the preserve masks driving the modulation optimizers.
struct UpdateMasks {
  std::vector<std::uint8_t> g;
  std::vector<std::uint8_t> d;
  std::vector<std::uint8_t> g_mod;
  std::vector<std::uint8_t> d_mod;
};

// Builds the masks and re-zeroes pruned spans.
UpdateMasks apply_bank(GanPair& gan, const MemoryBank& bank,
                       const FilterLayout& layout);

struct RoundRecord {
  int round;
  long iteration;
  ImportanceReport report;
  std::vector<Assign> assignment;  // aligned with report.entries
};

struct AdaptHooks {
  // Called at iteration 0 and every checkpoint_interval iterations.
  std::function<void(long iteration, const GanPair&, const MemoryBank&)>
      checkpoint;
  // Called after every iteration (estimation rounds included).
  std::function<void(long iteration, const GanPair&, const MemoryBank&)>
      observe;
};

struct AdaptResult {
  GanPair gan;
  MemoryBank bank;
  std::vector<RoundRecord> rounds;
  double final_d_loss = 0.0;
  double final_g_loss = 0.0;
};

// Algorithm: clone the source pair, warm the discriminator up for
// warmup_iters, then alternate per-step D/G updates under the bank's
// masks; every `interval` iterations an estimation round replaces the
// training step and reassigns the bank. Throws on non-finite losses with
// the failing iteration in the message.
AdaptResult adapt(const GanPair& source, const Dataset& target,
                  const RickConfig& cfg, Rng& rng,
                  const AdaptHooks& hooks = {});

}  // namespace rick
