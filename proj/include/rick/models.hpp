#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rick/optim.hpp"
#include "rick/tensor.hpp"

namespace rick {

enum class Arch { PointMlp, IconConv };
enum class Net : std::uint8_t { G, D };

std::string arch_name(Arch a);
Arch parse_arch(const std::string& name);

constexpr double kLeakySlope = 0.2;

// One parametered layer; the inter-layer glue (activations, reshape,
// upsample, pool) is fixed by the architecture tag in forward().
struct Layer {
  bool conv = false;
  Tensor weight;  // dense: [O,I]; conv: [O,C,k,k]
  Tensor bias;    // [O]
  int padding = 0;
  int out_units() const { return weight.shape()[0]; }
  int fan_in() const { return weight.size() / weight.shape()[0]; }
};

struct GeneratorNet {
  Arch arch = Arch::PointMlp;
  int dz = 4;
  std::vector<Layer> layers;

  // modulation, when non-empty, holds one [O_l] tensor per layer; every
  // layer's weights and bias are scaled by (1 + m) per output unit.
  Tensor forward(Graph& g, const Tensor& z,
                 const std::vector<Tensor>* modulation = nullptr) const;
  int output_dim() const;  // flattened sample dimension (2 or 64)
  GeneratorNet clone() const;
};

struct DiscriminatorNet {
  Arch arch = Arch::PointMlp;
  std::vector<Layer> layers;

  // Returns [B] scores in (0,1).
  Tensor forward(Graph& g, const Tensor& x,
                 const std::vector<Tensor>* modulation = nullptr) const;
  DiscriminatorNet clone() const;
};

struct GanPair {
  GeneratorNet g;
  DiscriminatorNet d;
  GanPair clone() const { return {g.clone(), d.clone()}; }
};

GanPair make_gan(Arch arch, int dz, Rng& rng);

// Weight init stddev used by make_gan; filter re-initialisation draws
// from the same distribution.
double init_stddev(const Layer& layer);

Tensor sample_latent(int batch, int dz, Rng& rng);

// ---------------------------------------------------------------------------
// Filter layout
// ---------------------------------------------------------------------------

// One prunable unit: a dense output row or a conv output channel, bias
// element included. span_begin/span_len index a virtual global parameter
// vector in which every filter's parameters are contiguous.
struct FilterDescriptor {
  int filter_id;
  Net net;
  int layer;
  int output_index;
  std::size_t span_begin;
  std::size_t span_len;  // fan_in + 1
};

struct FilterLayout {
  std::vector<FilterDescriptor> filters;
  int n_g = 0;
  int n_d = 0;
  std::size_t total_params = 0;

  int size() const { return static_cast<int>(filters.size()); }
  // Ordinal of a filter within its own network (mask index).
  int net_ordinal(int filter_id) const;
  int net_count(Net net) const { return net == Net::G ? n_g : n_d; }
};

FilterLayout build_filter_layout(const GanPair& gan);

// Span accessors. A span is the filter's weight row plus its bias element.
std::vector<double> span_values(const GanPair& gan, const FilterDescriptor& f);
void set_span(GanPair& gan, const FilterDescriptor& f,
              const std::vector<double>& values);
void zero_span(GanPair& gan, const FilterDescriptor& f);
bool span_is_zero(const GanPair& gan, const FilterDescriptor& f);
bool spans_equal(const GanPair& a, const GanPair& b, const FilterDescriptor& f);
void reinit_span(GanPair& gan, const FilterDescriptor& f, Rng& rng);
double span_mean_sq_grad(const GanPair& gan, const FilterDescriptor& f);
double span_mean_abs_grad(const GanPair& gan, const FilterDescriptor& f);
bool span_has_grad(const GanPair& gan, const FilterDescriptor& f);

// Parameter list for one network in canonical order (weight, bias per
// layer) plus the span table feeding AdamOptimizer.
std::vector<Tensor> net_params(GanPair& gan, Net net);
std::vector<ParamSpan> net_spans(const GanPair& gan, const FilterLayout& layout,
                                 Net net);

// Fresh zero-initialised modulation tensors, one per layer.
std::vector<Tensor> make_modulation(const GeneratorNet& g, bool requires_grad);
std::vector<Tensor> make_modulation(const DiscriminatorNet& d,
                                    bool requires_grad);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

// Text header (version, arch, shapes, layout summary, memory-bank states,
// iteration, rng seed) followed by raw little-endian float64 parameter
// arrays in layer order, generator first. Round-trips bit-exactly.
struct Checkpoint {
  GanPair gan;
  std::string bank_states;          // one char per filter: F, P or X
  std::vector<int> prune_rounds;    // -1 when never pruned
  long iteration = 0;
  std::uint64_t rng_seed = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace rick
