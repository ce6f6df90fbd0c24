#include "rick/models.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace rick {

std::string arch_name(Arch a) {
  return a == Arch::PointMlp ? "point-mlp" : "icon-conv";
}

Arch parse_arch(const std::string& name) {
  if (name == "point-mlp") return Arch::PointMlp;
  if (name == "icon-conv") return Arch::IconConv;
  throw std::invalid_argument("unknown architecture tag: " + name);
}

double init_stddev(const Layer& layer) {
  return 1.0 / std::sqrt(static_cast<double>(layer.fan_in()));
}

namespace {

Layer make_dense(int out, int in, Rng& rng) {
  Layer l;
  l.conv = false;
  l.weight = Tensor({out, in}, true);
  l.bias = Tensor({out}, true);
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& w : l.weight.data()) w = s * rng.next_gaussian();
  return l;
}

Layer make_conv(int out, int in, int k, int padding, Rng& rng) {
  Layer l;
  l.conv = true;
  l.padding = padding;
  l.weight = Tensor({out, in, k, k}, true);
  l.bias = Tensor({out}, true);
  const double s = 1.0 / std::sqrt(static_cast<double>(in * k * k));
  for (double& w : l.weight.data()) w = s * rng.next_gaussian();
  return l;
}

Layer clone_layer(const Layer& l) {
  Layer c;
  c.conv = l.conv;
  c.padding = l.padding;
  c.weight = l.weight.clone();
  c.bias = l.bias.clone();
  return c;
}

// Applies the layer with optional per-output-unit modulation.
Tensor apply_layer(Graph& g, const Layer& l, const Tensor& x,
                   const Tensor* mod) {
  Tensor w = l.weight;
  Tensor b = l.bias;
  if (mod != nullptr) {
    w = g.scale_filters(l.weight, *mod);
    b = g.scale_filters(l.bias, *mod);
  }
  return l.conv ? g.conv2d(x, w, b, l.padding) : g.dense(x, w, b);
}

const Tensor* mod_at(const std::vector<Tensor>* mods, std::size_t i) {
  return (mods != nullptr && !mods->empty()) ? &(*mods)[i] : nullptr;
}

}  // namespace

GanPair make_gan(Arch arch, int dz, Rng& rng) {
  GanPair gan;
  gan.g.arch = arch;
  gan.g.dz = dz;
  gan.d.arch = arch;
  if (arch == Arch::PointMlp) {
    gan.g.layers.push_back(make_dense(64, dz, rng));
    gan.g.layers.push_back(make_dense(64, 64, rng));
    gan.g.layers.push_back(make_dense(2, 64, rng));
    gan.d.layers.push_back(make_dense(64, 2, rng));
    gan.d.layers.push_back(make_dense(64, 64, rng));
    gan.d.layers.push_back(make_dense(1, 64, rng));
  } else {
    gan.g.layers.push_back(make_dense(4 * 4 * 16, dz, rng));
    gan.g.layers.push_back(make_conv(16, 16, 3, 1, rng));
    gan.g.layers.push_back(make_conv(1, 16, 3, 1, rng));
    gan.d.layers.push_back(make_conv(16, 1, 3, 1, rng));
    gan.d.layers.push_back(make_conv(16, 16, 3, 1, rng));
    gan.d.layers.push_back(make_dense(1, 4 * 4 * 16, rng));
  }
  return gan;
}

Tensor sample_latent(int batch, int dz, Rng& rng) {
  if (batch < 1) throw std::invalid_argument("latent batch must be >= 1");
  Tensor z({batch, dz});
  for (double& v : z.data()) v = rng.next_gaussian();
  return z;
}

int GeneratorNet::output_dim() const {
  return arch == Arch::PointMlp ? 2 : 64;
}

Tensor GeneratorNet::forward(Graph& g, const Tensor& z,
                             const std::vector<Tensor>* modulation) const {
  const int B = z.shape()[0];
  if (arch == Arch::PointMlp) {
    Tensor h = apply_layer(g, layers[0], z, mod_at(modulation, 0));
    h = g.leaky_relu(h, kLeakySlope);
    h = apply_layer(g, layers[1], h, mod_at(modulation, 1));
    h = g.leaky_relu(h, kLeakySlope);
    return apply_layer(g, layers[2], h, mod_at(modulation, 2));
  }
  Tensor h = apply_layer(g, layers[0], z, mod_at(modulation, 0));
  h = g.leaky_relu(h, kLeakySlope);
  h = g.reshape(h, {B, 16, 4, 4});
  h = apply_layer(g, layers[1], h, mod_at(modulation, 1));
  h = g.leaky_relu(h, kLeakySlope);
  h = g.upsample2x(h);
  h = apply_layer(g, layers[2], h, mod_at(modulation, 2));
  return g.tanh(h);
}

GeneratorNet GeneratorNet::clone() const {
  GeneratorNet c;
  c.arch = arch;
  c.dz = dz;
  for (const Layer& l : layers) c.layers.push_back(clone_layer(l));
  return c;
}

Tensor DiscriminatorNet::forward(Graph& g, const Tensor& x,
                                 const std::vector<Tensor>* modulation) const {
  const int B = x.shape()[0];
  Tensor h;
  if (arch == Arch::PointMlp) {
    h = apply_layer(g, layers[0], x, mod_at(modulation, 0));
    h = g.leaky_relu(h, kLeakySlope);
    h = apply_layer(g, layers[1], h, mod_at(modulation, 1));
    h = g.leaky_relu(h, kLeakySlope);
    h = apply_layer(g, layers[2], h, mod_at(modulation, 2));
  } else {
    Tensor img = x;
    if (x.shape().size() == 2) img = g.reshape(x, {B, 1, 8, 8});
    h = apply_layer(g, layers[0], img, mod_at(modulation, 0));
    h = g.leaky_relu(h, kLeakySlope);
    h = g.avgpool2x(h);
    h = apply_layer(g, layers[1], h, mod_at(modulation, 1));
    h = g.leaky_relu(h, kLeakySlope);
    h = g.reshape(h, {B, 4 * 4 * 16});
    h = apply_layer(g, layers[2], h, mod_at(modulation, 2));
  }
  h = g.sigmoid(h);
  return g.reshape(h, {B});
}

DiscriminatorNet DiscriminatorNet::clone() const {
  DiscriminatorNet c;
  c.arch = arch;
  for (const Layer& l : layers) c.layers.push_back(clone_layer(l));
  return c;
}

// ---------------------------------------------------------------------------
// Filter layout
// ---------------------------------------------------------------------------

FilterLayout build_filter_layout(const GanPair& gan) {
  FilterLayout layout;
  std::size_t cursor = 0;
  int id = 0;
  auto add_net = [&](const std::vector<Layer>& layers, Net net) {
    for (int li = 0; li < static_cast<int>(layers.size()); ++li) {
      const Layer& l = layers[li];
      const int fan_in = l.fan_in();
      for (int o = 0; o < l.out_units(); ++o) {
        FilterDescriptor f;
        f.filter_id = id++;
        f.net = net;
        f.layer = li;
        f.output_index = o;
        f.span_begin = cursor;
        f.span_len = static_cast<std::size_t>(fan_in) + 1;
        cursor += f.span_len;
        layout.filters.push_back(f);
        if (net == Net::G)
          ++layout.n_g;
        else
          ++layout.n_d;
      }
    }
  };
  add_net(gan.g.layers, Net::G);
  add_net(gan.d.layers, Net::D);
  layout.total_params = cursor;
  return layout;
}

int FilterLayout::net_ordinal(int filter_id) const {
  const FilterDescriptor& f = filters.at(static_cast<std::size_t>(filter_id));
  return f.net == Net::G ? filter_id : filter_id - n_g;
}

namespace {

const Layer& layer_of(const GanPair& gan, const FilterDescriptor& f) {
  const auto& layers = f.net == Net::G ? gan.g.layers : gan.d.layers;
  return layers.at(static_cast<std::size_t>(f.layer));
}

Layer& layer_of(GanPair& gan, const FilterDescriptor& f) {
  auto& layers = f.net == Net::G ? gan.g.layers : gan.d.layers;
  return layers.at(static_cast<std::size_t>(f.layer));
}

}  // namespace

std::vector<double> span_values(const GanPair& gan, const FilterDescriptor& f) {
  const Layer& l = layer_of(gan, f);
  const int fan_in = l.fan_in();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(fan_in) + 1);
  const auto& w = l.weight.data();
  for (int j = 0; j < fan_in; ++j)
    out.push_back(w[static_cast<std::size_t>(f.output_index) * fan_in + j]);
  out.push_back(l.bias.data()[f.output_index]);
  return out;
}

void set_span(GanPair& gan, const FilterDescriptor& f,
              const std::vector<double>& values) {
  Layer& l = layer_of(gan, f);
  const int fan_in = l.fan_in();
  if (values.size() != static_cast<std::size_t>(fan_in) + 1)
    throw std::invalid_argument("span value length mismatch");
  auto& w = l.weight.data();
  for (int j = 0; j < fan_in; ++j)
    w[static_cast<std::size_t>(f.output_index) * fan_in + j] = values[j];
  l.bias.data()[f.output_index] = values.back();
}

void zero_span(GanPair& gan, const FilterDescriptor& f) {
  Layer& l = layer_of(gan, f);
  const int fan_in = l.fan_in();
  auto& w = l.weight.data();
  for (int j = 0; j < fan_in; ++j)
    w[static_cast<std::size_t>(f.output_index) * fan_in + j] = 0.0;
  l.bias.data()[f.output_index] = 0.0;
}

bool span_is_zero(const GanPair& gan, const FilterDescriptor& f) {
  for (double v : span_values(gan, f))
    if (v != 0.0) return false;
  return true;
}

bool spans_equal(const GanPair& a, const GanPair& b,
                 const FilterDescriptor& f) {
  const std::vector<double> va = span_values(a, f);
  const std::vector<double> vb = span_values(b, f);
  return std::memcmp(va.data(), vb.data(), va.size() * sizeof(double)) == 0;
}

void reinit_span(GanPair& gan, const FilterDescriptor& f, Rng& rng) {
  Layer& l = layer_of(gan, f);
  const int fan_in = l.fan_in();
  const double s = init_stddev(l);
  auto& w = l.weight.data();
  for (int j = 0; j < fan_in; ++j)
    w[static_cast<std::size_t>(f.output_index) * fan_in + j] =
        s * rng.next_gaussian();
  l.bias.data()[f.output_index] = 0.0;
}

bool span_has_grad(const GanPair& gan, const FilterDescriptor& f) {
  const Layer& l = layer_of(gan, f);
  return l.weight.has_grad() && l.bias.has_grad();
}

double span_mean_sq_grad(const GanPair& gan, const FilterDescriptor& f) {
  const Layer& l = layer_of(gan, f);
  if (!l.weight.has_grad() || !l.bias.has_grad())
    throw std::logic_error("importance accumulation before any backward pass");
  const int fan_in = l.fan_in();
  const auto& gw = l.weight.grad();
  double acc = 0.0;
  for (int j = 0; j < fan_in; ++j) {
    const double g = gw[static_cast<std::size_t>(f.output_index) * fan_in + j];
    acc += g * g;
  }
  const double gb = l.bias.grad()[f.output_index];
  acc += gb * gb;
  return acc / static_cast<double>(fan_in + 1);
}

double span_mean_abs_grad(const GanPair& gan, const FilterDescriptor& f) {
  const Layer& l = layer_of(gan, f);
  if (!l.weight.has_grad() || !l.bias.has_grad())
    throw std::logic_error("importance accumulation before any backward pass");
  const int fan_in = l.fan_in();
  const auto& gw = l.weight.grad();
  double acc = 0.0;
  for (int j = 0; j < fan_in; ++j)
    acc += std::abs(gw[static_cast<std::size_t>(f.output_index) * fan_in + j]);
  acc += std::abs(l.bias.grad()[f.output_index]);
  return acc / static_cast<double>(fan_in + 1);
}

std::vector<Tensor> net_params(GanPair& gan, Net net) {
  std::vector<Tensor> out;
  auto& layers = net == Net::G ? gan.g.layers : gan.d.layers;
  for (Layer& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

std::vector<ParamSpan> net_spans(const GanPair& gan, const FilterLayout& layout,
                                 Net net) {
  std::vector<ParamSpan> spans;
  for (const FilterDescriptor& f : layout.filters) {
    if (f.net != net) continue;
    const Layer& l = layer_of(gan, f);
    const int fan_in = l.fan_in();
    const int ordinal = layout.net_ordinal(f.filter_id);
    // weight row
    spans.push_back({f.layer * 2,
                     static_cast<std::size_t>(f.output_index) * fan_in,
                     static_cast<std::size_t>(fan_in), ordinal});
    // bias element
    spans.push_back({f.layer * 2 + 1, static_cast<std::size_t>(f.output_index),
                     1, ordinal});
  }
  return spans;
}

std::vector<Tensor> make_modulation(const GeneratorNet& g, bool requires_grad) {
  std::vector<Tensor> mods;
  for (const Layer& l : g.layers)
    mods.push_back(Tensor({l.out_units()}, requires_grad));
  return mods;
}

std::vector<Tensor> make_modulation(const DiscriminatorNet& d,
                                    bool requires_grad) {
  std::vector<Tensor> mods;
  for (const Layer& l : d.layers)
    mods.push_back(Tensor({l.out_units()}, requires_grad));
  return mods;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

void write_layer_line(std::ostream& os, const char* prefix, int index,
                      const Layer& l) {
  os << prefix << ' ' << index << ' ' << (l.conv ? "conv" : "dense");
  for (int d : l.weight.shape()) os << ' ' << d;
  os << " padding " << l.padding << '\n';
}

Layer read_layer_line(std::istream& is) {
  int index;
  std::string kind;
  is >> index >> kind;
  Layer l;
  l.conv = kind == "conv";
  Shape ws;
  const int ndims = l.conv ? 4 : 2;
  for (int i = 0; i < ndims; ++i) {
    int d;
    is >> d;
    ws.push_back(d);
  }
  std::string pad_key;
  is >> pad_key >> l.padding;
  if (pad_key != "padding")
    throw std::runtime_error("malformed checkpoint layer line");
  l.weight = Tensor(ws, true);
  l.bias = Tensor({ws[0]}, true);
  return l;
}

void write_raw(std::ostream& os, const Tensor& t) {
  os.write(reinterpret_cast<const char*>(t.data().data()),
           static_cast<std::streamsize>(t.data().size() * sizeof(double)));
}

void read_raw(std::istream& is, Tensor& t) {
  is.read(reinterpret_cast<char*>(t.data().data()),
          static_cast<std::streamsize>(t.data().size() * sizeof(double)));
  if (!is) throw std::runtime_error("truncated checkpoint payload");
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os << "rickgan-checkpoint v1\n";
  os << "arch " << arch_name(ckpt.gan.g.arch) << '\n';
  os << "dz " << ckpt.gan.g.dz << '\n';
  os << "iteration " << ckpt.iteration << '\n';
  os << "rng_seed " << ckpt.rng_seed << '\n';
  os << "g_layers " << ckpt.gan.g.layers.size() << '\n';
  for (std::size_t i = 0; i < ckpt.gan.g.layers.size(); ++i)
    write_layer_line(os, "g_layer", static_cast<int>(i), ckpt.gan.g.layers[i]);
  os << "d_layers " << ckpt.gan.d.layers.size() << '\n';
  for (std::size_t i = 0; i < ckpt.gan.d.layers.size(); ++i)
    write_layer_line(os, "d_layer", static_cast<int>(i), ckpt.gan.d.layers[i]);
  os << "filters " << ckpt.bank_states.size() << '\n';
  os << "bank " << ckpt.bank_states << '\n';
  os << "prune_rounds";
  for (int r : ckpt.prune_rounds) os << ' ' << r;
  os << '\n';
  os << "header_end\n";
  for (const Layer& l : ckpt.gan.g.layers) {
    write_raw(os, l.weight);
    write_raw(os, l.bias);
  }
  for (const Layer& l : ckpt.gan.d.layers) {
    write_raw(os, l.weight);
    write_raw(os, l.bias);
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string magic, version;
  is >> magic >> version;
  if (magic != "rickgan-checkpoint" || version != "v1")
    throw std::runtime_error("unrecognised checkpoint header");
  Checkpoint ckpt;
  std::string key;
  std::size_t n_filters = 0;
  while (is >> key && key != "header_end") {
    if (key == "arch") {
      std::string tag;
      is >> tag;
      ckpt.gan.g.arch = parse_arch(tag);
      ckpt.gan.d.arch = ckpt.gan.g.arch;
    } else if (key == "dz") {
      is >> ckpt.gan.g.dz;
    } else if (key == "iteration") {
      is >> ckpt.iteration;
    } else if (key == "rng_seed") {
      is >> ckpt.rng_seed;
    } else if (key == "g_layers" || key == "d_layers") {
      std::size_t n;
      is >> n;
      auto& layers = key[0] == 'g' ? ckpt.gan.g.layers : ckpt.gan.d.layers;
      const std::string expect = key[0] == 'g' ? "g_layer" : "d_layer";
      for (std::size_t i = 0; i < n; ++i) {
        std::string lk;
        is >> lk;
        if (lk != expect) throw std::runtime_error("malformed checkpoint header");
        layers.push_back(read_layer_line(is));
      }
    } else if (key == "filters") {
      is >> n_filters;
    } else if (key == "bank") {
      is >> ckpt.bank_states;
      if (ckpt.bank_states.size() != n_filters)
        throw std::runtime_error("memory bank length mismatch in checkpoint");
    } else if (key == "prune_rounds") {
      ckpt.prune_rounds.resize(n_filters);
      for (std::size_t i = 0; i < n_filters; ++i) is >> ckpt.prune_rounds[i];
    } else {
      throw std::runtime_error("unknown checkpoint header key: " + key);
    }
  }
  if (key != "header_end") throw std::runtime_error("truncated checkpoint header");
  is.get();  // consume the newline before the binary payload
  for (Layer& l : ckpt.gan.g.layers) {
    read_raw(is, l.weight);
    read_raw(is, l.bias);
  }
  for (Layer& l : ckpt.gan.d.layers) {
    read_raw(is, l.weight);
    read_raw(is, l.bias);
  }
  return ckpt;
}

}  // namespace rick
