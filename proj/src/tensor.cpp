#include "rick/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace rick {

int shape_size(const Shape& s) {
  int n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

struct Tensor::Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first use
  bool requires_grad = false;
};

Tensor::Tensor(Shape shape, bool requires_grad) {
  node_ = std::make_shared<Node>();
  node_->data.assign(static_cast<std::size_t>(shape_size(shape)), 0.0);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (static_cast<int>(data.size()) != shape_size(shape))
    throw std::invalid_argument("data length does not match shape");
  Tensor t;
  t.node_ = std::make_shared<Node>();
  t.node_->shape = std::move(shape);
  t.node_->data = std::move(data);
  t.node_->requires_grad = requires_grad;
  check_finite(t, "tensor construction");
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(std::move(shape), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  for (double& x : t.data()) x = v;
  return t;
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  for (double& x : t.data()) x = stddev * rng.next_gaussian();
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::size() const { return static_cast<int>(node_->data.size()); }
bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool v) { node_->requires_grad = v; }

std::vector<double>& Tensor::data() { return node_->data; }
const std::vector<double>& Tensor::data() const { return node_->data; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::vector<double>& Tensor::grad() {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty())
    throw std::logic_error("gradient has not been populated");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) throw std::logic_error("item() requires a scalar tensor");
  return node_->data[0];
}

Tensor Tensor::clone() const {
  Tensor t;
  t.node_ = std::make_shared<Node>(*node_);
  t.node_->grad.clear();
  return t;
}

void check_finite(const Tensor& t, const std::string& what) {
  for (double v : t.data())
    if (!std::isfinite(v))
      throw std::domain_error("non-finite value in " + what);
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

namespace {

bool track_any(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts)
    if (t->requires_grad()) return true;
  return false;
}

}  // namespace

Tensor Graph::record(Shape shape, bool track, std::function<void()> bw) {
  Tensor out(std::move(shape), track);
  if (track) tape_.push_back({out, std::move(bw)});
  return out;
}

void Graph::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::logic_error("backward requires a scalar loss");
  if (!std::isfinite(loss.item()))
    throw std::domain_error("non-finite loss in backward");
  Tensor seed = loss;  // shares storage; grants grad write access
  seed.grad()[0] += 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    if (!it->out.has_grad()) continue;  // path does not reach the loss
    it->backward();
  }
  tape_.clear();
}

Tensor Graph::dense(Tensor x, Tensor w, Tensor b) {
  if (x.shape().size() != 2 || w.shape().size() != 2 || b.shape().size() != 1)
    throw std::invalid_argument("dense expects x[B,I], w[O,I], b[O]");
  const int B = x.shape()[0], I = x.shape()[1];
  const int O = w.shape()[0];
  if (w.shape()[1] != I || b.shape()[0] != O)
    throw std::invalid_argument("dense shape mismatch");

  Tensor out = record({B, O}, track_any({&x, &w, &b}), {});
  const auto& xv = x.data();
  const auto& wv = w.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (int i = 0; i < B; ++i)
    for (int o = 0; o < O; ++o) {
      double acc = bv[o];
      for (int j = 0; j < I; ++j) acc += xv[i * I + j] * wv[o * I + j];
      ov[i * O + o] = acc;
    }
  if (out.requires_grad()) {
    tape_.back().backward = [x, w, b, out, B, I, O]() mutable {
      const auto& go = out.grad();
      const auto& xv = x.data();
      const auto& wv = w.data();
      if (x.requires_grad()) {
        auto& gx = x.grad();
        for (int i = 0; i < B; ++i)
          for (int o = 0; o < O; ++o) {
            const double g = go[i * O + o];
            for (int j = 0; j < I; ++j) gx[i * I + j] += g * wv[o * I + j];
          }
      }
      if (w.requires_grad()) {
        auto& gw = w.grad();
        for (int i = 0; i < B; ++i)
          for (int o = 0; o < O; ++o) {
            const double g = go[i * O + o];
            for (int j = 0; j < I; ++j) gw[o * I + j] += g * xv[i * I + j];
          }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (int i = 0; i < B; ++i)
          for (int o = 0; o < O; ++o) gb[o] += go[i * O + o];
      }
    };
  }
  return out;
}

Tensor Graph::conv2d(Tensor x, Tensor k, Tensor b, int padding) {
  if (x.shape().size() != 4 || k.shape().size() != 4 || b.shape().size() != 1)
    throw std::invalid_argument("conv2d expects x[B,C,H,W], k[O,C,kh,kw], b[O]");
  const int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
            W = x.shape()[3];
  const int O = k.shape()[0], KC = k.shape()[1], KH = k.shape()[2],
            KW = k.shape()[3];
  if (KC != C || b.shape()[0] != O)
    throw std::invalid_argument("conv2d channel mismatch");
  if (KH % 2 == 0 || KW % 2 == 0)
    throw std::invalid_argument("conv2d requires odd kernel size");
  if (padding < 0) throw std::invalid_argument("conv2d padding must be >= 0");
  const int OH = H + 2 * padding - KH + 1;
  const int OW = W + 2 * padding - KW + 1;
  if (OH <= 0 || OW <= 0)
    throw std::invalid_argument("conv2d kernel larger than padded input");

  Tensor out = record({B, O, OH, OW}, track_any({&x, &k, &b}), {});
  const auto& xv = x.data();
  const auto& kv = k.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  auto xi = [C, H, W](int bi, int c, int y, int xx) {
    return ((bi * C + c) * H + y) * W + xx;
  };
  auto ki = [C, KH, KW](int o, int c, int dy, int dx) {
    return ((o * C + c) * KH + dy) * KW + dx;
  };
  auto oi = [O, OH, OW](int bi, int o, int y, int xx) {
    return ((bi * O + o) * OH + y) * OW + xx;
  };
  for (int bi = 0; bi < B; ++bi)
    for (int o = 0; o < O; ++o)
      for (int y = 0; y < OH; ++y)
        for (int xx = 0; xx < OW; ++xx) {
          double acc = bv[o];
          for (int c = 0; c < C; ++c)
            for (int dy = 0; dy < KH; ++dy) {
              const int sy = y + dy - padding;
              if (sy < 0 || sy >= H) continue;
              for (int dx = 0; dx < KW; ++dx) {
                const int sx = xx + dx - padding;
                if (sx < 0 || sx >= W) continue;
                acc += xv[xi(bi, c, sy, sx)] * kv[ki(o, c, dy, dx)];
              }
            }
          ov[oi(bi, o, y, xx)] = acc;
        }
  if (out.requires_grad()) {
    tape_.back().backward = [x, k, b, out, B, C, H, W, O, KH, KW, OH, OW,
                             padding, xi, ki, oi]() mutable {
      const auto& go = out.grad();
      const auto& xv = x.data();
      const auto& kv = k.data();
      const bool need_x = x.requires_grad();
      const bool need_k = k.requires_grad();
      const bool need_b = b.requires_grad();
      for (int bi = 0; bi < B; ++bi)
        for (int o = 0; o < O; ++o)
          for (int y = 0; y < OH; ++y)
            for (int xx = 0; xx < OW; ++xx) {
              const double g = go[oi(bi, o, y, xx)];
              if (g == 0.0) continue;
              if (need_b) b.grad()[o] += g;
              for (int c = 0; c < C; ++c)
                for (int dy = 0; dy < KH; ++dy) {
                  const int sy = y + dy - padding;
                  if (sy < 0 || sy >= H) continue;
                  for (int dx = 0; dx < KW; ++dx) {
                    const int sx = xx + dx - padding;
                    if (sx < 0 || sx >= W) continue;
                    if (need_x)
                      x.grad()[xi(bi, c, sy, sx)] += g * kv[ki(o, c, dy, dx)];
                    if (need_k)
                      k.grad()[ki(o, c, dy, dx)] += g * xv[xi(bi, c, sy, sx)];
                  }
                }
            }
    };
  }
  return out;
}

Tensor Graph::leaky_relu(Tensor x, double slope) {
  Tensor out = record(x.shape(), x.requires_grad(), {});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < xv.size(); ++i)
    ov[i] = xv[i] >= 0.0 ? xv[i] : slope * xv[i];
  if (out.requires_grad()) {
    tape_.back().backward = [x, out, slope]() mutable {
      const auto& go = out.grad();
      const auto& xv = x.data();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < xv.size(); ++i)
        gx[i] += go[i] * (xv[i] >= 0.0 ? 1.0 : slope);
    };
  }
  return out;
}

Tensor Graph::sigmoid(Tensor x) {
  Tensor out = record(x.shape(), x.requires_grad(), {});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < xv.size(); ++i)
    ov[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  if (out.requires_grad()) {
    tape_.back().backward = [x, out]() mutable {
      const auto& go = out.grad();
      const auto& ov = out.data();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < ov.size(); ++i)
        gx[i] += go[i] * ov[i] * (1.0 - ov[i]);
    };
  }
  return out;
}

Tensor Graph::tanh(Tensor x) {
  Tensor out = record(x.shape(), x.requires_grad(), {});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = std::tanh(xv[i]);
  if (out.requires_grad()) {
    tape_.back().backward = [x, out]() mutable {
      const auto& go = out.grad();
      const auto& ov = out.data();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < ov.size(); ++i)
        gx[i] += go[i] * (1.0 - ov[i] * ov[i]);
    };
  }
  return out;
}

Tensor Graph::upsample2x(Tensor x) {
  if (x.shape().size() != 4)
    throw std::invalid_argument("upsample2x expects NCHW");
  const int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
            W = x.shape()[3];
  Tensor out = record({B, C, 2 * H, 2 * W}, x.requires_grad(), {});
  const auto& xv = x.data();
  auto& ov = out.data();
  const int OW = 2 * W, OH = 2 * H;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < OH; ++y)
        for (int xx = 0; xx < OW; ++xx)
          ov[((b * C + c) * OH + y) * OW + xx] =
              xv[((b * C + c) * H + y / 2) * W + xx / 2];
  if (out.requires_grad()) {
    tape_.back().backward = [x, out, B, C, H, W, OH, OW]() mutable {
      const auto& go = out.grad();
      auto& gx = x.grad();
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
          for (int y = 0; y < OH; ++y)
            for (int xx = 0; xx < OW; ++xx)
              gx[((b * C + c) * H + y / 2) * W + xx / 2] +=
                  go[((b * C + c) * OH + y) * OW + xx];
    };
  }
  return out;
}

Tensor Graph::avgpool2x(Tensor x) {
  if (x.shape().size() != 4)
    throw std::invalid_argument("avgpool2x expects NCHW");
  const int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
            W = x.shape()[3];
  if (H % 2 != 0 || W % 2 != 0)
    throw std::invalid_argument("avgpool2x requires even H and W");
  const int OH = H / 2, OW = W / 2;
  Tensor out = record({B, C, OH, OW}, x.requires_grad(), {});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < OH; ++y)
        for (int xx = 0; xx < OW; ++xx) {
          double acc = 0.0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              acc += xv[((b * C + c) * H + 2 * y + dy) * W + 2 * xx + dx];
          ov[((b * C + c) * OH + y) * OW + xx] = 0.25 * acc;
        }
  if (out.requires_grad()) {
    tape_.back().backward = [x, out, B, C, H, W, OH, OW]() mutable {
      const auto& go = out.grad();
      auto& gx = x.grad();
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
          for (int y = 0; y < OH; ++y)
            for (int xx = 0; xx < OW; ++xx) {
              const double g = 0.25 * go[((b * C + c) * OH + y) * OW + xx];
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                  gx[((b * C + c) * H + 2 * y + dy) * W + 2 * xx + dx] += g;
            }
    };
  }
  return out;
}

Tensor Graph::reshape(Tensor x, Shape shape) {
  if (shape_size(shape) != x.size())
    throw std::invalid_argument("reshape size mismatch");
  Tensor out = record(std::move(shape), x.requires_grad(), {});
  out.data() = x.data();
  if (out.requires_grad()) {
    tape_.back().backward = [x, out]() mutable {
      const auto& go = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    };
  }
  return out;
}

Tensor Graph::add(Tensor a, Tensor b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("add shape mismatch");
  Tensor out = record(a.shape(), track_any({&a, &b}), {});
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i];
  if (out.requires_grad()) {
    tape_.back().backward = [a, b, out]() mutable {
      const auto& go = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    };
  }
  return out;
}

Tensor Graph::sub(Tensor a, Tensor b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("sub shape mismatch");
  Tensor out = record(a.shape(), track_any({&a, &b}), {});
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] - bv[i];
  if (out.requires_grad()) {
    tape_.back().backward = [a, b, out]() mutable {
      const auto& go = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    };
  }
  return out;
}

Tensor Graph::mul(Tensor a, Tensor b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("mul shape mismatch");
  Tensor out = record(a.shape(), track_any({&a, &b}), {});
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * bv[i];
  if (out.requires_grad()) {
    tape_.back().backward = [a, b, out]() mutable {
      const auto& go = out.grad();
      const auto& av = a.data();
      const auto& bv = b.data();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
      }
    };
  }
  return out;
}

Tensor Graph::affine(Tensor x, double scale, double shift) {
  Tensor out = record(x.shape(), x.requires_grad(), {});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = scale * xv[i] + shift;
  if (out.requires_grad()) {
    tape_.back().backward = [x, out, scale]() mutable {
      const auto& go = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * scale;
    };
  }
  return out;
}

Tensor Graph::clamp(Tensor x, double lo, double hi) {
  Tensor out = record(x.shape(), x.requires_grad(), {});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < xv.size(); ++i)
    ov[i] = xv[i] < lo ? lo : (xv[i] > hi ? hi : xv[i]);
  if (out.requires_grad()) {
    tape_.back().backward = [x, out, lo, hi]() mutable {
      const auto& go = out.grad();
      const auto& xv = x.data();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i)
        if (xv[i] > lo && xv[i] < hi) gx[i] += go[i];
    };
  }
  return out;
}

Tensor Graph::log(Tensor x) {
  Tensor out = record(x.shape(), x.requires_grad(), {});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (xv[i] <= 0.0) throw std::domain_error("log of non-positive value");
    ov[i] = std::log(xv[i]);
  }
  if (out.requires_grad()) {
    tape_.back().backward = [x, out]() mutable {
      const auto& go = out.grad();
      const auto& xv = x.data();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] / xv[i];
    };
  }
  return out;
}

Tensor Graph::mean_all(Tensor x) {
  Tensor out = record({1}, x.requires_grad(), {});
  const auto& xv = x.data();
  double acc = 0.0;
  for (double v : xv) acc += v;
  const double inv_n = 1.0 / static_cast<double>(xv.size());
  out.data()[0] = acc * inv_n;
  if (out.requires_grad()) {
    tape_.back().backward = [x, out, inv_n]() mutable {
      const double g = out.grad()[0] * inv_n;
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    };
  }
  return out;
}

Tensor Graph::sum_all(Tensor x) {
  Tensor out = record({1}, x.requires_grad(), {});
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  out.data()[0] = acc;
  if (out.requires_grad()) {
    tape_.back().backward = [x, out]() mutable {
      const double g = out.grad()[0];
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    };
  }
  return out;
}

Tensor Graph::scale_filters(Tensor x, Tensor m) {
  if (x.shape().empty() || m.shape().size() != 1 ||
      m.shape()[0] != x.shape()[0])
    throw std::invalid_argument("scale_filters expects m[F] matching x's first dim");
  const int F = x.shape()[0];
  const int R = x.size() / F;
  Tensor out = record(x.shape(), track_any({&x, &m}), {});
  const auto& xv = x.data();
  const auto& mv = m.data();
  auto& ov = out.data();
  for (int f = 0; f < F; ++f) {
    const double s = 1.0 + mv[f];
    for (int r = 0; r < R; ++r) ov[f * R + r] = xv[f * R + r] * s;
  }
  if (out.requires_grad()) {
    tape_.back().backward = [x, m, out, F, R]() mutable {
      const auto& go = out.grad();
      const auto& xv = x.data();
      const auto& mv = m.data();
      if (x.requires_grad()) {
        auto& gx = x.grad();
        for (int f = 0; f < F; ++f) {
          const double s = 1.0 + mv[f];
          for (int r = 0; r < R; ++r) gx[f * R + r] += go[f * R + r] * s;
        }
      }
      if (m.requires_grad()) {
        auto& gm = m.grad();
        for (int f = 0; f < F; ++f) {
          double acc = 0.0;
          for (int r = 0; r < R; ++r) acc += go[f * R + r] * xv[f * R + r];
          gm[f] += acc;
        }
      }
    };
  }
  return out;
}

}  // namespace rick
