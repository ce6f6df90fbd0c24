#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rick/rng.hpp"

namespace rick {

using Shape = std::vector<int>;

int shape_size(const Shape& s);

// Dense 64-bit-float tensor. Copies share storage; use clone() for a deep
// copy. The gradient buffer is allocated lazily on first write.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);

  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int size() const;
  bool requires_grad() const;
  void set_requires_grad(bool v);

  std::vector<double>& data();
  const std::vector<double>& data() const;

  bool has_grad() const;
  std::vector<double>& grad();  // allocates zeros on first use
  const std::vector<double>& grad() const;
  void zero_grad();

  double item() const;  // scalar tensors only
  Tensor clone() const;  // deep copy, detached from any graph

  bool same_storage(const Tensor& other) const {
    return node_ == other.node_;
  }

 private:
  struct Node;
  std::shared_ptr<Node> node_;
  friend class Graph;
};

// Throws std::domain_error if any value is non-finite.
void check_finite(const Tensor& t, const std::string& what);

// Reverse-mode tape. Operations append nodes in execution order; backward
// replays the tape once in reverse and then clears it. Parameters keep
// their accumulated gradients across backward calls.
class Graph {
 public:
  // layer primitives
  Tensor dense(Tensor x, Tensor w, Tensor b);
  Tensor conv2d(Tensor x, Tensor k, Tensor b, int padding);
  Tensor leaky_relu(Tensor x, double slope);
  Tensor sigmoid(Tensor x);
  Tensor tanh(Tensor x);
  Tensor upsample2x(Tensor x);  // nearest neighbour, NCHW
  Tensor avgpool2x(Tensor x);   // 2x2 mean, NCHW
  Tensor reshape(Tensor x, Shape shape);

  // elementwise / reduction
  Tensor add(Tensor a, Tensor b);
  Tensor sub(Tensor a, Tensor b);
  Tensor mul(Tensor a, Tensor b);
  Tensor affine(Tensor x, double scale, double shift);
  Tensor clamp(Tensor x, double lo, double hi);
  Tensor log(Tensor x);
  Tensor mean_all(Tensor x);
  Tensor sum_all(Tensor x);

  // Per-filter scalar modulation: rows of x (first dimension) scaled by
  // (1 + m[row]). With m == 0 the output equals x bit for bit.
  Tensor scale_filters(Tensor x, Tensor m);

  // Accumulates d(loss)/d(t) into every recorded tensor's grad, then
  // clears the tape. loss must be scalar.
  void backward(const Tensor& loss);

  std::size_t size() const { return tape_.size(); }
  bool empty() const { return tape_.empty(); }
  void clear() { tape_.clear(); }

 private:
  struct TapeEntry {
    Tensor out;
    std::function<void()> backward;
  };
  std::vector<TapeEntry> tape_;

  Tensor record(Shape shape, bool track, std::function<void()> bw);
};

}  // namespace rick
