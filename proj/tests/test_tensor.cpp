#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "rick/optim.hpp"
#include "rick/rng.hpp"
#include "rick/tensor.hpp"

using namespace rick;

namespace {

// Central finite differences of a scalar-valued function of one tensor's
// entries against the analytic gradient populated by backward().
double max_grad_error(Tensor& param, const std::function<double()>& eval,
                      const std::vector<double>& analytic, double eps = 1e-5) {
  double worst = 0.0;
  auto& pv = param.data();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double keep = pv[i];
    pv[i] = keep + eps;
    const double up = eval();
    pv[i] = keep - eps;
    const double dn = eval();
    pv[i] = keep;
    const double fd = (up - dn) / (2.0 * eps);
    const double err = std::abs(analytic[i] - fd) /
                       std::max({1.0, std::abs(analytic[i]), std::abs(fd)});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace

TEST_CASE("dense forward matches hand arithmetic") {
  Graph g;
  // identity weight
  auto y = g.dense(Tensor::from({1, 2}, {1, 2}),
                   Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor::zeros({2}));
  CHECK(y.data()[0] == doctest::Approx(1.0));
  CHECK(y.data()[1] == doctest::Approx(2.0));
  // zero input passes bias through
  auto y2 = g.dense(Tensor::from({1, 2}, {0, 0}),
                    Tensor::from({2, 2}, {5, -1, 2, 7}),
                    Tensor::from({2}, {3, 4}));
  CHECK(y2.data()[0] == doctest::Approx(3.0));
  CHECK(y2.data()[1] == doctest::Approx(4.0));
  // [[1,1]] x [[2,3]]^T + [1] = [[6]]
  auto y3 = g.dense(Tensor::from({1, 2}, {1, 1}), Tensor::from({1, 2}, {2, 3}),
                    Tensor::from({1}, {1}));
  CHECK(y3.data()[0] == doctest::Approx(6.0));
}

TEST_CASE("conv2d forward matches hand arithmetic") {
  Graph g;
  // 1x1 identity kernel
  auto y = g.conv2d(Tensor::full({1, 1, 3, 3}, 1.0),
                    Tensor::from({1, 1, 1, 1}, {1.0}), Tensor::zeros({1}), 0);
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  for (double v : y.data()) CHECK(v == doctest::Approx(1.0));

  // all-zero kernels -> all-bias output
  auto y2 = g.conv2d(Tensor::full({1, 2, 4, 4}, 3.0),
                     Tensor::zeros({2, 2, 3, 3}), Tensor::from({2}, {7, -2}),
                     1);
  for (int o = 0; o < 2; ++o)
    for (int i = 0; i < 16; ++i)
      CHECK(y2.data()[o * 16 + i] == doctest::Approx(o == 0 ? 7.0 : -2.0));

  // 3x3 averaging kernel over [[1..9]] with padding 0 -> [[5]]
  auto y3 = g.conv2d(Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}),
                     Tensor::full({1, 1, 3, 3}, 1.0 / 9.0), Tensor::zeros({1}),
                     0);
  CHECK(y3.size() == 1);
  CHECK(y3.data()[0] == doctest::Approx(5.0));
}

TEST_CASE("activations hit their fixed points") {
  Graph g;
  CHECK(g.leaky_relu(Tensor::scalar(0.0), 0.2).item() == doctest::Approx(0.0));
  CHECK(g.sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5));
  // tanh oddness via two forward calls
  const double a = g.tanh(Tensor::scalar(0.7)).item();
  const double b = g.tanh(Tensor::scalar(-0.7)).item();
  CHECK(a == doctest::Approx(-b).epsilon(1e-15));
}

TEST_CASE("backward on simple closed forms") {
  Graph g;
  Tensor w = Tensor::from({3}, {2.0, -1.0, 0.5}, true);
  g.backward(g.sum_all(w));
  for (double v : w.grad()) CHECK(v == doctest::Approx(1.0));

  Tensor w2 = Tensor::from({2}, {1.0, -2.0}, true);
  auto loss = g.affine(g.sum_all(g.mul(w2, w2)), 0.5, 0.0);
  g.backward(loss);
  CHECK(w2.grad()[0] == doctest::Approx(1.0));
  CHECK(w2.grad()[1] == doctest::Approx(-2.0));
}

TEST_CASE("backward requires a scalar loss") {
  Graph g;
  Tensor w = Tensor::from({2}, {1.0, 2.0}, true);
  auto y = g.affine(w, 2.0, 0.0);
  CHECK_THROWS_AS(g.backward(y), std::logic_error);
}

TEST_CASE("composite network gradient matches finite differences") {
  Rng rng(11);
  Tensor x = Tensor::randn({3, 4}, rng);
  Tensor w1 = Tensor::randn({5, 4}, rng, 0.5, true);
  Tensor b1 = Tensor::randn({5}, rng, 0.1, true);
  Tensor w2 = Tensor::randn({2, 5}, rng, 0.5, true);
  Tensor b2 = Tensor::randn({2}, rng, 0.1, true);

  auto eval = [&]() {
    Graph g;
    auto h = g.leaky_relu(g.dense(x, w1, b1), 0.2);
    auto y = g.tanh(g.dense(h, w2, b2));
    return g.mean_all(g.mul(y, y)).item();
  };

  Graph g;
  auto h = g.leaky_relu(g.dense(x, w1, b1), 0.2);
  auto y = g.tanh(g.dense(h, w2, b2));
  auto loss = g.mean_all(g.mul(y, y));
  g.backward(loss);

  CHECK(max_grad_error(w1, eval, w1.grad()) < 1e-6);
  CHECK(max_grad_error(b1, eval, b1.grad()) < 1e-6);
  CHECK(max_grad_error(w2, eval, w2.grad()) < 1e-6);
  CHECK(max_grad_error(b2, eval, b2.grad()) < 1e-6);
}

TEST_CASE("backward is deterministic given identical inputs") {
  Rng rng(7);
  Tensor x = Tensor::randn({2, 3}, rng);
  Tensor w = Tensor::randn({4, 3}, rng, 1.0, true);
  Tensor b = Tensor::randn({4}, rng, 1.0, true);

  auto run = [&]() {
    w.zero_grad();
    b.zero_grad();
    Graph g;
    auto y = g.sigmoid(g.dense(x, w, b));
    g.backward(g.mean_all(y));
    return std::make_pair(w.grad(), b.grad());
  };
  auto [gw1, gb1] = run();
  auto [gw2, gb2] = run();
  CHECK(std::memcmp(gw1.data(), gw2.data(), gw1.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(gb1.data(), gb2.data(), gb1.size() * sizeof(double)) == 0);
}

TEST_CASE("non-finite values are rejected, not propagated") {
  CHECK_THROWS_AS(Tensor::from({1}, {std::nan("")}), std::domain_error);
  Graph g;
  Tensor x = Tensor::from({1}, {-1.0}, true);
  CHECK_THROWS_AS(g.log(x), std::domain_error);
}

TEST_CASE("cosine learning-rate schedule endpoints and midpoint") {
  CosineSchedule s{0.002, 1000};
  CHECK(s.lr(0) == doctest::Approx(0.002));
  CHECK(s.lr(1000) == doctest::Approx(0.0));
  CHECK(s.lr(500) == doctest::Approx(0.001));
}

TEST_CASE("adam_step honours the per-filter update mask") {
  Rng rng(3);
  Tensor p = Tensor::randn({4, 2}, rng, 1.0, true);
  const std::vector<double> before = p.data();
  // two filters of 4 entries each
  std::vector<ParamSpan> spans = {{0, 0, 4, 0}, {0, 4, 4, 1}};
  AdamOptimizer opt({p}, spans, 0.002, 100);
  auto& grad = p.grad();
  for (double& gv : grad) gv = 1.0;

  std::vector<std::uint8_t> mask = {0, 1};  // freeze filter 0, update filter 1
  opt.step(0, mask);
  CHECK(std::memcmp(p.data().data(), before.data(), 4 * sizeof(double)) == 0);
  for (int i = 4; i < 8; ++i) CHECK(p.data()[i] != before[i]);
}

TEST_CASE("preserved filter is bitwise identical across many steps") {
  Rng rng(5);
  Tensor p = Tensor::randn({3, 3}, rng, 1.0, true);
  const std::vector<double> before = p.data();
  std::vector<ParamSpan> spans = {{0, 0, 3, 0}, {0, 3, 3, 1}, {0, 6, 3, 2}};
  AdamOptimizer opt({p}, spans, 0.002, 1000);
  std::vector<std::uint8_t> mask = {1, 0, 1};
  for (int it = 0; it < 100; ++it) {
    for (double& gv : p.grad()) gv = rng.next_gaussian();
    opt.step(it, mask);
  }
  CHECK(std::memcmp(p.data().data() + 3, before.data() + 3,
                    3 * sizeof(double)) == 0);
  CHECK(p.data()[0] != before[0]);
}

TEST_CASE("scale_filters with zero modulation is the identity") {
  Rng rng(9);
  Graph g;
  Tensor x = Tensor::randn({3, 5}, rng, 1.0, true);
  Tensor m = Tensor::zeros({3}, true);
  auto y = g.scale_filters(x, m);
  CHECK(std::memcmp(y.data().data(), x.data().data(),
                    x.size() * sizeof(double)) == 0);
}

TEST_CASE("scale_filters gradient matches finite differences") {
  Rng rng(13);
  Tensor x = Tensor::randn({4, 3}, rng, 1.0, true);
  Tensor m = Tensor::randn({4}, rng, 0.3, true);
  Tensor c = Tensor::randn({4, 3}, rng);  // fixed weights for the loss

  auto eval = [&]() {
    Graph g;
    return g.sum_all(g.mul(g.scale_filters(x, m), c)).item();
  };
  Graph g;
  g.backward(g.sum_all(g.mul(g.scale_filters(x, m), c)));
  CHECK(max_grad_error(x, eval, x.grad()) < 1e-6);
  CHECK(max_grad_error(m, eval, m.grad()) < 1e-6);
}
