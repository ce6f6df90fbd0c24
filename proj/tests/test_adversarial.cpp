#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "rick/adversarial.hpp"
#include "rick/models.hpp"

using namespace rick;

namespace {

Dataset ring_data(int n, Rng& rng) {
  Dataset d;
  d.dim = 2;
  for (int i = 0; i < n; ++i) {
    const double a = 6.2831853 * (i % 8) / 8.0;
    d.push({4.0 * std::cos(a) + 0.15 * rng.next_gaussian(),
            4.0 * std::sin(a) + 0.15 * rng.next_gaussian()});
  }
  return d;
}

std::vector<double> flatten_params(GanPair& gan, Net net) {
  std::vector<double> out;
  for (Tensor& t : net_params(gan, net))
    out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("d_loss values from hand arithmetic") {
  Graph g;
  auto half = Tensor::from({1}, {0.5});
  CHECK(d_loss(g, half, half).item() ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  auto near_one = Tensor::from({1}, {1.0 - 1e-7});
  auto near_zero = Tensor::from({1}, {1e-7});
  CHECK(d_loss(g, near_one, near_zero).item() == doctest::Approx(0.0).epsilon(1e-6));

  auto r = Tensor::from({1}, {0.8});
  auto f = Tensor::from({1}, {0.3});
  CHECK(d_loss(g, r, f).item() ==
        doctest::Approx(-std::log(0.8) - std::log(0.7)).epsilon(1e-12));
}

TEST_CASE("g_loss values from hand arithmetic") {
  Graph g;
  CHECK(g_loss(g, Tensor::from({1}, {1.0 - 1e-7})).item() ==
        doctest::Approx(0.0).epsilon(1e-6));
  CHECK(g_loss(g, Tensor::from({1}, {0.5})).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(g_loss(g, Tensor::from({2}, {0.25, 0.75})).item() ==
        doctest::Approx(0.5 * (std::log(4.0) + std::log(4.0 / 3.0)))
            .epsilon(1e-12));
}

TEST_CASE("d_loss swap symmetry") {
  Rng rng(17);
  Graph g;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> real(4), fake(4), sr(4), sf(4);
    for (int i = 0; i < 4; ++i) {
      real[i] = rng.next_double();
      fake[i] = rng.next_double();
      sr[i] = 1.0 - fake[i];
      sf[i] = 1.0 - real[i];
    }
    const double a = d_loss(g, Tensor::from({4}, real), Tensor::from({4}, fake)).item();
    const double b = d_loss(g, Tensor::from({4}, sr), Tensor::from({4}, sf)).item();
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }
}

TEST_CASE("g_loss is monotone decreasing in each d_fake entry") {
  Rng rng(23);
  Graph g;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(3);
    for (double& x : v) x = 0.05 + 0.9 * rng.next_double();
    const double base = g_loss(g, Tensor::from({3}, v)).item();
    const int k = static_cast<int>(rng.next_below(3));
    v[k] = std::min(1.0 - 2e-7, v[k] + 0.01);
    CHECK(g_loss(g, Tensor::from({3}, v)).item() < base);
  }
}

TEST_CASE("train_step_d updates only the discriminator") {
  Rng rng(5);
  GanPair gan = make_gan(Arch::PointMlp, 4, rng);
  FilterLayout layout = build_filter_layout(gan);
  Dataset data = ring_data(64, rng);
  AdamOptimizer opt_d(net_params(gan, Net::D), net_spans(gan, layout, Net::D),
                      0.002, 1000);

  const auto g_before = flatten_params(gan, Net::G);
  const auto d_before = flatten_params(gan, Net::D);
  std::vector<std::uint8_t> all_on(layout.n_d, 1);
  Graph g;
  opt_d.zero_grad();
  train_step_d(g, gan, data, 4, opt_d, all_on, 0, rng);
  CHECK(bitwise_equal(flatten_params(gan, Net::G), g_before));
  CHECK_FALSE(bitwise_equal(flatten_params(gan, Net::D), d_before));

  // all-Preserve mask leaves D untouched as well
  const auto d_now = flatten_params(gan, Net::D);
  std::vector<std::uint8_t> all_off(layout.n_d, 0);
  opt_d.zero_grad();
  train_step_d(g, gan, data, 4, opt_d, all_off, 1, rng);
  CHECK(bitwise_equal(flatten_params(gan, Net::D), d_now));
}

TEST_CASE("train_step_g updates only the generator") {
  Rng rng(6);
  GanPair gan = make_gan(Arch::PointMlp, 4, rng);
  FilterLayout layout = build_filter_layout(gan);
  AdamOptimizer opt_g(net_params(gan, Net::G), net_spans(gan, layout, Net::G),
                      0.002, 1000);
  const auto d_before = flatten_params(gan, Net::D);
  const auto g_before = flatten_params(gan, Net::G);
  std::vector<std::uint8_t> all_on(layout.n_g, 1);
  Graph g;
  opt_g.zero_grad();
  train_step_g(g, gan, 4, opt_g, all_on, 0, rng);
  CHECK(bitwise_equal(flatten_params(gan, Net::D), d_before));
  CHECK_FALSE(bitwise_equal(flatten_params(gan, Net::G), g_before));
}

TEST_CASE("warmup performs exactly n steps and leaves G alone") {
  Rng rng(7);
  GanPair gan = make_gan(Arch::PointMlp, 4, rng);
  FilterLayout layout = build_filter_layout(gan);
  Dataset data = ring_data(64, rng);
  AdamOptimizer opt_d(net_params(gan, Net::D), net_spans(gan, layout, Net::D),
                      0.002, 1000);
  std::vector<std::uint8_t> all_on(layout.n_d, 1);
  Graph g;

  const auto g_before = flatten_params(gan, Net::G);
  const auto d_before = flatten_params(gan, Net::D);
  warmup_d(g, gan, data, 4, opt_d, all_on, 0, rng);
  CHECK(bitwise_equal(flatten_params(gan, Net::D), d_before));
  CHECK(opt_d.step_count() == 0);

  warmup_d(g, gan, data, 4, opt_d, all_on, 25, rng);
  CHECK(opt_d.step_count() == 25);
  CHECK(bitwise_equal(flatten_params(gan, Net::G), g_before));
}

TEST_CASE("warmup loss decreases in median over 100 steps across 5 seeds") {
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    GanPair gan = make_gan(Arch::PointMlp, 4, rng);
    FilterLayout layout = build_filter_layout(gan);
    Dataset data = ring_data(64, rng);
    AdamOptimizer opt_d(net_params(gan, Net::D),
                        net_spans(gan, layout, Net::D), 0.002, 1000);
    std::vector<std::uint8_t> all_on(layout.n_d, 1);
    Graph g;
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 100; ++i) {
      opt_d.zero_grad();
      const double loss = train_step_d(g, gan, data, 4, opt_d, all_on, i, rng);
      if (i < 10) first += loss;
      if (i >= 90) last += loss;
    }
    if (last < first) ++improved;
  }
  CHECK(improved >= 3);
}

TEST_CASE("sample_real_batch draws with replacement only beyond k") {
  Rng rng(9);
  Dataset d;
  d.dim = 1;
  for (int i = 0; i < 6; ++i) d.push({static_cast<double>(i)});
  // batch <= k: all distinct
  Tensor b = sample_real_batch(d, 6, rng);
  std::vector<double> vals = b.data();
  std::sort(vals.begin(), vals.end());
  for (int i = 0; i < 6; ++i) CHECK(vals[i] == doctest::Approx(i));
  // batch > k works and only uses valid rows
  Tensor big = sample_real_batch(d, 20, rng);
  for (double v : big.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 5.0);
  }
}

TEST_CASE("latent sampling moments and determinism") {
  Rng rng(31);
  Tensor z = sample_latent(100000, 1, rng);
  double mean = 0.0;
  for (double v : z.data()) mean += v;
  mean /= z.size();
  double var = 0.0;
  for (double v : z.data()) var += (v - mean) * (v - mean);
  var /= z.size();
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.05);

  Rng r1(77), r2(77);
  Tensor a = sample_latent(16, 4, r1);
  Tensor b = sample_latent(16, 4, r2);
  CHECK(std::memcmp(a.data().data(), b.data().data(),
                    a.size() * sizeof(double)) == 0);
}
