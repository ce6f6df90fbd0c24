#include "rick/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "rick/adversarial.hpp"

namespace rick {

Matrix dataset_matrix(const Dataset& d) {
  Matrix m(d.count(), d.dim);
  m.v = d.values;
  return m;
}

double euclidean(const double* a, const double* b, int dim) {
  double acc = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

std::vector<double> ProjectionEmbedding::apply(const double* x) const {
  std::vector<double> out(static_cast<std::size_t>(out_dim), 0.0);
  for (int o = 0; o < out_dim; ++o) {
    double acc = 0.0;
    for (int i = 0; i < in_dim; ++i)
      acc += weights[static_cast<std::size_t>(o) * in_dim + i] * x[i];
    out[o] = acc;
  }
  return out;
}

ProjectionEmbedding make_projection_embedding(int in_dim, int out_dim,
                                              std::uint64_t seed) {
  ProjectionEmbedding emb;
  emb.in_dim = in_dim;
  emb.out_dim = out_dim;
  emb.weights.resize(static_cast<std::size_t>(in_dim) * out_dim);
  Rng rng(seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(out_dim));
  for (double& w : emb.weights) w = s * rng.next_gaussian();
  return emb;
}

DistanceFn embedded_distance(const ProjectionEmbedding& emb) {
  return [emb](const double* a, const double* b, int dim) {
    if (dim != emb.in_dim)
      throw std::invalid_argument("embedding dimension mismatch");
    const std::vector<double> ea = emb.apply(a);
    const std::vector<double> eb = emb.apply(b);
    return euclidean(ea.data(), eb.data(), emb.out_dim);
  };
}

// ---------------------------------------------------------------------------
// Jacobi eigendecomposition
// ---------------------------------------------------------------------------

void sym_eig(std::vector<double> a, int n, std::vector<double>& eigenvalues,
             std::vector<double>& eigenvectors) {
  eigenvectors.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) eigenvectors[static_cast<std::size_t>(i) * n + i] = 1.0;

  auto at = [&](int i, int j) -> double& {
    return a[static_cast<std::size_t>(i) * n + j];
  };
  auto vt = [&](int i, int j) -> double& {
    return eigenvectors[static_cast<std::size_t>(i) * n + j];
  };

  for (int sweep = 0; sweep < 128; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
    if (off < 1e-26) break;
    for (int p = 0; p < n - 1; ++p)
      for (int q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = vt(k, p), vkq = vt(k, q);
          vt(k, p) = c * vkp - s * vkq;
          vt(k, q) = s * vkp + c * vkq;
        }
      }
  }
  eigenvalues.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) eigenvalues[i] = at(i, i);
}

// ---------------------------------------------------------------------------
// Gaussian fits and Frechet distance
// ---------------------------------------------------------------------------

GaussianFit fit_gaussian(const Matrix& samples) {
  if (samples.rows < 2)
    throw std::invalid_argument("gaussian fit requires at least 2 samples");
  const int n = samples.rows, d = samples.cols;
  GaussianFit fit;
  fit.dim = d;
  fit.count = n;
  fit.mean.assign(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) fit.mean[j] += samples.row(i)[j];
  for (double& m : fit.mean) m /= n;

  fit.cov.assign(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* r = samples.row(i);
    for (int a = 0; a < d; ++a)
      for (int b = a; b < d; ++b)
        fit.cov[static_cast<std::size_t>(a) * d + b] +=
            (r[a] - fit.mean[a]) * (r[b] - fit.mean[b]);
  }
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) {
      const double c = fit.cov[static_cast<std::size_t>(a) * d + b] / (n - 1);
      fit.cov[static_cast<std::size_t>(a) * d + b] = c;
      fit.cov[static_cast<std::size_t>(b) * d + a] = c;
    }

  std::vector<double> evals, evecs;
  sym_eig(fit.cov, d, evals, evecs);
  for (double ev : evals)
    if (ev < -1e-10)
      throw std::domain_error("covariance is not PSD beyond clamp tolerance");
  return fit;
}

namespace {

// V diag(f(lambda)) V^T for a symmetric matrix given its decomposition.
std::vector<double> rebuild(const std::vector<double>& evals,
                            const std::vector<double>& evecs, int n,
                            double (*f)(double)) {
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  for (int k = 0; k < n; ++k) {
    const double lk = f(evals[k]);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        out[static_cast<std::size_t>(i) * n + j] +=
            lk * evecs[static_cast<std::size_t>(i) * n + k] *
            evecs[static_cast<std::size_t>(j) * n + k];
  }
  return out;
}

double sqrt_clamped(double x) { return std::sqrt(std::max(0.0, x)); }

std::vector<double> matmul(const std::vector<double>& a,
                           const std::vector<double>& b, int n) {
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const double aik = a[static_cast<std::size_t>(i) * n + k];
      if (aik == 0.0) continue;
      for (int j = 0; j < n; ++j)
        out[static_cast<std::size_t>(i) * n + j] +=
            aik * b[static_cast<std::size_t>(k) * n + j];
    }
  return out;
}

}  // namespace

double frechet_gaussian(const GaussianFit& a, const GaussianFit& b) {
  if (a.dim != b.dim)
    throw std::invalid_argument("gaussian fits have different dimensions");
  const int d = a.dim;

  double mean_term = 0.0;
  for (int i = 0; i < d; ++i) {
    const double diff = a.mean[i] - b.mean[i];
    mean_term += diff * diff;
  }

  std::vector<double> evals_a, evecs_a;
  sym_eig(a.cov, d, evals_a, evecs_a);
  const std::vector<double> sqrt_a = rebuild(evals_a, evecs_a, d, sqrt_clamped);

  // symmetrized product: Sa^(1/2) Sb Sa^(1/2)
  const std::vector<double> inner = matmul(matmul(sqrt_a, b.cov, d), sqrt_a, d);
  std::vector<double> evals_s, evecs_s;
  sym_eig(inner, d, evals_s, evecs_s);

  double trace_term = 0.0;
  for (int i = 0; i < d; ++i)
    trace_term += a.cov[static_cast<std::size_t>(i) * d + i] +
                  b.cov[static_cast<std::size_t>(i) * d + i];
  for (double ev : evals_s) trace_term -= 2.0 * sqrt_clamped(ev);

  return std::max(0.0, mean_term + trace_term);
}

// ---------------------------------------------------------------------------
// KID
// ---------------------------------------------------------------------------

double polynomial_kernel(const double* u, const double* v, int dim) {
  double dot = 0.0;
  for (int i = 0; i < dim; ++i) dot += u[i] * v[i];
  const double base = dot / static_cast<double>(dim) + 1.0;
  return base * base * base;
}

double kid_mmd(const Matrix& x, const Matrix& y) {
  if (x.rows < 2 || y.rows < 2)
    throw std::invalid_argument("kid requires at least 2 samples per set");
  if (x.cols != y.cols)
    throw std::invalid_argument("kid sample dimensions differ");
  const int m = x.rows, n = y.rows, d = x.cols;

  double xx = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      xx += polynomial_kernel(x.row(i), x.row(j), d);
    }
  xx /= static_cast<double>(m) * (m - 1);

  double yy = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      yy += polynomial_kernel(y.row(i), y.row(j), d);
    }
  yy /= static_cast<double>(n) * (n - 1);

  double xy = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) xy += polynomial_kernel(x.row(i), y.row(j), d);
  xy /= static_cast<double>(m) * n;

  return 1e3 * (xx + yy - 2.0 * xy);
}

// ---------------------------------------------------------------------------
// Intra-diversity (cluster by nearest few-shot target, mean pairwise)
// ---------------------------------------------------------------------------

double intra_diversity(const Matrix& generated, const Matrix& targets,
                       const DistanceFn& dist) {
  if (targets.rows < 1 || generated.rows < 2)
    throw std::invalid_argument("intra_diversity needs >=1 target, >=2 samples");
  std::vector<std::vector<int>> clusters(
      static_cast<std::size_t>(targets.rows));
  for (int i = 0; i < generated.rows; ++i) {
    int best = 0;
    double best_d = dist(generated.row(i), targets.row(0), generated.cols);
    for (int t = 1; t < targets.rows; ++t) {
      const double dd = dist(generated.row(i), targets.row(t), generated.cols);
      if (dd < best_d) {
        best_d = dd;
        best = t;
      }
    }
    clusters[best].push_back(i);
  }
  double total = 0.0;
  long pairs = 0;
  for (const auto& cluster : clusters) {
    const int c = static_cast<int>(cluster.size());
    for (int i = 0; i < c; ++i)
      for (int j = i + 1; j < c; ++j) {
        total += dist(generated.row(cluster[i]), generated.row(cluster[j]),
                      generated.cols);
        ++pairs;
      }
  }
  return pairs == 0 ? 0.0 : total / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Mode diagnostics
// ---------------------------------------------------------------------------

void ModeSpec::validate() const {
  if (centers.rows == 0) throw std::invalid_argument("mode spec is empty");
  if (static_cast<int>(labels.size()) != centers.rows)
    throw std::invalid_argument("mode label count mismatch");
  for (int i = 0; i < centers.rows; ++i)
    for (int j = i + 1; j < centers.rows; ++j)
      if (euclidean(centers.row(i), centers.row(j), centers.cols) == 0.0)
        throw std::invalid_argument("mode centers must be pairwise distinct");
}

std::vector<double> mode_masses(const Matrix& generated,
                                const ModeSpec& modes) {
  modes.validate();
  std::vector<double> mass(static_cast<std::size_t>(modes.centers.rows), 0.0);
  if (generated.rows == 0) return mass;
  for (int i = 0; i < generated.rows; ++i) {
    int best = 0;
    double best_d =
        euclidean(generated.row(i), modes.centers.row(0), generated.cols);
    for (int c = 1; c < modes.centers.rows; ++c) {
      const double dd =
          euclidean(generated.row(i), modes.centers.row(c), generated.cols);
      if (dd < best_d) {
        best_d = dd;
        best = c;
      }
    }
    mass[best] += 1.0;
  }
  for (double& m : mass) m /= generated.rows;
  return mass;
}

double incompatible_mass(const Matrix& generated, const ModeSpec& modes) {
  const std::vector<double> mass = mode_masses(generated, modes);
  double acc = 0.0;
  for (std::size_t i = 0; i < mass.size(); ++i)
    if (modes.labels[i] == ModeLabel::SourceOnly) acc += mass[i];
  return acc;
}

std::vector<AttributionRow> filter_mode_attribution(
    GanPair& gan, const FilterLayout& layout, const MemoryBank& bank,
    const ModeSpec& modes, int n_samples, Rng& latent_rng) {
  if (bank.size() != layout.size())
    throw std::logic_error("memory bank / layout size mismatch");
  Matrix latents(n_samples, gan.g.dz);
  for (double& v : latents.v) v = latent_rng.next_gaussian();

  const Matrix base = generate_from_latents(gan.g, latents);
  const std::vector<double> base_mass = mode_masses(base, modes);

  std::vector<AttributionRow> rows;
  for (const FilterDescriptor& f : layout.filters) {
    if (f.net != Net::G) continue;
    const std::vector<double> saved = span_values(gan, f);
    zero_span(gan, f);
    const Matrix ablated = generate_from_latents(gan.g, latents);
    const std::vector<double> mass = mode_masses(ablated, modes);
    set_span(gan, f, saved);

    AttributionRow row;
    row.filter_id = f.filter_id;
    row.delta.resize(mass.size());
    for (std::size_t i = 0; i < mass.size(); ++i)
      row.delta[i] = mass[i] - base_mass[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

int nearest_neighbor(const double* target, const Matrix& pool,
                     const DistanceFn& dist, double* distance_out) {
  if (pool.rows == 0) throw std::invalid_argument("empty pool");
  int best = 0;
  double best_d = dist(target, pool.row(0), pool.cols);
  for (int i = 1; i < pool.rows; ++i) {
    const double dd = dist(target, pool.row(i), pool.cols);
    if (dd < best_d) {
      best_d = dd;
      best = i;
    }
  }
  if (distance_out != nullptr) *distance_out = best_d;
  return best;
}

Matrix interpolate_latents(const GeneratorNet& gen,
                           const std::vector<double>& z1,
                           const std::vector<double>& z2, int steps) {
  if (steps < 2) throw std::invalid_argument("interpolation needs >= 2 steps");
  if (z1.size() != z2.size() || static_cast<int>(z1.size()) != gen.dz)
    throw std::invalid_argument("latent dimension mismatch");
  Matrix latents(steps, gen.dz);
  for (int s = 0; s < steps; ++s) {
    const double alpha = static_cast<double>(s) / (steps - 1);
    for (int j = 0; j < gen.dz; ++j)
      latents.row(s)[j] = (1.0 - alpha) * z1[j] + alpha * z2[j];
  }
  return generate_from_latents(gen, latents);
}

Matrix generate_from_latents(const GeneratorNet& gen, const Matrix& latents) {
  Matrix out(latents.rows, gen.output_dim());
  constexpr int kChunk = 512;
  for (int start = 0; start < latents.rows; start += kChunk) {
    const int n = std::min(kChunk, latents.rows - start);
    Tensor z({n, gen.dz});
    std::memcpy(z.data().data(), latents.row(start),
                static_cast<std::size_t>(n) * gen.dz * sizeof(double));
    const std::vector<double> vals = generate_nograd(gen, z);
    std::memcpy(out.row(start), vals.data(), vals.size() * sizeof(double));
  }
  return out;
}

Matrix generate_samples(const GeneratorNet& gen, int n, Rng& rng) {
  Matrix latents(n, gen.dz);
  for (double& v : latents.v) v = rng.next_gaussian();
  return generate_from_latents(gen, latents);
}

}  // namespace rick
