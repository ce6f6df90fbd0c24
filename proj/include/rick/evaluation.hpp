#pragma once

#include <functional>
#include <vector>

#include "rick/models.hpp"
#include "rick/scheduler.hpp"

namespace rick {

// Row-major sample matrix used by all metric code.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c) {}
  double* row(int i) { return v.data() + static_cast<std::size_t>(i) * cols; }
  const double* row(int i) const {
    return v.data() + static_cast<std::size_t>(i) * cols;
  }
};

Matrix dataset_matrix(const Dataset& d);

using DistanceFn =
    std::function<double(const double*, const double*, int dim)>;

double euclidean(const double* a, const double* b, int dim);

// Seeded random-projection embedding used as the perceptual-distance
// proxy on the icon testbed.
struct ProjectionEmbedding {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<double> weights;  // out_dim x in_dim
  std::vector<double> apply(const double* x) const;
};

ProjectionEmbedding make_projection_embedding(int in_dim, int out_dim,
                                              std::uint64_t seed);
DistanceFn embedded_distance(const ProjectionEmbedding& emb);

// Symmetric eigendecomposition by cyclic Jacobi; A is n x n row-major.
void sym_eig(std::vector<double> a, int n, std::vector<double>& eigenvalues,
             std::vector<double>& eigenvectors);

// ---------------------------------------------------------------------------
// Distribution distances
// ---------------------------------------------------------------------------

struct GaussianFit {
  std::vector<double> mean;
  std::vector<double> cov;  // dim x dim, symmetric PSD
  int dim = 0;
  long count = 0;
};

// Unbiased (n-1) covariance; requires n >= 2. Eigenvalues below -1e-10
// are a numeric error, small negatives are clamped to zero.
GaussianFit fit_gaussian(const Matrix& samples);

// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)), the matrix square root
// taken via eigendecomposition of Sa^(1/2) Sb Sa^(1/2).
double frechet_gaussian(const GaussianFit& a, const GaussianFit& b);

double polynomial_kernel(const double* u, const double* v, int dim);

// Unbiased MMD^2 with kernel (u.v/d + 1)^3, diagonal excluded in the
// within-set sums, scaled by 1e3 for reporting.
double kid_mmd(const Matrix& x, const Matrix& y);

// Assign each generated sample to the nearest target; return the mean
// pairwise distance over all within-cluster pairs (clusters of size < 2
// contribute nothing).
double intra_diversity(const Matrix& generated, const Matrix& targets,
                       const DistanceFn& dist = euclidean);

// ---------------------------------------------------------------------------
// Incompatible-knowledge diagnostics
// ---------------------------------------------------------------------------

enum class ModeLabel { Shared, SourceOnly, TargetOnly };

struct ModeSpec {
  Matrix centers;
  std::vector<ModeLabel> labels;
  void validate() const;
};

// Fraction of samples whose nearest centre is labelled source-only.
double incompatible_mass(const Matrix& generated, const ModeSpec& modes);

// Per-mode fraction of samples nearest each centre.
std::vector<double> mode_masses(const Matrix& generated, const ModeSpec& modes);

// Ablation-based attribution: zero one filter's span, regenerate from
// fixed latents, record the per-mode mass change, restore the weights
// bit for bit.
struct AttributionRow {
  int filter_id;
  std::vector<double> delta;  // per mode
};

std::vector<AttributionRow> filter_mode_attribution(
    GanPair& gan, const FilterLayout& layout, const MemoryBank& bank,
    const ModeSpec& modes, int n_samples, Rng& latent_rng);

// Index of the pool row nearest to target; ties break to the lowest index.
int nearest_neighbor(const double* target, const Matrix& pool,
                     const DistanceFn& dist, double* distance_out = nullptr);

// Generator outputs along the segment (1-a) z1 + a z2, a in [0,1].
Matrix interpolate_latents(const GeneratorNet& gen, const std::vector<double>& z1,
                           const std::vector<double>& z2, int steps);

// Forward n latents through the generator without recording.
Matrix generate_samples(const GeneratorNet& gen, int n, Rng& rng);
Matrix generate_from_latents(const GeneratorNet& gen, const Matrix& latents);

}  // namespace rick
