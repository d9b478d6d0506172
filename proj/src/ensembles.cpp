#include "lrkb/ensembles.hpp"

#include <cmath>
#include <vector>

#include "lrkb/errors.hpp"
#include "lrkb/linalg.hpp"

namespace lrkb {

namespace {

double uniform_in(NormalStream& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

struct Block {
  Index start;
  Index size;  // 1 or 2
};

// Fills diag blocks for slots [begin, end) with real parts in [lo, hi].
void fill_group(Matrix& d, std::vector<Block>& blocks, Index begin, Index end, double lo,
                double hi, NormalStream& rng, const SpectrumOptions& options) {
  Index i = begin;
  while (i < end) {
    const bool pair = !options.symmetric && end - i >= 2 && rng.uniform() < options.complex_fraction;
    const double re = uniform_in(rng, lo, hi);
    if (pair) {
      const double im = uniform_in(rng, 0.2, 1.5);
      d(i, i) = re;
      d(i + 1, i + 1) = re;
      d(i, i + 1) = im;
      d(i + 1, i) = -im;
      blocks.push_back({i, 2});
      i += 2;
    } else {
      d(i, i) = re;
      blocks.push_back({i, 1});
      i += 1;
    }
  }
}

}  // namespace

Matrix random_orthogonal(Index k, NormalStream& rng) {
  return orthonormalize(rng.matrix(k, k));
}

Matrix random_gapped_matrix(Index n, int r, NormalStream& rng, const SpectrumOptions& options) {
  if (n < 1 || r < 1 || r > n) throw ConfigError("random_gapped_matrix: need 1 <= r <= n");
  if (!(options.gap > 0.0) || !(options.spread > options.gap / 2.0))
    throw ConfigError("random_gapped_matrix: need 0 < gap < 2 spread");
  Matrix d = Matrix::Zero(n, n);
  std::vector<Block> blocks;
  fill_group(d, blocks, 0, r, options.gap / 2.0, options.spread, rng, options);
  fill_group(d, blocks, r, n, -options.spread, -options.gap / 2.0, rng, options);
  const double shift = uniform_in(rng, -options.shift, options.shift);
  d.diagonal().array() += shift;

  if (!options.symmetric && options.non_normality > 0.0) {
    const double scale = options.non_normality / std::sqrt(static_cast<double>(n));
    for (const Block& b : blocks) {
      const Index after = b.start + b.size;
      for (Index row = b.start; row < after; ++row)
        for (Index col = after; col < n; ++col) d(row, col) += scale * rng.normal();
    }
  }
  const Matrix q = random_orthogonal(n, rng);
  return q * d * q.transpose();
}

LtiSystem random_system(const Matrix& a, NormalStream& rng, Index p, int max_attempts) {
  const Index n = a.rows();
  if (a.cols() != n || n == 0) throw ShapeError("random_system: A must be square");
  if (p == 0) {
    const Index low = (n + 3) / 4;
    p = std::min<Index>(n, low + std::min<Index>(2, static_cast<Index>(3.0 * rng.uniform())));
  }
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    LtiSystem sys;
    sys.a = a;
    sys.g = rng.matrix(n, n);
    sys.c = rng.matrix(p, n);
    sys.h = 0.5 * rng.matrix(p, p) + std::sqrt(static_cast<double>(p)) * Matrix::Identity(p, p);
    if (min_symmetric_eigenvalue(sys.noise_intensity()) <= kTolPd) continue;
    if (pbh_controllable(sys.a, sys.g) && pbh_observable(sys.a, sys.c)) return sys;
  }
  throw StructuralError("random_system: no controllable and observable draw found");
}

StiefelFrame tilted_frame(const StiefelFrame& dominant, double target, NormalStream& rng) {
  const Index n = dominant.ambient_dim();
  const Index r = dominant.rank();
  if (r >= n) throw ConfigError("tilted_frame: needs r < n");
  if (!(target >= 0.0 && target < 1.0)) throw ConfigError("tilted_frame: target must be in [0, 1)");
  const Matrix& u = dominant.matrix();
  const Matrix perp = orthogonal_complement(u);
  const Matrix x = rng.matrix(n - r, r);
  // span(U + s U_perp X) has discarded component s^2 mu / (1 + s^2 mu) with
  // mu = lambda_max(X^T X); pick s to hit the target.
  Eigen::SelfAdjointEigenSolver<Matrix> es(x.transpose() * x, Eigen::EigenvaluesOnly);
  const double mu = es.eigenvalues().maxCoeff();
  const double s = (target == 0.0 || mu <= 0.0) ? 0.0 : std::sqrt(target / (1.0 - target) / mu);
  const Matrix tilted = orthonormalize(u + s * perp * x);
  return StiefelFrame::orthonormalized(tilted * random_orthogonal(r, rng));
}

}  // namespace lrkb
