#pragma once

#include <cstdint>

#include "lrkb/common.hpp"
#include "lrkb/rng.hpp"

namespace lrkb {

/// An n x r real matrix with orthonormal columns, a point of St(r, n).
class StiefelFrame {
 public:
  /// Throws FrameError when ||U^T U - I_r||_F > tol_orth.
  explicit StiefelFrame(Matrix matrix, double tol_orth = kTolOrth);

  /// Q factor (positive-diagonal convention) of an arbitrary full-rank matrix.
  static StiefelFrame orthonormalized(const Matrix& m);

  const Matrix& matrix() const noexcept { return matrix_; }
  Index ambient_dim() const noexcept { return matrix_.rows(); }
  Index rank() const noexcept { return matrix_.cols(); }

  /// The frame U W for an r x r orthogonal W.
  StiefelFrame rotated(const Matrix& w) const;

 private:
  Matrix matrix_;
};

/// Orthonormalized n x r Gaussian matrix (filled column by column from
/// NormalStream(seed, kStiefelStream)), i.e. a draw from the uniform
/// distribution on St(r, n). Requires 1 <= r <= n.
StiefelFrame random_stiefel(Index n, Index r, std::uint64_t seed);
StiefelFrame random_stiefel(Index n, Index r, NormalStream& rng);

}  // namespace lrkb
