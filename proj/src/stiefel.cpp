#include "lrkb/stiefel.hpp"

#include <limits>
#include <sstream>

#include "lrkb/errors.hpp"
#include "lrkb/linalg.hpp"

namespace lrkb {

StiefelFrame::StiefelFrame(Matrix matrix, double tol_orth) : matrix_(std::move(matrix)) {
  if (matrix_.cols() > matrix_.rows() || matrix_.cols() == 0)
    throw ShapeError("StiefelFrame: need 1 <= r <= n columns");
  if (!matrix_.allFinite()) throw FrameError("StiefelFrame: non-finite entries",
                                             std::numeric_limits<double>::infinity());
  const double err = orth_error(matrix_);
  if (!(err <= tol_orth)) {
    std::ostringstream os;
    os << "frame is not orthonormal: ||U^T U - I||_F = " << err << " > " << tol_orth;
    throw FrameError(os.str(), err);
  }
}

StiefelFrame StiefelFrame::orthonormalized(const Matrix& m) {
  if (m.cols() > m.rows() || m.cols() == 0)
    throw ShapeError("StiefelFrame: need 1 <= r <= n columns");
  return StiefelFrame(orthonormalize(m));
}

StiefelFrame StiefelFrame::rotated(const Matrix& w) const {
  if (w.rows() != rank() || w.cols() != rank())
    throw ShapeError("StiefelFrame::rotated: rotation must be r x r");
  return StiefelFrame(matrix_ * w);
}

StiefelFrame random_stiefel(Index n, Index r, NormalStream& rng) {
  if (r < 1 || r > n) throw ConfigError("random_stiefel: need 1 <= r <= n");
  return StiefelFrame::orthonormalized(rng.matrix(n, r));
}

StiefelFrame random_stiefel(Index n, Index r, std::uint64_t seed) {
  NormalStream rng(seed, kStiefelStream);
  return random_stiefel(n, r, rng);
}

}  // namespace lrkb
