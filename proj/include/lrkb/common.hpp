#pragma once

#include <complex>

#include <Eigen/Dense>

namespace lrkb {

using Index = Eigen::Index;
using Complex = std::complex<double>;

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

// Default tolerances. Every operation that uses one also accepts an override.
inline constexpr double kTolSpec = 1e-10;  // relative, spectral reconstructions
inline constexpr double kTolGap = 1e-9;    // absolute, real-part spectral gap
inline constexpr double kTolPd = 1e-12;    // min eigenvalue of HH^T
inline constexpr double kTolRank = 1e-8;   // relative singular value cutoff
inline constexpr double kTolOrth = 1e-9;   // ||U^T U - I||_F
inline constexpr double kTolConv = 1e-9;   // Oja residual at equilibrium
inline constexpr double kTolSym = 1e-10;
inline constexpr double kTolPsd = 1e-8;
inline constexpr double kTolAre = 1e-9;

}  // namespace lrkb
