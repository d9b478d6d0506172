#pragma once

#include <stdexcept>
#include <string>

#include "lrkb/common.hpp"

namespace lrkb {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent matrix dimensions or non-finite input.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// HH^T is not positive definite.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, double min_eigenvalue)
      : Error(what), min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

/// A matrix that was supposed to have orthonormal columns does not.
class FrameError : public Error {
 public:
  FrameError(const std::string& what, double orth_error)
      : Error(what), orth_error_(orth_error) {}
  double orth_error() const noexcept { return orth_error_; }

 private:
  double orth_error_;
};

/// No real-part gap between eigenvalues `index` and `index + 1` (1-based).
class GapError : public Error {
 public:
  GapError(const std::string& what, int index, Complex upper, Complex lower)
      : Error(what), index_(index), upper_(upper), lower_(lower) {}
  int index() const noexcept { return index_; }
  Complex upper() const noexcept { return upper_; }
  Complex lower() const noexcept { return lower_; }

 private:
  int index_;
  Complex upper_;
  Complex lower_;
};

/// An iterative method stopped before reaching its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, long iterations, double residual)
      : Error(what), iterations_(iterations), residual_(residual) {}
  long iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  long iterations_;
  double residual_;
};

/// NaN/Inf or blow-up during time integration.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double time)
      : Error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// Controllability or observability requirement violated.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// A frame expected to be an Oja equilibrium is not one.
class EquilibriumError : public Error {
 public:
  EquilibriumError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Invalid run parameters (step sizes, ranks, file contents).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lrkb
