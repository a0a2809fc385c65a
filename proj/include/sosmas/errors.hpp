#pragma once

#include <stdexcept>
#include <string>

namespace sosmas {

/// Base class of every error raised by the toolkit. Infeasible verification
/// or synthesis outcomes are reported through result objects, not thrown.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// Problem exceeds a configured size limit (e.g. SDP block dimension).
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise malformed numeric input.
class DataError : public Error {
 public:
  using Error::Error;
};

class DegreeError : public Error {
 public:
  using Error::Error;
};

/// A product of two decision-bearing expressions was requested.
class BilinearityError : public Error {
 public:
  using Error::Error;
};

/// A target monomial cannot be produced by products of Gram basis elements.
class BasisCoverageError : public Error {
 public:
  using Error::Error;
};

/// A Gram certificate failed independent reconstruction.
class CertificateRejected : public Error {
 public:
  CertificateRejected(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Integration step does not tile the switching subintervals.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double time) : Error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// Malformed file or configuration.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace sosmas
