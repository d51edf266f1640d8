#include "qja/quantum_core.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include <unsupported/Eigen/KroneckerProduct>

#include "qja/error.hpp"

namespace qja {

namespace {

void require_same_basis(const Basis& a, const Basis& b, const char* where) {
  if (!(a == b)) {
    throw Error(ErrorKind::DimensionMismatch, std::string(where) + ": basis mismatch");
  }
}

SparseMat sparse_from_triplets(int dim, const std::vector<Eigen::Triplet<cplx>>& trips) {
  SparseMat m(dim, dim);
  m.setFromTriplets(trips.begin(), trips.end());
  m.makeCompressed();
  return m;
}

}  // namespace

Basis::Basis(std::vector<int> factor_dims) : dims_(std::move(factor_dims)) {
  if (dims_.empty()) throw Error(ErrorKind::InvalidDimension, "basis needs at least one factor");
  for (int d : dims_) {
    if (d < 2) {
      throw Error(ErrorKind::InvalidDimension, "factor dimension " + std::to_string(d) + " < 2");
    }
    total_ *= d;
  }
}

Basis Basis::operator*(const Basis& other) const {
  std::vector<int> dims = dims_;
  dims.insert(dims.end(), other.dims_.begin(), other.dims_.end());
  return Basis(std::move(dims));
}

int Basis::index(std::span<const int> occupations) const {
  if (occupations.size() != dims_.size()) {
    throw Error(ErrorKind::DimensionMismatch, "occupation tuple length does not match basis");
  }
  int idx = 0;
  for (std::size_t k = 0; k < dims_.size(); ++k) {
    if (occupations[k] < 0 || occupations[k] >= dims_[k]) {
      throw Error(ErrorKind::InvalidDimension, "occupation out of truncation range");
    }
    idx = idx * dims_[k] + occupations[k];
  }
  return idx;
}

Operator::Operator(Basis basis, SparseMat matrix) : basis_(std::move(basis)), m_(std::move(matrix)) {
  if (m_.rows() != basis_.total_dim() || m_.cols() != basis_.total_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "operator matrix does not match basis dimension");
  }
  m_.makeCompressed();
}

Operator Operator::adjoint() const { return Operator(basis_, SparseMat(m_.adjoint())); }

CVec Operator::apply(const CVec& v) const {
  if (v.size() != m_.cols()) throw Error(ErrorKind::DimensionMismatch, "operator apply");
  return m_ * v;
}

Operator Operator::operator+(const Operator& o) const {
  require_same_basis(basis_, o.basis_, "operator +");
  return Operator(basis_, SparseMat(m_ + o.m_));
}

Operator Operator::operator-(const Operator& o) const {
  require_same_basis(basis_, o.basis_, "operator -");
  return Operator(basis_, SparseMat(m_ - o.m_));
}

Operator Operator::operator*(const Operator& o) const {
  require_same_basis(basis_, o.basis_, "operator *");
  return Operator(basis_, SparseMat(m_ * o.m_));
}

Operator Operator::operator*(cplx s) const { return Operator(basis_, SparseMat(m_ * s)); }

StateVector::StateVector(Basis basis, CVec amplitudes) : basis_(std::move(basis)) {
  set_amplitudes(std::move(amplitudes));
}

StateVector StateVector::fock(const Basis& basis, std::span<const int> occupations) {
  CVec v = CVec::Zero(basis.total_dim());
  v(basis.index(occupations)) = 1.0;
  return StateVector(basis, std::move(v));
}

void StateVector::set_amplitudes(CVec amplitudes) {
  if (amplitudes.size() != basis_.total_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "amplitude vector length does not match basis");
  }
  amps_ = std::move(amplitudes);
  norm_sq_ = amps_.squaredNorm();
}

void StateVector::normalize() {
  if (norm_sq_ <= 0.0) throw Error(ErrorKind::Domain, "cannot normalize the zero vector");
  amps_ /= std::sqrt(norm_sq_);
  norm_sq_ = amps_.squaredNorm();
}

DensityMatrix::DensityMatrix(Basis basis, DenseMat entries) : basis_(std::move(basis)), rho_(std::move(entries)) {
  if (rho_.rows() != basis_.total_dim() || rho_.cols() != basis_.total_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "density matrix does not match basis dimension");
  }
}

DensityMatrix DensityMatrix::pure(const StateVector& psi) {
  const CVec& v = psi.amplitudes();
  return DensityMatrix(psi.basis(), v * v.adjoint());
}

bool DensityMatrix::is_valid(bool normalized) const {
  const double scale = std::max(1.0, rho_.cwiseAbs().maxCoeff());
  if ((rho_ - rho_.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale) return false;
  const cplx tr = rho_.trace();
  if (std::abs(tr.imag()) > 1e-10 * scale) return false;
  if (normalized && std::abs(tr.real() - 1.0) > 1e-9) return false;
  Eigen::SelfAdjointEigenSolver<DenseMat> es(0.5 * (rho_ + rho_.adjoint()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -1e-9 * scale;
}

Operator identity(const Basis& basis) {
  SparseMat m(basis.total_dim(), basis.total_dim());
  m.setIdentity();
  return Operator(basis, std::move(m));
}

Operator identity(int dim) { return identity(Basis{dim}); }

Operator annihilation_operator(int dim) {
  if (dim < 2) throw Error(ErrorKind::InvalidDimension, "annihilation operator needs dim >= 2");
  std::vector<Eigen::Triplet<cplx>> trips;
  for (int n = 1; n < dim; ++n) trips.emplace_back(n - 1, n, std::sqrt(static_cast<double>(n)));
  return Operator(Basis{dim}, sparse_from_triplets(dim, trips));
}

Operator creation_operator(int dim) { return annihilation_operator(dim).adjoint(); }

Operator number_operator(int dim) {
  if (dim < 2) throw Error(ErrorKind::InvalidDimension, "number operator needs dim >= 2");
  std::vector<Eigen::Triplet<cplx>> trips;
  for (int n = 1; n < dim; ++n) trips.emplace_back(n, n, static_cast<double>(n));
  return Operator(Basis{dim}, sparse_from_triplets(dim, trips));
}

Operator sigma_minus() { return annihilation_operator(2); }
Operator sigma_plus() { return creation_operator(2); }

Operator tensor_product(const Operator& a, const Operator& b) {
  SparseMat k = Eigen::kroneckerProduct(a.matrix(), b.matrix()).eval();
  return Operator(a.basis() * b.basis(), std::move(k));
}

cplx expectation(const Operator& op, const StateVector& state) {
  require_same_basis(op.basis(), state.basis(), "expectation");
  const CVec& v = state.amplitudes();
  return v.dot(op.matrix() * v);
}

cplx expectation(const Operator& op, const DensityMatrix& rho) {
  require_same_basis(op.basis(), rho.basis(), "expectation");
  return (op.matrix() * rho.entries()).trace();
}

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidDimension: return "invalid dimension";
    case ErrorKind::DimensionMismatch: return "dimension mismatch";
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::NoConvergence: return "no convergence";
    case ErrorKind::Integration: return "integration error";
    case ErrorKind::DarkState: return "dark state";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::NoEmission: return "no emission";
    case ErrorKind::SingularParameter: return "singular parameter";
    case ErrorKind::InsufficientClicks: return "insufficient clicks";
    case ErrorKind::UndefinedStatistic: return "undefined statistic";
    case ErrorKind::DegeneratePosterior: return "degenerate posterior";
    case ErrorKind::InvalidEnvelope: return "invalid envelope";
    case ErrorKind::IncompatibleHistogram: return "incompatible histogram";
    case ErrorKind::GridMismatch: return "grid mismatch";
    case ErrorKind::NotOnGrid: return "not on grid";
    case ErrorKind::Exhausted: return "library exhausted";
    case ErrorKind::VersionMismatch: return "version mismatch";
    case ErrorKind::Checksum: return "checksum failure";
    case ErrorKind::CorruptFile: return "corrupt file";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Config: return "configuration error";
  }
  return "error";
}

}  // namespace qja
