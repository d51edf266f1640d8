#pragma once

// Linear algebra on truncated Fock/qubit tensor-product spaces.
//
// Ordering convention: the first factor is the slowest index (row-major
// flattening), so for a cavity-mechanics basis the flat index of
// |n_cav, n_mech> is n_cav * mech_dim + n_mech.

#include <complex>
#include <initializer_list>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace qja {

using cplx = std::complex<double>;
using SparseMat = Eigen::SparseMatrix<cplx, Eigen::ColMajor>;
using DenseMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

inline constexpr cplx kI{0.0, 1.0};

class Basis {
 public:
  explicit Basis(std::vector<int> factor_dims);
  Basis(std::initializer_list<int> factor_dims) : Basis(std::vector<int>(factor_dims)) {}

  const std::vector<int>& factor_dims() const noexcept { return dims_; }
  int total_dim() const noexcept { return total_; }
  std::size_t factors() const noexcept { return dims_.size(); }

  // Concatenation of factor lists (the basis of a tensor product).
  Basis operator*(const Basis& other) const;

  // Flat index of an occupation tuple.
  int index(std::span<const int> occupations) const;
  int index(std::initializer_list<int> occupations) const {
    return index(std::span<const int>(occupations.begin(), occupations.size()));
  }

  bool operator==(const Basis&) const = default;

 private:
  std::vector<int> dims_;
  int total_ = 1;
};

class Operator {
 public:
  Operator(Basis basis, SparseMat matrix);

  const Basis& basis() const noexcept { return basis_; }
  const SparseMat& matrix() const noexcept { return m_; }
  int dim() const noexcept { return basis_.total_dim(); }

  DenseMat dense() const { return DenseMat(m_); }
  Operator adjoint() const;

  CVec apply(const CVec& v) const;

  Operator operator+(const Operator& o) const;
  Operator operator-(const Operator& o) const;
  Operator operator*(const Operator& o) const;
  Operator operator*(cplx s) const;
  friend Operator operator*(cplx s, const Operator& op) { return op * s; }

 private:
  Basis basis_;
  SparseMat m_;
};

class StateVector {
 public:
  StateVector(Basis basis, CVec amplitudes);

  // |n1, n2, ...> in the given basis.
  static StateVector fock(const Basis& basis, std::span<const int> occupations);
  static StateVector fock(const Basis& basis, std::initializer_list<int> occupations) {
    return fock(basis, std::span<const int>(occupations.begin(), occupations.size()));
  }

  const Basis& basis() const noexcept { return basis_; }
  const CVec& amplitudes() const noexcept { return amps_; }
  double norm_squared() const noexcept { return norm_sq_; }

  void set_amplitudes(CVec amplitudes);
  void normalize();

 private:
  Basis basis_;
  CVec amps_;
  double norm_sq_ = 0.0;
};

class DensityMatrix {
 public:
  DensityMatrix(Basis basis, DenseMat entries);

  static DensityMatrix pure(const StateVector& psi);

  const Basis& basis() const noexcept { return basis_; }
  const DenseMat& entries() const noexcept { return rho_; }
  DenseMat& mutable_entries() noexcept { return rho_; }

  cplx trace() const { return rho_.trace(); }

  // Hermiticity (1e-10), real trace, eigenvalues >= -1e-9; when `normalized`
  // the trace must also be 1 within 1e-9.
  bool is_valid(bool normalized = true) const;

 private:
  Basis basis_;
  DenseMat rho_;
};

Operator identity(const Basis& basis);
Operator identity(int dim);
Operator annihilation_operator(int dim);
Operator creation_operator(int dim);
Operator number_operator(int dim);

// Two-level ladder operators in the {|g>, |e>} basis (index 0 = ground).
Operator sigma_minus();
Operator sigma_plus();

Operator tensor_product(const Operator& a, const Operator& b);

// <psi|op|psi> without normalizing psi.
cplx expectation(const Operator& op, const StateVector& state);
// Tr[op * rho].
cplx expectation(const Operator& op, const DensityMatrix& rho);

}  // namespace qja
