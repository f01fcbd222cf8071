#pragma once

#include <Eigen/Dense>

#include <variant>
#include <vector>

namespace ktmpc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// All monomials of the pre-features with total degree in [1, max_degree].
/// Degree-one monomials that reproduce a raw state coordinate are skipped.
struct PolynomialLifting {
  int max_degree = 2;
};

/// Gaussian kernels exp(-|x - c|^2 / width^2), evaluated on the raw state.
struct RbfLifting {
  std::vector<Vector> centers;
  double width = 1.0;
};

/// User supplied monomials; each exponent vector has one entry per pre-feature.
struct ExplicitLifting {
  std::vector<std::vector<int>> exponents;
};

/// Identity-augmented lifting psi(x) = [x; phi(x)].
///
/// Monomials are formed over a pre-feature vector: the raw state with every
/// coordinate listed in `angle_indices` replaced by the pair (sin, cos).
/// With no angle indices the pre-features are the state itself.
class Lifting {
 public:
  using Kind = std::variant<PolynomialLifting, RbfLifting, ExplicitLifting>;

  Lifting(int state_dim, Kind kind, std::vector<int> angle_indices = {});

  int state_dim() const { return state_dim_; }
  int lifted_dim() const { return state_dim_ + static_cast<int>(terms_.size()) + rbf_count(); }
  int prefeature_dim() const;

  const Kind& kind() const { return kind_; }
  const std::vector<int>& angle_indices() const { return angle_indices_; }

  /// Exponent vectors of the monomial part (empty for RBF lifting).
  const std::vector<std::vector<int>>& monomials() const { return terms_; }

  Vector prefeatures(const Eigen::Ref<const Vector>& x) const;
  Vector operator()(const Eigen::Ref<const Vector>& x) const;

  /// Identity lifting: n_z = n_x.
  static Lifting identity(int state_dim);

 private:
  int rbf_count() const;

  int state_dim_;
  Kind kind_;
  std::vector<int> angle_indices_;
  std::vector<std::vector<int>> terms_;
};

/// Latin-hypercube samples inside the box [lower, upper].
std::vector<Vector> latin_hypercube_centers(const Vector& lower, const Vector& upper, int count,
                                            unsigned long long seed);

}  // namespace ktmpc
