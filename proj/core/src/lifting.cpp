#include "ktmpc/lifting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ktmpc/errors.hpp"

namespace ktmpc {
namespace {

// Exponent vectors of total degree `degree` over `dim` variables, in
// descending lexicographic order (x1^2, x1 x2, x2^2, ...).
void enumerate_degree(int dim, int degree, std::vector<int>& current, int position,
                      std::vector<std::vector<int>>& out) {
  if (position == dim - 1) {
    current[position] = degree;
    out.push_back(current);
    current[position] = 0;
    return;
  }
  for (int e = degree; e >= 0; --e) {
    current[position] = e;
    enumerate_degree(dim, degree - e, current, position + 1, out);
  }
  current[position] = 0;
}

}  // namespace

Lifting::Lifting(int state_dim, Kind kind, std::vector<int> angle_indices)
    : state_dim_(state_dim), kind_(std::move(kind)), angle_indices_(std::move(angle_indices)) {
  if (state_dim_ < 1) {
    throw DimensionError("lifting: state dimension must be positive");
  }
  std::sort(angle_indices_.begin(), angle_indices_.end());
  if (std::adjacent_find(angle_indices_.begin(), angle_indices_.end()) != angle_indices_.end()) {
    throw DimensionError("lifting: duplicate angle index");
  }
  for (int i : angle_indices_) {
    if (i < 0 || i >= state_dim_) {
      throw DimensionError("lifting: angle index out of range");
    }
  }

  const int p = prefeature_dim();
  if (const auto* poly = std::get_if<PolynomialLifting>(&kind_)) {
    if (poly->max_degree < 1) {
      throw DimensionError("lifting: polynomial degree must be >= 1");
    }
    // Pre-feature slots that hold a raw state coordinate verbatim.
    std::vector<bool> raw_slot(p, false);
    for (int i = 0, slot = 0; i < state_dim_; ++i) {
      const bool angle = std::binary_search(angle_indices_.begin(), angle_indices_.end(), i);
      if (!angle) {
        raw_slot[slot] = true;
        slot += 1;
      } else {
        slot += 2;
      }
    }
    std::vector<int> current(p, 0);
    for (int d = 1; d <= poly->max_degree; ++d) {
      std::vector<std::vector<int>> level;
      enumerate_degree(p, d, current, 0, level);
      for (auto& e : level) {
        if (d == 1) {
          const auto it = std::find(e.begin(), e.end(), 1);
          if (raw_slot[static_cast<std::size_t>(it - e.begin())]) continue;
        }
        terms_.push_back(std::move(e));
      }
    }
  } else if (const auto* expl = std::get_if<ExplicitLifting>(&kind_)) {
    for (const auto& e : expl->exponents) {
      if (static_cast<int>(e.size()) != p) {
        throw DimensionError("lifting: exponent vector length must equal the pre-feature dimension");
      }
      if (std::any_of(e.begin(), e.end(), [](int v) { return v < 0; })) {
        throw DimensionError("lifting: negative exponent");
      }
      terms_.push_back(e);
    }
  } else {
    const auto& rbf = std::get<RbfLifting>(kind_);
    if (!(rbf.width > 0.0)) {
      throw DimensionError("lifting: RBF width must be positive");
    }
    for (const auto& c : rbf.centers) {
      if (c.size() != state_dim_) {
        throw DimensionError("lifting: RBF center dimension mismatch");
      }
    }
  }
}

int Lifting::prefeature_dim() const {
  return state_dim_ + static_cast<int>(angle_indices_.size());
}

int Lifting::rbf_count() const {
  if (const auto* rbf = std::get_if<RbfLifting>(&kind_)) {
    return static_cast<int>(rbf->centers.size());
  }
  return 0;
}

Lifting Lifting::identity(int state_dim) { return Lifting(state_dim, ExplicitLifting{}); }

Vector Lifting::prefeatures(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != state_dim_) {
    throw DimensionError("lifting: state has dimension " + std::to_string(x.size()) + ", expected " +
                         std::to_string(state_dim_));
  }
  Vector f(prefeature_dim());
  for (int i = 0, slot = 0; i < state_dim_; ++i) {
    if (std::binary_search(angle_indices_.begin(), angle_indices_.end(), i)) {
      f(slot++) = std::sin(x(i));
      f(slot++) = std::cos(x(i));
    } else {
      f(slot++) = x(i);
    }
  }
  return f;
}

Vector Lifting::operator()(const Eigen::Ref<const Vector>& x) const {
  const Vector f = prefeatures(x);
  Vector z(lifted_dim());
  z.head(state_dim_) = x;
  int row = state_dim_;
  for (const auto& e : terms_) {
    double m = 1.0;
    for (std::size_t k = 0; k < e.size(); ++k) {
      for (int r = 0; r < e[k]; ++r) m *= f(static_cast<Eigen::Index>(k));
    }
    z(row++) = m;
  }
  if (const auto* rbf = std::get_if<RbfLifting>(&kind_)) {
    const double inv_w2 = 1.0 / (rbf->width * rbf->width);
    for (const auto& c : rbf->centers) {
      z(row++) = std::exp(-(x - c).squaredNorm() * inv_w2);
    }
  }
  return z;
}

std::vector<Vector> latin_hypercube_centers(const Vector& lower, const Vector& upper, int count,
                                            unsigned long long seed) {
  if (lower.size() != upper.size()) {
    throw DimensionError("latin_hypercube_centers: bound dimensions differ");
  }
  if (count < 1) return {};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto n = lower.size();
  std::vector<Vector> points(static_cast<std::size_t>(count), Vector(n));
  std::vector<int> strata(static_cast<std::size_t>(count));
  for (Eigen::Index d = 0; d < n; ++d) {
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    for (int i = 0; i < count; ++i) {
      const double t = (strata[static_cast<std::size_t>(i)] + unit(rng)) / count;
      points[static_cast<std::size_t>(i)](d) = lower(d) + t * (upper(d) - lower(d));
    }
  }
  return points;
}

}  // namespace ktmpc
