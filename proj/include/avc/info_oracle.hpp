#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "avc/tensor.hpp"

// Exact, non-neural computations of MI and KL used to validate the neural
// estimators. Everything is in nats.
namespace avc::info_oracle {

constexpr double kTableTol = 1e-9;

// Joint probability table p(x,y) over a finite alphabet pair.
struct DiscreteJoint {
  Tensor table;  // [|X|,|Y|]

  DiscreteJoint() = default;
  explicit DiscreteJoint(Tensor t) : table(std::move(t)) { validate(); }

  std::size_t nx() const { return table.shape[0]; }
  std::size_t ny() const { return table.shape[1]; }

  void validate() const {
    if (table.rank() != 2) throw std::invalid_argument("joint table must be 2-D");
    double sum = 0.0;
    for (double v : table.data) {
      if (!(v >= 0.0)) throw std::invalid_argument("joint table has a negative entry");
      sum += v;
    }
    if (std::fabs(sum - 1.0) > kTableTol)
      throw std::invalid_argument("joint table does not sum to 1");
  }

  std::vector<double> marginal_x() const {
    std::vector<double> px(nx(), 0.0);
    for (std::size_t i = 0; i < nx(); ++i)
      for (std::size_t j = 0; j < ny(); ++j) px[i] += table.at2(i, j);
    return px;
  }
  std::vector<double> marginal_y() const {
    std::vector<double> py(ny(), 0.0);
    for (std::size_t i = 0; i < nx(); ++i)
      for (std::size_t j = 0; j < ny(); ++j) py[j] += table.at2(i, j);
    return py;
  }
};

// Correlated standard-normal pair, `dim` independent copies.
struct GaussianPairSpec {
  double rho = 0.0;
  std::size_t dim = 1;

  void validate() const {
    if (!(std::fabs(rho) < 1.0)) throw std::domain_error("|rho| must be < 1");
    if (dim < 1) throw std::domain_error("dim must be >= 1");
  }
};

// I(X,Y) = sum p(x,y) ln(p(x,y)/(p(x)p(y))); zero cells contribute 0.
inline double mutual_information_discrete(const DiscreteJoint& joint) {
  joint.validate();
  auto px = joint.marginal_x();
  auto py = joint.marginal_y();
  double mi = 0.0;
  for (std::size_t i = 0; i < joint.nx(); ++i)
    for (std::size_t j = 0; j < joint.ny(); ++j) {
      double p = joint.table.at2(i, j);
      if (p > 0.0) mi += p * std::log(p / (px[i] * py[j]));
    }
  return mi;
}

inline double kl_divergence_discrete(const std::vector<double>& p,
                                     const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("KL: length mismatch");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0) || !(q[i] >= 0.0))
      throw std::invalid_argument("KL: negative entry");
    sp += p[i];
    sq += q[i];
  }
  if (std::fabs(sp - 1.0) > kTableTol || std::fabs(sq - 1.0) > kTableTol)
    throw std::invalid_argument("KL: distribution does not sum to 1");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      if (q[i] <= 0.0) throw std::domain_error("KL: support violation (p>0 where q=0)");
      kl += p[i] * std::log(p[i] / q[i]);
    }
  }
  return kl;
}

// Closed form: dim * (-1/2) ln(1 - rho^2).
inline double gaussian_mi_analytic(const GaussianPairSpec& spec) {
  spec.validate();
  return double(spec.dim) * (-0.5 * std::log(1.0 - spec.rho * spec.rho));
}

// E_joint[t] - ln E_marg[e^t], evaluated exactly on the table. Lower-bounds
// mutual_information_discrete for every finite t.
inline double dv_bound_exact(const DiscreteJoint& joint, const Tensor& t) {
  joint.validate();
  if (t.shape != joint.table.shape)
    throw std::invalid_argument("dv_bound_exact: t shape mismatch");
  for (double v : t.data)
    if (!std::isfinite(v)) throw std::invalid_argument("dv_bound_exact: t not finite");
  auto px = joint.marginal_x();
  auto py = joint.marginal_y();
  double e_joint = 0.0;
  for (std::size_t i = 0; i < joint.nx(); ++i)
    for (std::size_t j = 0; j < joint.ny(); ++j)
      e_joint += joint.table.at2(i, j) * t.at2(i, j);
  // max-shift for the log of the marginal expectation
  double tmax = *std::max_element(t.data.begin(), t.data.end());
  double z = 0.0;
  for (std::size_t i = 0; i < joint.nx(); ++i)
    for (std::size_t j = 0; j < joint.ny(); ++j)
      z += px[i] * py[j] * std::exp(t.at2(i, j) - tmax);
  return e_joint - (tmax + std::log(z));
}

// Gradient of dv_bound_exact in the t table; used by the table-ascent
// check that the bound attains the exact MI.
inline Tensor dv_bound_exact_grad(const DiscreteJoint& joint, const Tensor& t) {
  auto px = joint.marginal_x();
  auto py = joint.marginal_y();
  double tmax = *std::max_element(t.data.begin(), t.data.end());
  double z = 0.0;
  for (std::size_t i = 0; i < joint.nx(); ++i)
    for (std::size_t j = 0; j < joint.ny(); ++j)
      z += px[i] * py[j] * std::exp(t.at2(i, j) - tmax);
  Tensor g(t.shape);
  for (std::size_t i = 0; i < joint.nx(); ++i)
    for (std::size_t j = 0; j < joint.ny(); ++j)
      g.at2(i, j) = joint.table.at2(i, j) -
                    px[i] * py[j] * std::exp(t.at2(i, j) - tmax) / z;
  return g;
}

}  // namespace avc::info_oracle
