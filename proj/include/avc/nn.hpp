#pragma once

#include <map>
#include <string>

#include "avc/graph.hpp"
#include "avc/tensor.hpp"

namespace avc::nn {

// Named parameter set. Ordered map so iteration (checksums, serialization,
// optimizer state) is deterministic.
struct Params {
  std::map<std::string, Tensor> t;

  Tensor& operator[](const std::string& name) { return t.at(name); }
  const Tensor& at(const std::string& name) const { return t.at(name); }
  bool has(const std::string& name) const { return t.count(name) != 0; }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& [k, v] : t) n += v.numel();
    return n;
  }

  bool all_finite() const {
    for (const auto& [k, v] : t)
      if (!v.all_finite()) return false;
    return true;
  }

  std::uint64_t checksum() const {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& [k, v] : t) {
      h = fnv1a(k.data(), k.size(), h);
      h = fnv1a(v.data.data(), v.data.size() * sizeof(double), h);
    }
    return h;
  }
};

// He-style fan-in init for conv/dense weights, zero biases.
inline Tensor init_weight(Shape shape, std::mt19937_64& rng) {
  std::size_t fan_in = 1;
  for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
  Tensor w(shape);
  fill_normal(w, rng, 0.0, std::sqrt(2.0 / double(fan_in)));
  return w;
}

// Parameter leaves for one training step. Reusing the same Var for every
// forward in the step makes gradients accumulate across uses.
struct VarParams {
  std::map<std::string, ag::Var> m;
  ag::Var at(const std::string& name) const { return m.at(name); }
};

inline VarParams lift(const Params& p, bool requires_grad = true) {
  VarParams vp;
  for (const auto& [k, v] : p.t) vp.m[k] = ag::leaf(v, requires_grad);
  return vp;
}

// Adaptive moment estimation.
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::map<std::string, Tensor> m, v;
  std::size_t step_count = 0;

  // direction +1 ascends the objective, -1 descends.
  void step(Params& p, const VarParams& vp, double lr, double direction = -1.0) {
    ++step_count;
    double bc1 = 1.0 - std::pow(beta1, double(step_count));
    double bc2 = 1.0 - std::pow(beta2, double(step_count));
    for (auto& [k, w] : p.t) {
      const ag::Var& leaf = vp.m.at(k);
      if (leaf->grad.numel() != w.numel()) continue;  // unused this step
      auto& mk = m.try_emplace(k, Tensor::zeros(w.shape)).first->second;
      auto& vk = v.try_emplace(k, Tensor::zeros(w.shape)).first->second;
      for (std::size_t i = 0; i < w.numel(); ++i) {
        double g = leaf->grad[i];
        if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient in " + k);
        mk[i] = beta1 * mk[i] + (1.0 - beta1) * g;
        vk[i] = beta2 * vk[i] + (1.0 - beta2) * g * g;
        double mhat = mk[i] / bc1, vhat = vk[i] / bc2;
        w[i] += direction * lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

// Plain SGD over lifted gradients; direction as in Adam::step.
inline void sgd_step(Params& p, const VarParams& vp, double lr, double direction = -1.0) {
  for (auto& [k, w] : p.t) {
    const ag::Var& leaf = vp.m.at(k);
    if (leaf->grad.numel() != w.numel()) continue;
    for (std::size_t i = 0; i < w.numel(); ++i) {
      double g = leaf->grad[i];
      if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient in " + k);
      w[i] += direction * lr * g;
    }
  }
}

}  // namespace avc::nn
