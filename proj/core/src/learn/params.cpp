#include "spigot/learn/params.hpp"

#include <cmath>
#include <stdexcept>

namespace spigot {

ParamId ParamStore::add(std::string name, std::size_t rows, std::size_t cols, ParamGroup group) {
  for (const auto& p : params_) {
    if (p.name == name) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
  }
  Param p;
  p.name = std::move(name);
  p.rows = rows;
  p.cols = cols;
  p.group = group;
  p.value.assign(rows * cols, 0.0);
  p.grad.assign(rows * cols, 0.0);
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

ParamId ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw std::out_of_range("ParamStore: no parameter named '" + std::string(name) + "'");
}

void ParamStore::glorot_init(std::mt19937_64& rng) {
  for (auto& p : params_) {
    if (p.cols == 1) continue;
    const double bound = std::sqrt(6.0 / static_cast<double>(p.rows + p.cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : p.value) x = dist(rng);
  }
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

void ParamStore::scale_grad(double factor) {
  for (auto& p : params_) {
    for (double& g : p.grad) g *= factor;
  }
}

double ParamStore::grad_norm() const {
  double total = 0.0;
  for (const auto& p : params_) {
    for (double g : p.grad) total += g * g;
  }
  return std::sqrt(total);
}

double ParamStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm && norm > 0.0) scale_grad(max_norm / norm);
  return norm;
}

std::size_t ParamStore::parameter_count(ParamGroup group) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.group == group) n += p.value.size();
  }
  return n;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), lr_(learning_rate) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("Optimizer: learning rate must be positive");
}

void Optimizer::freeze(ParamGroup group, bool frozen) { frozen_[static_cast<int>(group)] = frozen; }

void Optimizer::step(ParamStore& store) {
  auto& params = store.all();
  if (kind_ == OptimizerKind::kSgd) {
    for (auto& p : params) {
      if (frozen_[static_cast<int>(p.group)]) continue;
      for (std::size_t k = 0; k < p.value.size(); ++k) p.value[k] -= lr_ * p.grad[k];
    }
    return;
  }
  if (m_.size() != params.size()) {
    m_.assign(params.size(), {});
    v_.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].value.size(), 0.0);
      v_[i].assign(params[i].value.size(), 0.0);
    }
  }
  ++step_count_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (frozen_[static_cast<int>(p.group)]) continue;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g;
      v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g * g;
      p.value[k] -= lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + epsilon_);
    }
  }
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "' (expected sgd|adam)");
}

}  // namespace spigot
