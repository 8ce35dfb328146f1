#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace spigot {

/// Which side of the argmax a parameter belongs to: the intermediate scorer
/// (phi) or the end-task model (theta). The two groups never share tensors.
enum class ParamGroup { kIntermediate, kEnd };

/// A dense row-major matrix (or vector when cols == 1) with its gradient.
struct Param {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  ParamGroup group = ParamGroup::kIntermediate;
  std::vector<double> value;
  std::vector<double> grad;

  double& at(std::size_t r, std::size_t c) { return value[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return value[r * cols + c]; }
  double& grad_at(std::size_t r, std::size_t c) { return grad[r * cols + c]; }
};

/// Handle into a ParamStore; stable across copies of the store.
using ParamId = std::size_t;

class ParamStore {
 public:
  /// Registers a zero-initialized tensor. Throws std::invalid_argument on a
  /// duplicate name.
  ParamId add(std::string name, std::size_t rows, std::size_t cols, ParamGroup group);

  Param& operator[](ParamId id) { return params_.at(id); }
  const Param& operator[](ParamId id) const { return params_.at(id); }
  /// Throws std::out_of_range for unknown names.
  ParamId find(std::string_view name) const;

  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }

  /// Uniform in +-sqrt(6 / (rows + cols)) for matrices; biases stay zero.
  void glorot_init(std::mt19937_64& rng);
  void zero_grad();
  void scale_grad(double factor);
  double grad_norm() const;
  /// Rescales all gradients so the global l2 norm is at most max_norm.
  /// Returns the norm before clipping.
  double clip_grad_norm(double max_norm);
  std::size_t parameter_count(ParamGroup group) const;

 private:
  std::vector<Param> params_;
};

enum class OptimizerKind { kSgd, kAdam };

/// Plain SGD or Adam over a ParamStore. Frozen groups are skipped entirely.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate);

  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }
  void freeze(ParamGroup group, bool frozen = true);
  void step(ParamStore& store);

 private:
  OptimizerKind kind_;
  double lr_;
  bool frozen_[2] = {false, false};
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double epsilon_ = 1e-8;
  long step_count_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

OptimizerKind parse_optimizer(std::string_view name);

}  // namespace spigot
