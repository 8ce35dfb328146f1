#pragma once

// Differentiable building blocks with hand-written backward passes. Each
// block reads its parameters from a ParamStore, returns a cache from forward,
// and accumulates parameter gradients into the store from backward.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spigot/learn/params.hpp"
#include "spigot/structures.hpp"

namespace spigot {

enum class Activation { kRelu, kTanh };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// Token ids below kReservedIds are reserved; word w maps to w + kReservedIds.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kRootId = 2;
inline constexpr int kReservedIds = 3;

struct EncoderSpec {
  int vocab_size = 0;
  int embed_dim = 16;
  int window = 1;
  int hidden_dim = 16;
  Activation activation = Activation::kTanh;
};

/// Window-based feedforward encoder: h_j = act(W [e_{j-w}; ...; e_{j+w}] + b)
/// over the sequence [ROOT, w_1, ..., w_n]. Positions outside the sentence
/// read the padding embedding.
class Encoder {
 public:
  struct Cache {
    std::vector<int> ids;
    Matrix input;
    Matrix pre;
    Matrix h;  // (n + 1) x hidden_dim, row 0 is the root
  };

  Encoder(ParamStore& store, const std::string& prefix, const EncoderSpec& spec, ParamGroup group);

  /// Sentence token ids in [0, vocab_size); anything else maps to UNK.
  Cache forward(const ParamStore& store, std::span<const int> tokens) const;
  void backward(ParamStore& store, const Cache& cache, const Matrix& grad_h) const;

  const EncoderSpec& spec() const { return spec_; }
  std::size_t output_dim() const { return static_cast<std::size_t>(spec_.hidden_dim); }

 private:
  EncoderSpec spec_;
  ParamId embed_;
  ParamId weight_;
  ParamId bias_;
};

/// s_o(i -> j) = out_o . act(W_head h_i + W_mod h_j + D[bucket(i, j)] + b) + out_bias_o,
/// for every candidate arc of an indexer; `outputs` columns per arc. D holds
/// one row per root arc and per signed distance i - j clipped to
/// [-kMaxDistance, kMaxDistance].
class ArcScorer {
 public:
  struct Cache {
    Matrix pre;     // d x hidden
    Matrix hidden;  // d x hidden
    Matrix scores;  // d x outputs
  };

  ArcScorer(ParamStore& store, const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim,
            std::size_t outputs, Activation activation, ParamGroup group);

  Cache forward(const ParamStore& store, const Matrix& h, const ArcIndexer& indexer) const;
  /// Returns d loss / d h and accumulates parameter gradients.
  Matrix backward(ParamStore& store, const Cache& cache, const Matrix& h, const ArcIndexer& indexer,
                  const Matrix& grad_scores) const;

  std::size_t outputs() const { return outputs_; }

  static constexpr int kMaxDistance = 5;
  static std::size_t distance_bucket(int head, int mod);

 private:
  std::size_t input_dim_;
  std::size_t hidden_dim_;
  std::size_t outputs_;
  Activation activation_;
  ParamId w_head_;
  ParamId w_mod_;
  ParamId bias_;
  ParamId dist_;
  ParamId out_;
  ParamId out_bias_;
};

enum class HeadPooling { kSum, kAverage };

/// h~_j = [h_j ; sum_{i != j} z_(i->j) h_i] for modifiers j = 1..n. In
/// average mode the head block is divided by sum_i z_(i->j), and is zero when
/// that sum is zero. `h` has rows 0..n; the result has rows for 1..n.
Matrix head_feature_concat(const Matrix& h, std::span<const double> z, const ArcIndexer& indexer,
                           HeadPooling mode);

struct HeadConcatGrad {
  Matrix grad_h;
  std::vector<double> grad_z;
};

HeadConcatGrad head_feature_concat_backward(const Matrix& h, std::span<const double> z, const ArcIndexer& indexer,
                                            HeadPooling mode, const Matrix& grad_out);

/// u_j = relu(A x_j + a); pooled = sum_j u_j; hidden = relu(B pooled + b);
/// logits = C hidden + c; log-probabilities by log-softmax.
class ClassifierHead {
 public:
  struct Cache {
    Matrix pre_u;
    Matrix u;
    std::vector<double> pooled;
    std::vector<double> pre_hidden;
    std::vector<double> hidden;
    std::vector<double> logits;
    std::vector<double> log_probs;
  };

  ClassifierHead(ParamStore& store, const std::string& prefix, std::size_t input_dim, std::size_t proj_dim,
                 std::size_t hidden_dim, std::size_t classes, ParamGroup group);

  Cache forward(const ParamStore& store, const Matrix& features) const;
  /// -log p(gold).
  static double loss(const Cache& cache, int gold);
  /// Gradient of -log p(gold) w.r.t. the features; accumulates parameters.
  Matrix backward(ParamStore& store, const Cache& cache, const Matrix& features, int gold) const;

  std::size_t classes() const { return classes_; }

 private:
  std::size_t input_dim_;
  std::size_t proj_dim_;
  std::size_t hidden_dim_;
  std::size_t classes_;
  ParamId proj_;
  ParamId proj_bias_;
  ParamId hid_;
  ParamId hid_bias_;
  ParamId out_;
  ParamId out_bias_;
};

std::vector<double> log_softmax(std::span<const double> logits);

}  // namespace spigot
