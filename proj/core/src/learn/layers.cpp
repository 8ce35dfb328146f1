#include "spigot/learn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spigot {

namespace {

double activate(Activation a, double x) { return a == Activation::kRelu ? std::max(x, 0.0) : std::tanh(x); }

// Derivative expressed through the pre-activation and the output.
double activate_grad(Activation a, double pre, double out) {
  return a == Activation::kRelu ? (pre > 0.0 ? 1.0 : 0.0) : 1.0 - out * out;
}

double relu(double x) { return std::max(x, 0.0); }

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "' (expected relu|tanh)");
}

std::string_view to_string(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

std::vector<double> log_softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double x : logits) total += std::exp(x - m);
  const double log_z = m + std::log(total);
  std::vector<double> out(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - log_z;
  return out;
}

// ---------------------------------------------------------------- Encoder

Encoder::Encoder(ParamStore& store, const std::string& prefix, const EncoderSpec& spec, ParamGroup group)
    : spec_(spec) {
  if (spec.vocab_size < 1 || spec.embed_dim < 1 || spec.hidden_dim < 1 || spec.window < 0) {
    throw std::invalid_argument("Encoder: invalid spec");
  }
  const auto e = static_cast<std::size_t>(spec.embed_dim);
  const auto width = static_cast<std::size_t>(2 * spec.window + 1);
  embed_ = store.add(prefix + ".embed", static_cast<std::size_t>(spec.vocab_size + kReservedIds), e, group);
  weight_ = store.add(prefix + ".weight", static_cast<std::size_t>(spec.hidden_dim), width * e, group);
  bias_ = store.add(prefix + ".bias", static_cast<std::size_t>(spec.hidden_dim), 1, group);
}

Encoder::Cache Encoder::forward(const ParamStore& store, std::span<const int> tokens) const {
  const Param& emb = store[embed_];
  const Param& w = store[weight_];
  const Param& b = store[bias_];
  const std::size_t len = tokens.size() + 1;
  const auto e = static_cast<std::size_t>(spec_.embed_dim);
  const int win = spec_.window;
  const auto width = static_cast<std::size_t>(2 * win + 1);

  Cache c;
  c.ids.resize(len);
  c.ids[0] = kRootId;
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    const int t = tokens[j];
    c.ids[j + 1] = (t >= 0 && t < spec_.vocab_size) ? t + kReservedIds : kUnkId;
  }
  c.input = Matrix(len, width * e);
  for (std::size_t j = 0; j < len; ++j) {
    for (int o = -win; o <= win; ++o) {
      const long pos = static_cast<long>(j) + o;
      const int id = (pos < 0 || pos >= static_cast<long>(len)) ? kPadId : c.ids[static_cast<std::size_t>(pos)];
      const std::size_t slot = static_cast<std::size_t>(o + win) * e;
      for (std::size_t k = 0; k < e; ++k) c.input(j, slot + k) = emb.at(static_cast<std::size_t>(id), k);
    }
  }
  const auto hd = static_cast<std::size_t>(spec_.hidden_dim);
  c.pre = Matrix(len, hd);
  c.h = Matrix(len, hd);
  for (std::size_t j = 0; j < len; ++j) {
    for (std::size_t r = 0; r < hd; ++r) {
      double acc = b.value[r];
      for (std::size_t k = 0; k < w.cols; ++k) acc += w.at(r, k) * c.input(j, k);
      c.pre(j, r) = acc;
      c.h(j, r) = activate(spec_.activation, acc);
    }
  }
  return c;
}

void Encoder::backward(ParamStore& store, const Cache& cache, const Matrix& grad_h) const {
  Param& emb = store[embed_];
  Param& w = store[weight_];
  Param& b = store[bias_];
  const std::size_t len = cache.h.rows;
  const auto e = static_cast<std::size_t>(spec_.embed_dim);
  const int win = spec_.window;
  const auto hd = static_cast<std::size_t>(spec_.hidden_dim);
  std::vector<double> grad_in(w.cols);
  for (std::size_t j = 0; j < len; ++j) {
    std::fill(grad_in.begin(), grad_in.end(), 0.0);
    for (std::size_t r = 0; r < hd; ++r) {
      const double g = grad_h(j, r) * activate_grad(spec_.activation, cache.pre(j, r), cache.h(j, r));
      if (g == 0.0) continue;
      b.grad[r] += g;
      for (std::size_t k = 0; k < w.cols; ++k) {
        w.grad_at(r, k) += g * cache.input(j, k);
        grad_in[k] += g * w.at(r, k);
      }
    }
    for (int o = -win; o <= win; ++o) {
      const long pos = static_cast<long>(j) + o;
      const int id = (pos < 0 || pos >= static_cast<long>(len)) ? kPadId : cache.ids[static_cast<std::size_t>(pos)];
      const std::size_t slot = static_cast<std::size_t>(o + win) * e;
      for (std::size_t k = 0; k < e; ++k) emb.grad_at(static_cast<std::size_t>(id), k) += grad_in[slot + k];
    }
  }
}

// ---------------------------------------------------------------- ArcScorer

ArcScorer::ArcScorer(ParamStore& store, const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim,
                     std::size_t outputs, Activation activation, ParamGroup group)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), outputs_(outputs), activation_(activation) {
  if (input_dim == 0 || hidden_dim == 0 || outputs == 0) throw std::invalid_argument("ArcScorer: zero dimension");
  w_head_ = store.add(prefix + ".w_head", hidden_dim, input_dim, group);
  w_mod_ = store.add(prefix + ".w_mod", hidden_dim, input_dim, group);
  bias_ = store.add(prefix + ".bias", hidden_dim, 1, group);
  dist_ = store.add(prefix + ".dist", 2 * kMaxDistance + 1, hidden_dim, group);
  out_ = store.add(prefix + ".out", outputs, hidden_dim, group);
  out_bias_ = store.add(prefix + ".out_bias", outputs, 1, group);
}

std::size_t ArcScorer::distance_bucket(int head, int mod) {
  if (head == 0) return 0;
  const int delta = std::clamp(head - mod, -kMaxDistance, kMaxDistance);
  return static_cast<std::size_t>(delta < 0 ? kMaxDistance + delta + 1 : kMaxDistance + delta);
}

ArcScorer::Cache ArcScorer::forward(const ParamStore& store, const Matrix& h, const ArcIndexer& indexer) const {
  if (h.cols != input_dim_ || h.rows != static_cast<std::size_t>(indexer.length()) + 1) {
    throw std::invalid_argument("ArcScorer: input shape mismatch");
  }
  const Param& wh = store[w_head_];
  const Param& wm = store[w_mod_];
  const Param& b = store[bias_];
  const Param& dist = store[dist_];
  const Param& out = store[out_];
  const Param& ob = store[out_bias_];
  // Per-node projections, shared by every arc touching the node.
  Matrix as_head(h.rows, hidden_dim_), as_mod(h.rows, hidden_dim_);
  for (std::size_t i = 0; i < h.rows; ++i) {
    for (std::size_t r = 0; r < hidden_dim_; ++r) {
      double ah = 0.0;
      double am = 0.0;
      for (std::size_t k = 0; k < input_dim_; ++k) {
        ah += wh.at(r, k) * h(i, k);
        am += wm.at(r, k) * h(i, k);
      }
      as_head(i, r) = ah;
      as_mod(i, r) = am;
    }
  }
  const std::size_t d = indexer.size();
  Cache c{Matrix(d, hidden_dim_), Matrix(d, hidden_dim_), Matrix(d, outputs_)};
  for (std::size_t k = 0; k < d; ++k) {
    const Arc a = indexer.arc(k);
    const std::size_t bucket = distance_bucket(a.head, a.mod);
    for (std::size_t r = 0; r < hidden_dim_; ++r) {
      const double pre = as_head(static_cast<std::size_t>(a.head), r) + as_mod(static_cast<std::size_t>(a.mod), r) +
                         dist.at(bucket, r) + b.value[r];
      c.pre(k, r) = pre;
      c.hidden(k, r) = activate(activation_, pre);
    }
    for (std::size_t o = 0; o < outputs_; ++o) {
      double acc = ob.value[o];
      for (std::size_t r = 0; r < hidden_dim_; ++r) acc += out.at(o, r) * c.hidden(k, r);
      c.scores(k, o) = acc;
    }
  }
  return c;
}

Matrix ArcScorer::backward(ParamStore& store, const Cache& cache, const Matrix& h, const ArcIndexer& indexer,
                           const Matrix& grad_scores) const {
  Param& wh = store[w_head_];
  Param& wm = store[w_mod_];
  Param& b = store[bias_];
  Param& dist = store[dist_];
  Param& out = store[out_];
  Param& ob = store[out_bias_];
  const std::size_t d = indexer.size();
  // Gradient w.r.t. the per-node projections, then through W_head / W_mod.
  Matrix g_head(h.rows, hidden_dim_), g_mod(h.rows, hidden_dim_);
  std::vector<double> g_hidden(hidden_dim_);
  for (std::size_t k = 0; k < d; ++k) {
    bool any = false;
    for (std::size_t o = 0; o < outputs_; ++o) any = any || grad_scores(k, o) != 0.0;
    if (!any) continue;
    const Arc a = indexer.arc(k);
    const std::size_t bucket = distance_bucket(a.head, a.mod);
    std::fill(g_hidden.begin(), g_hidden.end(), 0.0);
    for (std::size_t o = 0; o < outputs_; ++o) {
      const double g = grad_scores(k, o);
      if (g == 0.0) continue;
      ob.grad[o] += g;
      for (std::size_t r = 0; r < hidden_dim_; ++r) {
        out.grad_at(o, r) += g * cache.hidden(k, r);
        g_hidden[r] += g * out.at(o, r);
      }
    }
    for (std::size_t r = 0; r < hidden_dim_; ++r) {
      const double g = g_hidden[r] * activate_grad(activation_, cache.pre(k, r), cache.hidden(k, r));
      b.grad[r] += g;
      dist.grad_at(bucket, r) += g;
      g_head(static_cast<std::size_t>(a.head), r) += g;
      g_mod(static_cast<std::size_t>(a.mod), r) += g;
    }
  }
  Matrix grad_h(h.rows, input_dim_);
  for (std::size_t i = 0; i < h.rows; ++i) {
    for (std::size_t r = 0; r < hidden_dim_; ++r) {
      const double gh = g_head(i, r);
      const double gm = g_mod(i, r);
      if (gh == 0.0 && gm == 0.0) continue;
      for (std::size_t k = 0; k < input_dim_; ++k) {
        wh.grad_at(r, k) += gh * h(i, k);
        wm.grad_at(r, k) += gm * h(i, k);
        grad_h(i, k) += gh * wh.at(r, k) + gm * wm.at(r, k);
      }
    }
  }
  return grad_h;
}

// ---------------------------------------------------------------- head features

Matrix head_feature_concat(const Matrix& h, std::span<const double> z, const ArcIndexer& indexer,
                           HeadPooling mode) {
  const int n = indexer.length();
  if (z.size() != indexer.size()) throw std::invalid_argument("head_feature_concat: z dimension mismatch");
  if (h.rows != static_cast<std::size_t>(n) + 1) throw std::invalid_argument("head_feature_concat: h rows mismatch");
  const std::size_t hd = h.cols;
  Matrix out(static_cast<std::size_t>(n), 2 * hd);
  for (int j = 1; j <= n; ++j) {
    const auto row = static_cast<std::size_t>(j - 1);
    for (std::size_t k = 0; k < hd; ++k) out(row, k) = h(static_cast<std::size_t>(j), k);
    double mass = 0.0;
    for (int i = indexer.first_head(); i <= n; ++i) {
      if (i == j) continue;
      const double w = z[indexer.index(i, j)];
      if (w == 0.0) continue;
      mass += w;
      for (std::size_t k = 0; k < hd; ++k) out(row, hd + k) += w * h(static_cast<std::size_t>(i), k);
    }
    if (mode == HeadPooling::kAverage && mass != 0.0) {
      for (std::size_t k = 0; k < hd; ++k) out(row, hd + k) /= mass;
    }
  }
  return out;
}

HeadConcatGrad head_feature_concat_backward(const Matrix& h, std::span<const double> z, const ArcIndexer& indexer,
                                            HeadPooling mode, const Matrix& grad_out) {
  const int n = indexer.length();
  const std::size_t hd = h.cols;
  HeadConcatGrad g{Matrix(h.rows, hd), std::vector<double>(indexer.size(), 0.0)};
  std::vector<double> pooled(hd);
  for (int j = 1; j <= n; ++j) {
    const auto row = static_cast<std::size_t>(j - 1);
    for (std::size_t k = 0; k < hd; ++k) g.grad_h(static_cast<std::size_t>(j), k) += grad_out(row, k);
    double mass = 0.0;
    std::fill(pooled.begin(), pooled.end(), 0.0);
    for (int i = indexer.first_head(); i <= n; ++i) {
      if (i == j) continue;
      const double w = z[indexer.index(i, j)];
      mass += w;
      for (std::size_t k = 0; k < hd; ++k) pooled[k] += w * h(static_cast<std::size_t>(i), k);
    }
    // Sum mode, or average mode with zero mass (treated as divisor 1).
    const double scale = (mode == HeadPooling::kAverage && mass != 0.0) ? 1.0 / mass : 1.0;
    const bool averaged = mode == HeadPooling::kAverage && mass != 0.0;
    for (int i = indexer.first_head(); i <= n; ++i) {
      if (i == j) continue;
      const std::size_t idx = indexer.index(i, j);
      const double w = z[idx];
      double gz = 0.0;
      for (std::size_t k = 0; k < hd; ++k) {
        const double go = grad_out(row, hd + k);
        g.grad_h(static_cast<std::size_t>(i), k) += go * w * scale;
        // d/dz_i of (sum_i z_i h_i) / mass = (h_i - pooled / mass) / mass.
        gz += go * (averaged ? (h(static_cast<std::size_t>(i), k) - pooled[k] * scale) * scale
                             : h(static_cast<std::size_t>(i), k));
      }
      g.grad_z[idx] = gz;
    }
  }
  return g;
}

// ---------------------------------------------------------------- classifier

ClassifierHead::ClassifierHead(ParamStore& store, const std::string& prefix, std::size_t input_dim,
                               std::size_t proj_dim, std::size_t hidden_dim, std::size_t classes, ParamGroup group)
    : input_dim_(input_dim), proj_dim_(proj_dim), hidden_dim_(hidden_dim), classes_(classes) {
  if (classes < 2) throw std::invalid_argument("ClassifierHead: need at least two classes");
  proj_ = store.add(prefix + ".proj", proj_dim, input_dim, group);
  proj_bias_ = store.add(prefix + ".proj_bias", proj_dim, 1, group);
  hid_ = store.add(prefix + ".hidden", hidden_dim, proj_dim, group);
  hid_bias_ = store.add(prefix + ".hidden_bias", hidden_dim, 1, group);
  out_ = store.add(prefix + ".out", classes, hidden_dim, group);
  out_bias_ = store.add(prefix + ".out_bias", classes, 1, group);
}

ClassifierHead::Cache ClassifierHead::forward(const ParamStore& store, const Matrix& x) const {
  if (x.cols != input_dim_ || x.rows == 0) throw std::invalid_argument("ClassifierHead: input shape mismatch");
  const Param& a = store[proj_];
  const Param& ab = store[proj_bias_];
  const Param& bm = store[hid_];
  const Param& bb = store[hid_bias_];
  const Param& cm = store[out_];
  const Param& cb = store[out_bias_];
  Cache c;
  c.pre_u = Matrix(x.rows, proj_dim_);
  c.u = Matrix(x.rows, proj_dim_);
  c.pooled.assign(proj_dim_, 0.0);
  for (std::size_t j = 0; j < x.rows; ++j) {
    for (std::size_t r = 0; r < proj_dim_; ++r) {
      double acc = ab.value[r];
      for (std::size_t k = 0; k < input_dim_; ++k) acc += a.at(r, k) * x(j, k);
      c.pre_u(j, r) = acc;
      c.u(j, r) = relu(acc);
      c.pooled[r] += c.u(j, r);
    }
  }
  c.pre_hidden.assign(hidden_dim_, 0.0);
  c.hidden.assign(hidden_dim_, 0.0);
  for (std::size_t r = 0; r < hidden_dim_; ++r) {
    double acc = bb.value[r];
    for (std::size_t k = 0; k < proj_dim_; ++k) acc += bm.at(r, k) * c.pooled[k];
    c.pre_hidden[r] = acc;
    c.hidden[r] = relu(acc);
  }
  c.logits.assign(classes_, 0.0);
  for (std::size_t o = 0; o < classes_; ++o) {
    double acc = cb.value[o];
    for (std::size_t k = 0; k < hidden_dim_; ++k) acc += cm.at(o, k) * c.hidden[k];
    c.logits[o] = acc;
  }
  c.log_probs = log_softmax(c.logits);
  return c;
}

double ClassifierHead::loss(const Cache& cache, int gold) {
  return -cache.log_probs.at(static_cast<std::size_t>(gold));
}

Matrix ClassifierHead::backward(ParamStore& store, const Cache& c, const Matrix& x, int gold) const {
  Param& a = store[proj_];
  Param& ab = store[proj_bias_];
  Param& bm = store[hid_];
  Param& bb = store[hid_bias_];
  Param& cm = store[out_];
  Param& cb = store[out_bias_];
  std::vector<double> g_logits(classes_);
  for (std::size_t o = 0; o < classes_; ++o) {
    g_logits[o] = std::exp(c.log_probs[o]) - (static_cast<int>(o) == gold ? 1.0 : 0.0);
  }
  std::vector<double> g_hidden(hidden_dim_, 0.0);
  for (std::size_t o = 0; o < classes_; ++o) {
    cb.grad[o] += g_logits[o];
    for (std::size_t k = 0; k < hidden_dim_; ++k) {
      cm.grad_at(o, k) += g_logits[o] * c.hidden[k];
      g_hidden[k] += g_logits[o] * cm.at(o, k);
    }
  }
  std::vector<double> g_pooled(proj_dim_, 0.0);
  for (std::size_t r = 0; r < hidden_dim_; ++r) {
    const double g = c.pre_hidden[r] > 0.0 ? g_hidden[r] : 0.0;
    if (g == 0.0) continue;
    bb.grad[r] += g;
    for (std::size_t k = 0; k < proj_dim_; ++k) {
      bm.grad_at(r, k) += g * c.pooled[k];
      g_pooled[k] += g * bm.at(r, k);
    }
  }
  Matrix grad_x(x.rows, input_dim_);
  for (std::size_t j = 0; j < x.rows; ++j) {
    for (std::size_t r = 0; r < proj_dim_; ++r) {
      const double g = c.pre_u(j, r) > 0.0 ? g_pooled[r] : 0.0;
      if (g == 0.0) continue;
      ab.grad[r] += g;
      for (std::size_t k = 0; k < input_dim_; ++k) {
        a.grad_at(r, k) += g * x(j, k);
        grad_x(j, k) += g * a.at(r, k);
      }
    }
  }
  return grad_x;
}

}  // namespace spigot
