#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "monet/datasets.hpp"
#include "monet/error.hpp"
#include "monet/graph.hpp"
#include "monet/linalg.hpp"
#include "monet/rng.hpp"

namespace monet {

enum class Propagation { Linear, Nonlinear };
enum class LayerAggregation { Last, Mean };

inline constexpr double kLeakySlope = 0.2;

struct HyperParams {
  std::size_t d = 64;
  std::size_t layers = 2;
  double alpha = 1.0;
  double beta = 0.3;
  double lambda = 1e-5;
  Propagation propagation = Propagation::Linear;
  bool self_connection = true;
  LayerAggregation aggregation = LayerAggregation::Last;
  bool attention = true;
  // Drop the scored item from its own attention history during training.
  bool mask_target_history = false;

  void validate() const {
    if (d < 1) throw ConfigError("d must be >= 1");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  }

  double effective_alpha() const { return self_connection ? alpha : 0.0; }

  /// Weight of the target-oriented score; zero when attention is off.
  double effective_beta() const { return attention ? beta : 0.0; }

  bool operator==(const HyperParams&) const = default;
};

/// Named variant presets used by the CLI and the ablation grid.
inline HyperParams apply_variant(HyperParams hp, const std::string& name) {
  if (name == "default" || name == "monet") return hp;
  if (name == "nonlinear" || name == "nonlinear-prop") {
    hp.propagation = Propagation::Nonlinear;
  } else if (name == "no-self" || name == "no-self-connection") {
    hp.self_connection = false;
  } else if (name == "layer-comb" || name == "layer-combination") {
    hp.aggregation = LayerAggregation::Mean;
  } else if (name == "lightgcn" || name == "monet-megcn") {
    hp.propagation = Propagation::Linear;
    hp.self_connection = false;
    hp.aggregation = LayerAggregation::Mean;
  } else if (name == "attention-off" || name == "monet-ta") {
    hp.attention = false;
  } else {
    throw ConfigError("unknown variant '" + name + "'");
  }
  return hp;
}

template <class T>
struct ModalityParams {
  Matrix<T> user_emb0;                  // |U| x d
  Matrix<T> proj_weight;                // d x d_m
  Matrix<T> proj_bias;                  // 1 x d
  std::vector<Matrix<T>> layer_weights;  // nonlinear propagation only, d x d each

  bool operator==(const ModalityParams&) const = default;
};

template <class T>
struct ModelParameters {
  std::array<ModalityParams<T>, 2> modality;

  ModalityParams<T>& operator[](Modality m) { return modality[static_cast<int>(m)]; }
  const ModalityParams<T>& operator[](Modality m) const { return modality[static_cast<int>(m)]; }

  /// Visits every parameter group as (name, matrix) in checkpoint order.
  template <class F>
  void for_each_group(F&& f) {
    visit_groups(*this, f);
  }
  template <class F>
  void for_each_group(F&& f) const {
    visit_groups(*this, f);
  }

  template <class U>
  ModelParameters<U> cast() const {
    ModelParameters<U> out;
    for (int m = 0; m < 2; ++m) {
      const auto& src = modality[m];
      auto& dst = out.modality[m];
      dst.user_emb0 = src.user_emb0.template cast<U>();
      dst.proj_weight = src.proj_weight.template cast<U>();
      dst.proj_bias = src.proj_bias.template cast<U>();
      for (const auto& w : src.layer_weights) dst.layer_weights.push_back(w.template cast<U>());
    }
    return out;
  }

  /// Same shapes, all zero.
  ModelParameters zeros_like() const {
    ModelParameters out = *this;
    out.for_each_group([](const std::string&, Matrix<T>& g) { g.setZero(); });
    return out;
  }

  bool operator==(const ModelParameters&) const = default;

 private:
  template <class Self, class F>
  static void visit_groups(Self& self, F& f) {
    for (const Modality m : kModalities) {
      auto& p = self[m];
      const std::string s = modality_suffix(m);
      f("user_emb0_" + s, p.user_emb0);
      f("proj_weight_" + s, p.proj_weight);
      f("proj_bias_" + s, p.proj_bias);
      for (std::size_t l = 0; l < p.layer_weights.size(); ++l) {
        f("layer_weight_" + s + "_" + std::to_string(l + 1), p.layer_weights[l]);
      }
    }
  }
};

namespace detail {

template <class T>
Matrix<T> glorot_uniform(Index rows, Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix<T> m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<T>(rng.uniform(-bound, bound));
  return m;
}

}  // namespace detail

/// Glorot-uniform user embeddings, projections and layer weights; zero
/// biases. Each (modality, group) pair draws from its own seeded stream.
template <class T = float>
ModelParameters<T> init_parameters(const HyperParams& hp, std::array<std::size_t, 2> feature_dims,
                                   std::size_t num_users, std::size_t num_items,
                                   std::uint64_t seed) {
  hp.validate();
  (void)num_items;
  ModelParameters<T> params;
  const auto d = static_cast<Index>(hp.d);
  for (const Modality m : kModalities) {
    const auto mi = static_cast<std::uint64_t>(m);
    auto& p = params[m];
    Rng user_rng(derive_seed(seed, 100 + mi));
    p.user_emb0 = detail::glorot_uniform<T>(static_cast<Index>(num_users), d, user_rng);
    Rng proj_rng(derive_seed(seed, 200 + mi));
    p.proj_weight = detail::glorot_uniform<T>(d, static_cast<Index>(feature_dims[mi]), proj_rng);
    p.proj_bias = Matrix<T>::Zero(1, d);
    if (hp.propagation == Propagation::Nonlinear) {
      Rng layer_rng(derive_seed(seed, 300 + mi));
      for (std::size_t l = 0; l < hp.layers; ++l) {
        p.layer_weights.push_back(detail::glorot_uniform<T>(d, d, layer_rng));
      }
    }
  }
  return params;
}

/// Row-wise affine map e_i^0 = W f_i + b.
template <class T>
Matrix<T> project_features(const Matrix<T>& features, const ModalityParams<T>& p) {
  if (features.cols() != p.proj_weight.cols()) {
    throw ShapeError("project_features: feature dim " + std::to_string(features.cols()) +
                     " does not match projection width " + std::to_string(p.proj_weight.cols()));
  }
  Matrix<T> out = features * p.proj_weight.transpose();
  out.rowwise() += p.proj_bias.row(0);
  return out;
}

template <class T>
using FeatureRefs = std::array<const Matrix<T>*, 2>;

template <class T>
struct ModalityEncoding {
  Matrix<T> item_emb0;
  std::vector<Matrix<T>> user_layers;  // layers 0..L
  std::vector<Matrix<T>> item_layers;
  Matrix<T> user_final;
  Matrix<T> item_final;
};

template <class T>
struct EncoderOutput {
  std::array<ModalityEncoding<T>, 2> modality;
  Matrix<T> fused_user;  // |U| x 2d, [textual || visual]
  Matrix<T> fused_item;  // |I| x 2d

  const ModalityEncoding<T>& operator[](Modality m) const { return modality[static_cast<int>(m)]; }
};

template <class T>
T leaky_relu(T x) {
  return x > T(0) ? x : static_cast<T>(kLeakySlope) * x;
}

template <class T>
EncoderOutput<T> encode(const BipartiteGraph& g, const ModelParameters<T>& params,
                        const FeatureRefs<T>& features, const HyperParams& hp) {
  hp.validate();
  EncoderOutput<T> enc;
  const auto d = static_cast<Index>(hp.d);
  const double alpha = hp.effective_alpha();
  for (const Modality m : kModalities) {
    const auto& p = params[m];
    auto& out = enc.modality[static_cast<int>(m)];
    const Matrix<T>& feats = *features[static_cast<int>(m)];
    require_shape(std::string("user_emb0_") + modality_suffix(m), p.user_emb0.rows(),
                  p.user_emb0.cols(), static_cast<Index>(g.num_users()), d);
    require_shape(std::string("proj_weight_") + modality_suffix(m), p.proj_weight.rows(),
                  p.proj_weight.cols(), d, feats.cols());
    if (static_cast<std::size_t>(feats.rows()) != g.num_items()) {
      throw ShapeError(std::string(modality_name(m)) + " features have " +
                       std::to_string(feats.rows()) + " rows, graph has " +
                       std::to_string(g.num_items()) + " items");
    }
    if (hp.propagation == Propagation::Nonlinear && p.layer_weights.size() != hp.layers) {
      throw ShapeError("nonlinear propagation needs " + std::to_string(hp.layers) +
                       " layer weights");
    }

    out.item_emb0 = project_features(feats, p);
    out.user_layers.push_back(p.user_emb0);
    out.item_layers.push_back(out.item_emb0);
    for (std::size_t l = 1; l <= hp.layers; ++l) {
      auto next = propagate(g, out.user_layers.back(), out.item_layers.back(), alpha);
      if (hp.propagation == Propagation::Nonlinear) {
        const Matrix<T>& w = p.layer_weights[l - 1];
        next.users = (next.users * w.transpose()).unaryExpr([](T x) { return leaky_relu(x); });
        next.items = (next.items * w.transpose()).unaryExpr([](T x) { return leaky_relu(x); });
      }
      out.user_layers.push_back(std::move(next.users));
      out.item_layers.push_back(std::move(next.items));
    }
    if (hp.aggregation == LayerAggregation::Last) {
      out.user_final = out.user_layers.back();
      out.item_final = out.item_layers.back();
    } else {
      out.user_final = Matrix<T>::Zero(p.user_emb0.rows(), d);
      out.item_final = Matrix<T>::Zero(out.item_emb0.rows(), d);
      for (std::size_t l = 0; l <= hp.layers; ++l) {
        out.user_final += out.user_layers[l];
        out.item_final += out.item_layers[l];
      }
      const T inv = static_cast<T>(1.0 / static_cast<double>(hp.layers + 1));
      out.user_final *= inv;
      out.item_final *= inv;
    }
  }
  const auto& t = enc.modality[0];
  const auto& v = enc.modality[1];
  enc.fused_user.resize(t.user_final.rows(), 2 * d);
  enc.fused_user << t.user_final, v.user_final;
  enc.fused_item.resize(t.item_final.rows(), 2 * d);
  enc.fused_item << t.item_final, v.item_final;
  return enc;
}

/// Softmax over logits with max subtraction.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - mx);
    total += out[k];
  }
  for (auto& w : out) w /= total;
  return out;
}

namespace detail {

inline void check_item(std::size_t item, std::size_t num_items) {
  if (item >= num_items) {
    throw DataError("item index " + std::to_string(item) + " out of range [0, " +
                    std::to_string(num_items) + ")");
  }
}

template <class T>
std::vector<double> attention_logits(const Matrix<T>& fused_item, std::uint32_t target,
                                     std::span<const std::uint32_t> history) {
  std::vector<double> logits(history.size());
  const auto ec = fused_item.row(target);
  for (std::size_t k = 0; k < history.size(); ++k) {
    logits[k] = dot64(ec, fused_item.row(history[k]));
  }
  return logits;
}

}  // namespace detail

/// Relevance weights of the user's interacted items with respect to a target.
template <class T>
std::vector<double> attention_weights(const Matrix<T>& fused_item, std::uint32_t target,
                                      std::span<const std::uint32_t> user_items) {
  if (user_items.empty()) throw DataError("attention needs a non-empty interaction history");
  const auto n = static_cast<std::size_t>(fused_item.rows());
  detail::check_item(target, n);
  for (const auto i : user_items) detail::check_item(i, n);
  const auto logits = detail::attention_logits(fused_item, target, user_items);
  return softmax(logits);
}

/// Convex combination of the user's interacted fused item embeddings.
template <class T>
Vector<double> target_oriented_embedding(const Matrix<T>& fused_item,
                                         std::span<const double> weights,
                                         std::span<const std::uint32_t> user_items) {
  if (weights.size() != user_items.size()) {
    throw ShapeError("target_oriented_embedding: " + std::to_string(weights.size()) +
                     " weights for " + std::to_string(user_items.size()) + " items");
  }
  Vector<double> out = Vector<double>::Zero(fused_item.cols());
  for (std::size_t k = 0; k < user_items.size(); ++k) {
    out += weights[k] * fused_item.row(user_items[k]).transpose().template cast<double>();
  }
  return out;
}

struct PreferenceScore {
  double general = 0.0;
  double target_oriented = 0.0;
  double blended = 0.0;
};

inline double blend(double general, double target_oriented, double beta) {
  return (1.0 - beta) * general + beta * target_oriented;
}

namespace detail {

/// Scores one candidate. The target-oriented term is evaluated as
/// sum_k a_k s_k, which equals e_u^c . e_c since s_k = e_c . e_k.
template <class T>
PreferenceScore score_one(std::uint32_t user, std::uint32_t target, const EncoderOutput<T>& enc,
                          std::span<const std::uint32_t> history, const HyperParams& hp) {
  PreferenceScore s;
  s.general = dot64(enc.fused_user.row(user), enc.fused_item.row(target));
  if (hp.attention) {
    const auto logits = attention_logits(enc.fused_item, target, history);
    const auto weights = softmax(logits);
    double acc = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) acc += weights[k] * logits[k];
    s.target_oriented = acc;
    s.blended = blend(s.general, s.target_oriented, hp.beta);
  } else {
    s.blended = s.general;
  }
  return s;
}

inline void check_user(const BipartiteGraph& g, std::size_t user) {
  if (user >= g.num_users()) {
    throw DataError("user index " + std::to_string(user) + " out of range [0, " +
                    std::to_string(g.num_users()) + ")");
  }
}

}  // namespace detail

template <class T>
PreferenceScore score(std::uint32_t user, std::uint32_t target, const EncoderOutput<T>& enc,
                      const BipartiteGraph& g, const HyperParams& hp) {
  detail::check_user(g, user);
  detail::check_item(target, g.num_items());
  return detail::score_one(user, target, enc, g.user_items(user), hp);
}

/// Blended scores for a list of candidates; element k equals
/// score(user, candidates[k]).blended.
template <class T>
std::vector<double> score_all_items(std::uint32_t user, std::span<const std::uint32_t> candidates,
                                    const EncoderOutput<T>& enc, const BipartiteGraph& g,
                                    const HyperParams& hp) {
  detail::check_user(g, user);
  const auto history = g.user_items(user);
  std::vector<double> out(candidates.size());
  // History and user rows converted once; the candidate loop then reads
  // contiguous double rows.
  const auto width = enc.fused_item.cols();
  const Vector<double> user_row = enc.fused_user.row(user).transpose().template cast<double>();
  Matrix<double> hist(static_cast<Index>(history.size()), width);
  for (std::size_t k = 0; k < history.size(); ++k) {
    hist.row(static_cast<Index>(k)) = enc.fused_item.row(history[k]).template cast<double>();
  }
  std::vector<double> logits(history.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    detail::check_item(candidates[c], g.num_items());
    const auto cand = enc.fused_item.row(candidates[c]);
    double general = 0.0;
    for (Index k = 0; k < width; ++k) general += user_row[k] * static_cast<double>(cand[k]);
    if (!hp.attention) {
      out[c] = general;
      continue;
    }
    for (std::size_t k = 0; k < history.size(); ++k) {
      double acc = 0.0;
      const auto h = hist.row(static_cast<Index>(k));
      for (Index j = 0; j < width; ++j) acc += static_cast<double>(cand[j]) * h[j];
      logits[k] = acc;
    }
    const auto weights = softmax(logits);
    double target_oriented = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) target_oriented += weights[k] * logits[k];
    out[c] = blend(general, target_oriented, hp.beta);
  }
  return out;
}

}  // namespace monet
