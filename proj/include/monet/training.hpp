#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "monet/datasets.hpp"
#include "monet/error.hpp"
#include "monet/evaluation.hpp"
#include "monet/graph.hpp"
#include "monet/linalg.hpp"
#include "monet/model.hpp"
#include "monet/rng.hpp"

namespace monet {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 1024;
  std::size_t max_epochs = 1000;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  std::size_t cutoff = 20;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning_rate must be > 0");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (cutoff < 1) throw ConfigError("cutoff must be >= 1");
  }
};

struct TrainingTriple {
  std::uint32_t user = 0;
  std::uint32_t pos_item = 0;
  std::uint32_t neg_item = 0;

  bool operator==(const TrainingTriple&) const = default;
};

/// One triple per training edge with a uniformly drawn non-interacted
/// negative, shuffled. Deterministic in (seed, epoch).
inline std::vector<TrainingTriple> sample_epoch(const BipartiteGraph& g, std::uint64_t seed,
                                                std::uint64_t epoch) {
  Rng rng(derive_seed(seed, 0x5A3D1E00ULL + epoch));
  std::vector<TrainingTriple> triples;
  triples.reserve(g.num_edges());
  const auto n_items = static_cast<std::uint64_t>(g.num_items());
  for (std::uint32_t u = 0; u < g.num_users(); ++u) {
    if (g.user_degree(u) >= g.num_items()) {
      throw DataError("user " + std::to_string(u) +
                      " interacted with every item; no negative can be sampled");
    }
    for (const auto i : g.user_items(u)) {
      std::uint32_t j;
      do {
        j = static_cast<std::uint32_t>(rng.below(n_items));
      } while (g.has_edge(u, j));
      triples.push_back({u, i, j});
    }
  }
  rng.shuffle(std::span<TrainingTriple>(triples));
  return triples;
}

inline std::vector<TrainingTriple> sample_epoch(const InteractionDataset& ds, std::uint64_t seed,
                                                std::uint64_t epoch) {
  return sample_epoch(build_graph(ds), seed, epoch);
}

/// ln(1 + e^x) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Batch-mean BPR loss plus lambda * params_l2.
inline double bpr_loss(std::span<const double> scores_pos, std::span<const double> scores_neg,
                       double params_l2, double lambda) {
  if (scores_pos.size() != scores_neg.size()) {
    throw ShapeError("bpr_loss: score vectors differ in length");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < scores_pos.size(); ++k) {
    acc += softplus(-(scores_pos[k] - scores_neg[k]));
  }
  const double mean = scores_pos.empty() ? 0.0 : acc / static_cast<double>(scores_pos.size());
  return mean + lambda * params_l2;
}

/// Squared norm of the parameters a batch touches, scaled by 1/|batch|:
/// the layer-0 user rows of every triple (per modality) plus the shared
/// projection and layer weights once.
template <class T>
double regularization_l2(std::span<const TrainingTriple> batch, const ModelParameters<T>& params) {
  if (batch.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& t : batch) {
    for (const Modality m : kModalities) {
      acc += params[m].user_emb0.row(t.user).template cast<double>().squaredNorm();
    }
  }
  for (const Modality m : kModalities) {
    const auto& p = params[m];
    acc += p.proj_weight.template cast<double>().squaredNorm();
    acc += p.proj_bias.template cast<double>().squaredNorm();
    for (const auto& w : p.layer_weights) acc += w.template cast<double>().squaredNorm();
  }
  return acc / static_cast<double>(batch.size());
}

/// Attention history used for a training score. With masking enabled the
/// scored item is removed, unless it is the only interaction.
inline std::vector<std::uint32_t> training_history(const BipartiteGraph& g, std::uint32_t user,
                                                   std::uint32_t item, const HyperParams& hp) {
  const auto hist = g.user_items(user);
  std::vector<std::uint32_t> out(hist.begin(), hist.end());
  if (hp.mask_target_history && out.size() > 1) std::erase(out, item);
  return out;
}

template <class T>
PreferenceScore training_score(std::uint32_t user, std::uint32_t item, const EncoderOutput<T>& enc,
                               const BipartiteGraph& g, const HyperParams& hp) {
  const auto hist = training_history(g, user, item, hp);
  return detail::score_one(user, item, enc, hist, hp);
}

template <class T>
struct GradientResult {
  ModelParameters<T> grads;
  double loss = 0.0;
  double bpr = 0.0;
  double reg = 0.0;
};

namespace detail {

/// Accumulates d(score)/d(fused embeddings) * upstream into the fused
/// gradient buffers.
template <class T>
void backprop_score(std::uint32_t user, std::uint32_t item, double upstream,
                    const EncoderOutput<T>& enc, const BipartiteGraph& g, const HyperParams& hp,
                    Matrix<double>& d_user, Matrix<double>& d_item) {
  const double beta = hp.effective_beta();
  const Vector<double> eu = enc.fused_user.row(user).transpose().template cast<double>();
  const Vector<double> ec = enc.fused_item.row(item).transpose().template cast<double>();
  d_user.row(user) += (upstream * (1.0 - beta)) * ec.transpose();
  d_item.row(item) += (upstream * (1.0 - beta)) * eu.transpose();
  if (beta == 0.0) return;

  // y_o = sum_k a_k s_k with s_k = e_c . e_k, so dy_o/ds_k = a_k (1 + s_k - y_o).
  const auto hist = training_history(g, user, item, hp);
  const auto logits = attention_logits(enc.fused_item, item, hist);
  const auto weights = softmax(logits);
  double yo = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) yo += weights[k] * logits[k];
  Vector<double> d_target = Vector<double>::Zero(ec.size());
  for (std::size_t k = 0; k < hist.size(); ++k) {
    const double gamma = upstream * beta * weights[k] * (1.0 + logits[k] - yo);
    const auto ek = enc.fused_item.row(hist[k]).template cast<double>();
    d_target += gamma * ek.transpose();
    d_item.row(hist[k]) += gamma * ec.transpose();
  }
  d_item.row(item) += d_target.transpose();
}

}  // namespace detail

/// Analytic gradient of the batch loss
///   mean_k softplus(-(y_ui - y_uj)) + lambda * regularization_l2(batch)
/// with respect to every parameter group. `enc` must be encode(params).
template <class T>
GradientResult<T> compute_gradients(std::span<const TrainingTriple> batch,
                                    const ModelParameters<T>& params, const BipartiteGraph& g,
                                    const FeatureRefs<T>& features, const EncoderOutput<T>& enc,
                                    const HyperParams& hp) {
  GradientResult<T> res;
  res.grads = params.zeros_like();
  if (batch.empty()) return res;

  const auto d = static_cast<Index>(hp.d);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  Matrix<double> d_user = Matrix<double>::Zero(enc.fused_user.rows(), 2 * d);
  Matrix<double> d_item = Matrix<double>::Zero(enc.fused_item.rows(), 2 * d);

  double bpr_sum = 0.0;
  for (const auto& t : batch) {
    const double yp = training_score(t.user, t.pos_item, enc, g, hp).blended;
    const double yn = training_score(t.user, t.neg_item, enc, g, hp).blended;
    const double x = yp - yn;
    bpr_sum += softplus(-x);
    const double coef = sigmoid(-x) * inv_batch;
    if (coef == 0.0) continue;
    detail::backprop_score(t.user, t.pos_item, -coef, enc, g, hp, d_user, d_item);
    detail::backprop_score(t.user, t.neg_item, coef, enc, g, hp, d_user, d_item);
  }
  res.bpr = bpr_sum * inv_batch;

  const double alpha = hp.effective_alpha();
  const std::size_t L = hp.layers;
  for (const Modality m : kModalities) {
    const int mi = static_cast<int>(m);
    const auto& enc_m = enc.modality[mi];
    const auto& p = params[m];
    auto& gp = res.grads[m];

    std::vector<Matrix<T>> du(L + 1), di(L + 1);
    for (std::size_t l = 0; l <= L; ++l) {
      du[l] = Matrix<T>::Zero(enc_m.user_final.rows(), d);
      di[l] = Matrix<T>::Zero(enc_m.item_final.rows(), d);
    }
    const Matrix<T> du_final = d_user.middleCols(mi * d, d).template cast<T>();
    const Matrix<T> di_final = d_item.middleCols(mi * d, d).template cast<T>();
    if (hp.aggregation == LayerAggregation::Last) {
      du[L] = du_final;
      di[L] = di_final;
    } else {
      const T inv = static_cast<T>(1.0 / static_cast<double>(L + 1));
      for (std::size_t l = 0; l <= L; ++l) {
        du[l] = du_final * inv;
        di[l] = di_final * inv;
      }
    }

    for (std::size_t l = L; l >= 1; --l) {
      if (hp.propagation == Propagation::Linear) {
        const auto back = propagate(g, du[l], di[l], alpha);
        du[l - 1] += back.users;
        di[l - 1] += back.items;
        continue;
      }
      // X_l = lrelu(Z W^T), Z = propagate(X_{l-1}); lrelu' follows sign(X_l).
      const auto z = propagate(g, enc_m.user_layers[l - 1], enc_m.item_layers[l - 1], alpha);
      const auto slope = [](T out) { return out > T(0) ? T(1) : static_cast<T>(kLeakySlope); };
      const Matrix<T> dpu = du[l].cwiseProduct(enc_m.user_layers[l].unaryExpr(slope));
      const Matrix<T> dpi = di[l].cwiseProduct(enc_m.item_layers[l].unaryExpr(slope));
      const Matrix<T>& w = p.layer_weights[l - 1];
      gp.layer_weights[l - 1] = dpu.transpose() * z.users + dpi.transpose() * z.items;
      const Matrix<T> dzu = dpu * w;
      const Matrix<T> dzi = dpi * w;
      const auto back = propagate(g, dzu, dzi, alpha);
      du[l - 1] += back.users;
      di[l - 1] += back.items;
    }

    gp.user_emb0 = du[0];
    gp.proj_weight = di[0].transpose() * (*features[mi]);
    gp.proj_bias = di[0].colwise().sum();
  }

  res.reg = regularization_l2(batch, params);
  if (hp.lambda != 0.0) {
    const T scale = static_cast<T>(2.0 * hp.lambda * inv_batch);
    for (const auto& t : batch) {
      for (const Modality m : kModalities) {
        res.grads[m].user_emb0.row(t.user) += scale * params[m].user_emb0.row(t.user);
      }
    }
    for (const Modality m : kModalities) {
      auto& gp = res.grads[m];
      const auto& p = params[m];
      gp.proj_weight += scale * p.proj_weight;
      gp.proj_bias += scale * p.proj_bias;
      for (std::size_t l = 0; l < p.layer_weights.size(); ++l) {
        gp.layer_weights[l] += scale * p.layer_weights[l];
      }
    }
  }
  res.loss = res.bpr + hp.lambda * res.reg;
  return res;
}

/// Forward-only batch loss, the quantity compute_gradients differentiates.
template <class T>
double batch_loss(std::span<const TrainingTriple> batch, const ModelParameters<T>& params,
                  const BipartiteGraph& g, const EncoderOutput<T>& enc, const HyperParams& hp) {
  std::vector<double> pos, neg;
  for (const auto& t : batch) {
    pos.push_back(training_score(t.user, t.pos_item, enc, g, hp).blended);
    neg.push_back(training_score(t.user, t.neg_item, enc, g, hp).blended);
  }
  return bpr_loss(pos, neg, regularization_l2(batch, params), hp.lambda);
}

// Optimizer -------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class T>
struct AdamState {
  ModelParameters<T> first;
  ModelParameters<T> second;
  std::uint64_t step = 0;

  static AdamState for_params(const ModelParameters<T>& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
  }
};

namespace detail {

template <class T>
std::vector<std::pair<std::string, Matrix<T>*>> group_pointers(ModelParameters<T>& p) {
  std::vector<std::pair<std::string, Matrix<T>*>> out;
  p.for_each_group([&](const std::string& name, Matrix<T>& m) { out.emplace_back(name, &m); });
  return out;
}

template <class T>
std::vector<std::pair<std::string, const Matrix<T>*>> group_pointers(const ModelParameters<T>& p) {
  std::vector<std::pair<std::string, const Matrix<T>*>> out;
  p.for_each_group([&](const std::string& name, const Matrix<T>& m) { out.emplace_back(name, &m); });
  return out;
}

}  // namespace detail

/// Bias-corrected adaptive-moment update. Throws before touching anything
/// if a gradient group holds a non-finite value.
template <class T>
void optimizer_step(ModelParameters<T>& params, const ModelParameters<T>& grads,
                    AdamState<T>& state, double learning_rate, const AdamConfig& cfg = {}) {
  auto ps = detail::group_pointers(params);
  const auto gs = detail::group_pointers(grads);
  auto ms = detail::group_pointers(state.first);
  auto vs = detail::group_pointers(state.second);
  if (gs.size() != ps.size() || ms.size() != ps.size() || vs.size() != ps.size()) {
    throw ShapeError("optimizer_step: parameter group count mismatch");
  }
  for (std::size_t k = 0; k < ps.size(); ++k) {
    require_shape("gradient " + gs[k].first, gs[k].second->rows(), gs[k].second->cols(),
                  ps[k].second->rows(), ps[k].second->cols());
    if (!gs[k].second->allFinite()) {
      throw NumericError("non-finite gradient in parameter group " + gs[k].first);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
  const T lr = static_cast<T>(learning_rate);
  const T eps = static_cast<T>(cfg.epsilon);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    T* p = ps[k].second->data();
    const T* g = gs[k].second->data();
    T* m = ms[k].second->data();
    T* v = vs[k].second->data();
    const Index n = ps[k].second->size();
    for (Index e = 0; e < n; ++e) {
      m[e] = b1 * m[e] + (T(1) - b1) * g[e];
      v[e] = b2 * v[e] + (T(1) - b2) * g[e] * g[e];
      const T mhat = m[e] * c1;
      const T vhat = v[e] * c2;
      p[e] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// Training loop ----------------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_recall = std::numeric_limits<double>::quiet_NaN();
  double val_ndcg = std::numeric_limits<double>::quiet_NaN();
};

template <class T>
struct TrainResult {
  ModelParameters<T> params;  // best validation checkpoint
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_recall = std::numeric_limits<double>::quiet_NaN();
  std::size_t epochs_run = 0;
};

inline std::uint64_t init_seed(std::uint64_t seed) { return derive_seed(seed, 0x1A17); }

/// Sample, forward, backpropagate and step for each batch; evaluate
/// validation recall every `eval_every` epochs, keeping the best parameters
/// and stopping after `patience` evaluations without improvement.
template <class T>
TrainResult<T> train(const InteractionDataset& ds, const FeatureRefs<T>& features,
                     const HyperParams& hp, const TrainConfig& tc,
                     const std::function<void(const EpochLog&)>& on_epoch = {}) {
  hp.validate();
  tc.validate();
  const BipartiteGraph g = build_graph(ds);
  ModelParameters<T> params = init_parameters<T>(
      hp, {static_cast<std::size_t>(features[0]->cols()), static_cast<std::size_t>(features[1]->cols())},
      ds.num_users, ds.num_items, init_seed(tc.seed));
  TrainResult<T> result;
  result.params = params;
  if (tc.max_epochs == 0) return result;

  const bool has_validation = !ds.validation.empty();
  AdamState<T> adam = AdamState<T>::for_params(params);
  double best = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    const auto triples = sample_epoch(g, tc.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < triples.size(); start += tc.batch_size) {
      const std::size_t len = std::min(tc.batch_size, triples.size() - start);
      const std::span<const TrainingTriple> batch(triples.data() + start, len);
      const auto enc = encode(g, params, features, hp);
      const auto gr = compute_gradients(batch, params, g, features, enc, hp);
      if (!std::isfinite(gr.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
      }
      loss_sum += gr.loss * static_cast<double>(len);
      optimizer_step(params, gr.grads, adam, tc.learning_rate);
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = loss_sum / static_cast<double>(triples.size());
    result.epochs_run = epoch;

    bool stop = false;
    if (epoch % tc.eval_every == 0 || epoch == tc.max_epochs) {
      if (has_validation) {
        const auto enc = encode(g, params, features, hp);
        const auto rep = evaluate(enc, g, ds, hp, tc.cutoff, Phase::Validation);
        entry.val_recall = rep.recall;
        entry.val_ndcg = rep.ndcg;
        if (rep.recall > best) {
          best = rep.recall;
          result.params = params;
          result.best_epoch = epoch;
          result.best_val_recall = rep.recall;
          stale = 0;
        } else if (++stale >= tc.patience) {
          stop = true;
        }
      } else {
        result.params = params;
        result.best_epoch = epoch;
      }
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (stop) break;
  }
  return result;
}

}  // namespace monet
