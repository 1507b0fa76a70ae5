#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "monet/datasets.hpp"
#include "monet/error.hpp"
#include "monet/graph.hpp"
#include "monet/linalg.hpp"
#include "monet/model.hpp"
#include "monet/rng.hpp"

namespace monet {

enum class Phase { Validation, Test };

inline const char* phase_name(Phase p) { return p == Phase::Validation ? "validation" : "test"; }

struct TopNMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
};

/// Binary-relevance precision, recall and NDCG at n. The ideal DCG is taken
/// over min(n, |relevant|) hits; ranks are 1-based with a log2(rank + 1)
/// discount.
inline TopNMetrics metrics_at_n(std::span<const std::uint32_t> recommended,
                                const std::unordered_set<std::uint32_t>& relevant, std::size_t n) {
  if (n < 1) throw ConfigError("cutoff n must be >= 1");
  if (relevant.empty()) throw DataError("metrics_at_n: relevant set is empty");
  std::size_t hits = 0;
  double dcg = 0.0;
  const std::size_t depth = std::min(n, recommended.size());
  for (std::size_t r = 0; r < depth; ++r) {
    if (relevant.count(recommended[r])) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(n, relevant.size());
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return {static_cast<double>(hits) / static_cast<double>(n),
          static_cast<double>(hits) / static_cast<double>(relevant.size()), dcg / idcg};
}

/// Sorts candidate indices by descending score, ties by ascending item index,
/// and keeps the first n.
inline std::vector<std::uint32_t> top_n_by_score(std::span<const std::uint32_t> candidates,
                                                 std::span<const double> scores, std::size_t n) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  };
  const std::size_t keep = std::min(n, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<Index>(keep), order.end(), better);
  std::vector<std::uint32_t> out(keep);
  for (std::size_t k = 0; k < keep; ++k) out[k] = candidates[order[k]];
  return out;
}

namespace detail {

/// All items not in any of the excluded (sorted) lists.
inline std::vector<std::uint32_t> candidates_excluding(
    std::size_t num_items, std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  std::vector<char> excluded(num_items, 0);
  for (const auto i : a) excluded[i] = 1;
  for (const auto i : b) excluded[i] = 1;
  std::vector<std::uint32_t> out;
  out.reserve(num_items);
  for (std::uint32_t i = 0; i < num_items; ++i) {
    if (!excluded[i]) out.push_back(i);
  }
  return out;
}

template <class T>
std::vector<std::uint32_t> rank_with_history(std::uint32_t user, std::size_t n,
                                             const EncoderOutput<T>& enc, const BipartiteGraph& g,
                                             std::span<const std::uint32_t> extra_excluded,
                                             const HyperParams& hp) {
  const auto cands = candidates_excluding(g.num_items(), g.user_items(user), extra_excluded);
  const auto scores = score_all_items(user, cands, enc, g, hp);
  return top_n_by_score(cands, scores, n);
}

}  // namespace detail

/// Top-n items for `user` among items outside the training history (and,
/// for the test phase, outside the validation items as well).
template <class T>
std::vector<std::uint32_t> rank_topn(std::uint32_t user, std::size_t n, const EncoderOutput<T>& enc,
                                     const BipartiteGraph& g, const InteractionDataset& ds,
                                     const HyperParams& hp, Phase phase) {
  detail::check_user(g, user);
  std::vector<std::uint32_t> extra;
  if (phase == Phase::Test) {
    for (const auto& p : ds.validation) {
      if (p.user == user) extra.push_back(p.item);
    }
  }
  return detail::rank_with_history(user, n, enc, g, extra, hp);
}

struct UserMetrics {
  std::uint32_t user = 0;
  TopNMetrics metrics;
};

struct EvalReport {
  std::size_t n = 0;
  Phase phase = Phase::Test;
  double precision = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
  std::size_t num_users_evaluated = 0;
  std::vector<UserMetrics> per_user;
};

/// Full-ranking evaluation averaged over users with a non-empty phase set.
template <class T>
EvalReport evaluate(const EncoderOutput<T>& enc, const BipartiteGraph& g,
                    const InteractionDataset& ds, const HyperParams& hp, std::size_t n, Phase phase) {
  const auto val = items_by_user(ds.num_users, ds.validation);
  const auto tst = items_by_user(ds.num_users, ds.test);
  const auto& target = phase == Phase::Validation ? val : tst;
  EvalReport rep;
  rep.n = n;
  rep.phase = phase;
  for (std::uint32_t u = 0; u < ds.num_users; ++u) {
    if (target[u].empty()) continue;
    const std::span<const std::uint32_t> extra =
        phase == Phase::Test ? std::span<const std::uint32_t>(val[u])
                             : std::span<const std::uint32_t>();
    const auto ranked = detail::rank_with_history(u, n, enc, g, extra, hp);
    const std::unordered_set<std::uint32_t> relevant(target[u].begin(), target[u].end());
    rep.per_user.push_back({u, metrics_at_n(ranked, relevant, n)});
  }
  if (rep.per_user.empty()) {
    throw DataError(std::string("no users with ") + phase_name(phase) + " interactions");
  }
  for (const auto& um : rep.per_user) {
    rep.precision += um.metrics.precision;
    rep.recall += um.metrics.recall;
    rep.ndcg += um.metrics.ndcg;
  }
  rep.num_users_evaluated = rep.per_user.size();
  const double count = static_cast<double>(rep.num_users_evaluated);
  rep.precision /= count;
  rep.recall /= count;
  rep.ndcg /= count;
  return rep;
}

// Modality preservation -----------------------------------------------------

struct SampleMode {
  bool exact = true;
  std::size_t sample_size = 0;
  std::uint64_t seed = 0;

  static SampleMode exact_mode() { return {}; }
  static SampleMode sampled(std::size_t size, std::uint64_t seed) { return {false, size, seed}; }

  std::string describe() const {
    return exact ? std::string("exact")
                 : "sampled(" + std::to_string(sample_size) + "," + std::to_string(seed) + ")";
  }
};

struct AvgDiffEntry {
  double avg_diff = 0.0;
  std::size_t num_pairs = 0;
  SampleMode mode;
};

struct AvgDiffReport {
  std::array<AvgDiffEntry, 2> modality;

  const AvgDiffEntry& operator[](Modality m) const { return modality[static_cast<int>(m)]; }
};

namespace detail {

/// Unit-normalized rows in double; zero rows stay zero so that their cosine
/// with anything is 0.
template <class T>
Matrix<double> normalized_rows(const Matrix<T>& m) {
  Matrix<double> out = m.template cast<double>();
  for (Index r = 0; r < out.rows(); ++r) {
    const double norm = out.row(r).norm();
    if (norm > 0.0) out.row(r) /= norm;
  }
  return out;
}

}  // namespace detail

/// Mean over ordered pairs i != j of |cos(f_i, f_j) - cos(e_i, e_j)|.
template <class TF, class TE>
AvgDiffEntry avg_diff(const Matrix<TF>& features, const Matrix<TE>& final_emb, SampleMode mode) {
  if (features.rows() != final_emb.rows()) {
    throw ShapeError("avg_diff: " + std::to_string(features.rows()) + " feature rows vs " +
                     std::to_string(final_emb.rows()) + " embedding rows");
  }
  const Index n = features.rows();
  if (n < 2) throw DataError("avg_diff needs at least two items");
  const Matrix<double> fn = detail::normalized_rows(features);
  const Matrix<double> en = detail::normalized_rows(final_emb);
  AvgDiffEntry out;
  out.mode = mode;
  if (mode.exact) {
    constexpr Index kBlock = 256;
    double total = 0.0;
    for (Index start = 0; start < n; start += kBlock) {
      const Index rows = std::min(kBlock, n - start);
      const Matrix<double> gf = fn.middleRows(start, rows) * fn.transpose();
      const Matrix<double> ge = en.middleRows(start, rows) * en.transpose();
      for (Index r = 0; r < rows; ++r) {
        const Index i = start + r;
        for (Index j = 0; j < n; ++j) {
          if (j != i) total += std::abs(gf(r, j) - ge(r, j));
        }
      }
    }
    out.num_pairs = static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1);
    out.avg_diff = total / static_cast<double>(out.num_pairs);
  } else {
    if (mode.sample_size == 0) throw ConfigError("avg_diff: sample size must be positive");
    Rng rng(derive_seed(mode.seed, 0xA7D1FF));
    double total = 0.0;
    for (std::size_t s = 0; s < mode.sample_size; ++s) {
      const auto i = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
      auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - 1)));
      if (j >= i) ++j;
      total += std::abs(fn.row(i).dot(fn.row(j)) - en.row(i).dot(en.row(j)));
    }
    out.num_pairs = mode.sample_size;
    out.avg_diff = total / static_cast<double>(mode.sample_size);
  }
  return out;
}

template <class T>
AvgDiffReport avg_diff_report(const FeatureRefs<T>& features, const EncoderOutput<T>& enc,
                              SampleMode mode) {
  AvgDiffReport rep;
  for (const Modality m : kModalities) {
    const int k = static_cast<int>(m);
    rep.modality[k] = avg_diff(*features[k], enc.modality[k].item_final, mode);
  }
  return rep;
}

// Interaction similarity ------------------------------------------------------

struct SimilarityEntry {
  double mean_ii = 0.0;
  double mean_in = 0.0;
  std::size_t users_ii = 0;
  std::size_t users_in = 0;
};

struct SimilarityReport {
  std::array<SimilarityEntry, 2> modality;
  SampleMode mode;

  const SimilarityEntry& operator[](Modality m) const { return modality[static_cast<int>(m)]; }
};

inline constexpr std::size_t kDefaultNegativeSample = 200;

/// Per user: mean pairwise cosine among interacted items (I-I) and mean
/// cosine between interacted and non-interacted items (I-N), averaged over
/// users. Interactions are the full filtered log. In sampled mode the
/// non-interacted side is replaced by `sample_size` uniform draws per user.
template <class T>
SimilarityEntry interaction_similarity(const Matrix<T>& features,
                                       const std::vector<std::vector<std::uint32_t>>& user_items,
                                       SampleMode mode) {
  const Matrix<double> fn = detail::normalized_rows(features);
  const Index n_items = fn.rows();
  const Vector<double> total = fn.colwise().sum().transpose();
  SimilarityEntry out;
  double sum_ii = 0.0;
  double sum_in = 0.0;
  std::vector<char> mark(static_cast<std::size_t>(n_items), 0);
  for (std::size_t u = 0; u < user_items.size(); ++u) {
    const auto& items = user_items[u];
    if (items.empty()) continue;
    if (items.size() >= 2) {
      double acc = 0.0;
      for (std::size_t a = 0; a < items.size(); ++a) {
        for (std::size_t b = a + 1; b < items.size(); ++b) {
          acc += fn.row(items[a]).dot(fn.row(items[b]));
        }
      }
      const double pairs = 0.5 * static_cast<double>(items.size() * (items.size() - 1));
      sum_ii += acc / pairs;
      ++out.users_ii;
    }
    const std::size_t n_other = static_cast<std::size_t>(n_items) - items.size();
    if (n_other == 0) continue;
    Vector<double> inside = Vector<double>::Zero(fn.cols());
    for (const auto i : items) inside += fn.row(i).transpose();
    double mean_in = 0.0;
    if (mode.exact || n_other <= mode.sample_size) {
      mean_in = inside.dot(total - inside) /
                (static_cast<double>(items.size()) * static_cast<double>(n_other));
    } else {
      for (const auto i : items) mark[i] = 1;
      Rng rng(derive_seed(mode.seed, u));
      Vector<double> outside = Vector<double>::Zero(fn.cols());
      for (std::size_t s = 0; s < mode.sample_size;) {
        const auto j = rng.below(static_cast<std::uint64_t>(n_items));
        if (mark[j]) continue;
        outside += fn.row(static_cast<Index>(j)).transpose();
        ++s;
      }
      for (const auto i : items) mark[i] = 0;
      mean_in = inside.dot(outside) /
                (static_cast<double>(items.size()) * static_cast<double>(mode.sample_size));
    }
    sum_in += mean_in;
    ++out.users_in;
  }
  if (out.users_ii == 0 || out.users_in == 0) {
    throw DataError("interaction_similarity: no qualifying users");
  }
  out.mean_ii = sum_ii / static_cast<double>(out.users_ii);
  out.mean_in = sum_in / static_cast<double>(out.users_in);
  return out;
}

template <class T>
SimilarityReport interaction_similarity(const FeatureRefs<T>& features,
                                        const InteractionDataset& ds, SampleMode mode) {
  const auto user_items = items_by_user(ds.num_users, ds.all_interactions());
  SimilarityReport rep;
  rep.mode = mode;
  for (const Modality m : kModalities) {
    const int k = static_cast<int>(m);
    if (static_cast<std::size_t>(features[k]->rows()) != ds.num_items) {
      throw ShapeError(std::string(modality_name(m)) + " features do not match item count");
    }
    rep.modality[k] = interaction_similarity(*features[k], user_items, mode);
  }
  return rep;
}

}  // namespace monet
