#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "monet/evaluation.hpp"
#include "monet/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace monet;

namespace {

std::vector<std::uint32_t> ids(std::initializer_list<std::uint32_t> l) { return l; }

struct Scene {
  InteractionDataset ds;
  BipartiteGraph g;
  Matrix<double> t, v;
  ModelParameters<double> params;
  HyperParams hp;

  FeatureRefs<double> refs() const { return {&t, &v}; }
  EncoderOutput<double> enc() const { return encode(g, params, refs(), hp); }
};

// Four users, eight items; users 0 and 1 also hold validation and test items.
Scene scene(std::uint64_t seed, bool attention = true) {
  Scene s;
  s.ds = fixture::dataset(4, 8,
                          {{0, 0}, {0, 1}, {1, 1}, {1, 2}, {1, 3}, {2, 4}, {2, 5}, {3, 6}, {3, 7}, {3, 0}},
                          {{0, 2}, {1, 4}}, {{0, 3}, {1, 5}, {2, 6}});
  s.g = build_graph(s.ds);
  Rng rng(seed);
  s.t = fixture::random_matrix(8, 3, rng);
  s.v = fixture::random_matrix(8, 5, rng);
  s.hp.d = 4;
  s.hp.layers = 1;
  s.hp.attention = attention;
  s.params = init_parameters<double>(s.hp, {3, 5}, 4, 8, seed + 1);
  return s;
}

// Brute-force ranking through the single-pair scorer.
std::vector<std::uint32_t> brute_rank(const Scene& s, const EncoderOutput<double>& enc,
                                      std::uint32_t u, std::size_t n,
                                      const std::unordered_set<std::uint32_t>& excluded,
                                      double PreferenceScore::*part = &PreferenceScore::blended) {
  std::vector<std::pair<double, std::uint32_t>> scored;
  for (std::uint32_t i = 0; i < s.ds.num_items; ++i) {
    if (excluded.count(i)) continue;
    scored.emplace_back(-(score(u, i, enc, s.g, s.hp).*part), i);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::uint32_t> out;
  for (std::size_t k = 0; k < std::min(n, scored.size()); ++k) out.push_back(scored[k].second);
  return out;
}

std::unordered_set<std::uint32_t> train_items(const Scene& s, std::uint32_t u) {
  const auto h = s.g.user_items(u);
  return {h.begin(), h.end()};
}

}  // namespace

// Top-n selection --------------------------------------------------------------

TEST(TopN, OrdersByDescendingScore) {
  const auto cands = ids({0, 2});
  const std::vector<double> scores{0.5, 0.9};
  EXPECT_EQ(top_n_by_score(cands, scores, 2), ids({2, 0}));
  EXPECT_EQ(top_n_by_score(cands, scores, 1), ids({2}));
}

TEST(TopN, TiesGoToTheLowerIndex) {
  const auto cands = ids({7, 4, 9});
  const std::vector<double> scores{1.0, 1.0, 1.0};
  EXPECT_EQ(top_n_by_score(cands, scores, 2), ids({4, 7}));
}

TEST(TopN, ShortCandidateListReturnsEverything) {
  const auto cands = ids({3, 1, 2});
  const std::vector<double> scores{0.1, 0.3, 0.2};
  EXPECT_EQ(top_n_by_score(cands, scores, 20), ids({1, 2, 3}));
  EXPECT_TRUE(top_n_by_score({}, {}, 5).empty());
}

// Metrics ----------------------------------------------------------------------

TEST(Metrics, SingleRelevantAtTheTop) {
  std::vector<std::uint32_t> rec(20);
  std::iota(rec.begin(), rec.end(), 3u);
  const auto m = metrics_at_n(rec, {3}, 20);
  EXPECT_DOUBLE_EQ(m.precision, 0.05);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
  EXPECT_DOUBLE_EQ(m.ndcg, 1.0);
}

TEST(Metrics, NoHits) {
  const auto m = metrics_at_n(ids({1, 2, 3}), {9}, 3);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.ndcg, 0.0);
}

TEST(Metrics, HitsAtRanksOneAndThree) {
  const auto m = metrics_at_n(ids({10, 11, 12}), {10, 12}, 3);
  EXPECT_NEAR(m.precision, 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
  EXPECT_NEAR(m.ndcg, 1.5 / (1.0 + 1.0 / std::log2(3.0)), 1e-12);
  EXPECT_NEAR(m.ndcg, 0.9197, 1e-4);
}

TEST(Metrics, IdealDcgUsesAtMostNPositions) {
  // Five relevant items, only two slots: a perfect list still scores 1.
  const auto m = metrics_at_n(ids({1, 2}), {1, 2, 3, 4, 5}, 2);
  EXPECT_DOUBLE_EQ(m.ndcg, 1.0);
  EXPECT_DOUBLE_EQ(m.recall, 0.4);
}

TEST(Metrics, RejectsBadInput) {
  EXPECT_THROW(metrics_at_n(ids({1}), {1}, 0), ConfigError);
  EXPECT_THROW(metrics_at_n(ids({1}), {}, 5), DataError);
}

TEST(Metrics, PropertiesOverRandomLists) {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const std::uint32_t universe = 5 + static_cast<std::uint32_t>(rng.below(40));
    std::vector<std::uint32_t> perm(universe);
    std::iota(perm.begin(), perm.end(), 0u);
    rng.shuffle(std::span<std::uint32_t>(perm));
    std::unordered_set<std::uint32_t> relevant;
    const auto n_rel = 1 + rng.below(std::min<std::uint64_t>(universe, 8));
    for (std::uint64_t k = 0; k < n_rel; ++k) relevant.insert(static_cast<std::uint32_t>(rng.below(universe)));

    double last_recall = -1.0;
    for (std::size_t n = 1; n <= universe; ++n) {
      const std::vector<std::uint32_t> rec(perm.begin(), perm.begin() + static_cast<long>(n));
      const auto m = metrics_at_n(rec, relevant, n);
      const auto hits = static_cast<double>(
          std::count_if(rec.begin(), rec.end(), [&](auto i) { return relevant.count(i) > 0; }));
      EXPECT_NEAR(m.precision * static_cast<double>(n), hits, 1e-9);
      EXPECT_GE(m.recall, last_recall);
      EXPECT_GE(m.ndcg, 0.0);
      EXPECT_LE(m.ndcg, 1.0 + 1e-12);
      last_recall = m.recall;
    }
    EXPECT_DOUBLE_EQ(last_recall, 1.0);

    // Relevant items first is the ideal ordering.
    std::vector<std::uint32_t> ideal(relevant.begin(), relevant.end());
    for (const auto i : perm)
      if (!relevant.count(i)) ideal.push_back(i);
    const std::size_t n = 1 + rng.below(universe);
    EXPECT_NEAR(metrics_at_n(ideal, relevant, n).ndcg, 1.0, 1e-12);
  }
}

// Ranking ----------------------------------------------------------------------

TEST(Rank, ValidationExcludesTrainOnly) {
  const auto s = scene(3);
  const auto enc = s.enc();
  for (std::uint32_t u = 0; u < 4; ++u) {
    const auto got = rank_topn(u, 20, enc, s.g, s.ds, s.hp, Phase::Validation);
    EXPECT_EQ(got, brute_rank(s, enc, u, 20, train_items(s, u)));
    EXPECT_EQ(got.size(), 8 - s.g.user_degree(u));
  }
}

TEST(Rank, TestPhaseAlsoExcludesValidationItems) {
  const auto s = scene(3);
  const auto enc = s.enc();
  const auto got = rank_topn(0, 20, enc, s.g, s.ds, s.hp, Phase::Test);
  EXPECT_EQ(std::count(got.begin(), got.end(), 2u), 0);
  auto excluded = train_items(s, 0);
  excluded.insert(2);
  EXPECT_EQ(got, brute_rank(s, enc, 0, 20, excluded));
  // User 3 has no validation items, so the two phases agree.
  EXPECT_EQ(rank_topn(3, 20, enc, s.g, s.ds, s.hp, Phase::Test),
            rank_topn(3, 20, enc, s.g, s.ds, s.hp, Phase::Validation));
}

TEST(Rank, BetaEndpointsMatchTheComponentRankings) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s = scene(seed);
    for (const double beta : {0.0, 1.0}) {
      s.hp.beta = beta;
      const auto enc = s.enc();
      const auto part = beta == 0.0 ? &PreferenceScore::general : &PreferenceScore::target_oriented;
      for (std::uint32_t u = 0; u < 4; ++u) {
        EXPECT_EQ(rank_topn(u, 20, enc, s.g, s.ds, s.hp, Phase::Validation),
                  brute_rank(s, enc, u, 20, train_items(s, u), part))
            << "seed " << seed << " beta " << beta << " user " << u;
      }
    }
  }
}

TEST(Evaluate, AveragesOverUsersWithPhaseItems) {
  const auto s = scene(4);
  const auto enc = s.enc();
  const auto rep = evaluate(enc, s.g, s.ds, s.hp, 3, Phase::Test);
  ASSERT_EQ(rep.num_users_evaluated, 3u);
  const std::vector<std::unordered_set<std::uint32_t>> relevant{{3}, {5}, {6}};
  double p = 0, r = 0, n = 0;
  for (std::uint32_t u = 0; u < 3; ++u) {
    auto excluded = train_items(s, u);
    for (const auto& x : s.ds.validation)
      if (x.user == u) excluded.insert(x.item);
    const auto m = metrics_at_n(brute_rank(s, enc, u, 3, excluded), relevant[u], 3);
    EXPECT_EQ(rep.per_user[u].user, u);
    p += m.precision, r += m.recall, n += m.ndcg;
  }
  EXPECT_NEAR(rep.precision, p / 3, 1e-12);
  EXPECT_NEAR(rep.recall, r / 3, 1e-12);
  EXPECT_NEAR(rep.ndcg, n / 3, 1e-12);
  EXPECT_EQ(evaluate(enc, s.g, s.ds, s.hp, 2, Phase::Validation).num_users_evaluated, 2u);
}

TEST(Evaluate, AllHeldOutItemsRankedGiveFullRecall) {
  const auto s = scene(5);
  const auto rep = evaluate(s.enc(), s.g, s.ds, s.hp, 8, Phase::Test);
  EXPECT_DOUBLE_EQ(rep.recall, 1.0);
}

TEST(Evaluate, Deterministic) {
  const auto s = scene(6);
  const auto a = evaluate(s.enc(), s.g, s.ds, s.hp, 2, Phase::Test);
  const auto b = evaluate(s.enc(), s.g, s.ds, s.hp, 2, Phase::Test);
  EXPECT_EQ(a.recall, b.recall);
  EXPECT_EQ(a.ndcg, b.ndcg);
  EXPECT_EQ(a.precision, b.precision);
}

TEST(Evaluate, NoEligibleUsers) {
  auto s = scene(1);
  s.ds.validation.clear();
  EXPECT_THROW(evaluate(s.enc(), s.g, s.ds, s.hp, 5, Phase::Validation), DataError);
}

TEST(Evaluate, UntrainedModelIsNearChance) {
  SyntheticSpec spec;
  spec.users = 300;
  spec.items = 200;
  spec.dim = 8;
  spec.seed = 2;
  const auto data = generate_synthetic(spec);
  const auto ds = split_dataset(data.interactions, {}, 2);
  const auto t = align_features(data.textual, data.item_ids, ds.item_ids, Modality::Textual).values;
  const auto v = align_features(data.visual, data.item_ids, ds.item_ids, Modality::Visual).values;
  const auto g = build_graph(ds);
  HyperParams hp;
  hp.d = 8;
  hp.attention = false;
  // Random scores stand in for an untrained model: shuffle item ids in the
  // embedding table, then recall should sit near n / |candidates|.
  auto params = init_parameters<float>(hp, {8, 8}, ds.num_users, ds.num_items, 9);
  Matrix<float> tn = t, vn = v;
  Rng rng(11);
  std::vector<Index> perm(ds.num_items);
  std::iota(perm.begin(), perm.end(), Index{0});
  rng.shuffle(std::span<Index>(perm));
  for (Index i = 0; i < tn.rows(); ++i) {
    tn.row(i) = t.row(perm[static_cast<std::size_t>(i)]);
    vn.row(i) = v.row(perm[static_cast<std::size_t>(i)]);
  }
  const auto rep = evaluate(encode(g, params, FeatureRefs<float>{&tn, &vn}, hp), g, ds, hp, 20, Phase::Test);
  // Expected recall of a uniformly random list is n / |candidates| per user.
  const auto val = items_by_user(ds.num_users, ds.validation);
  double chance = 0.0;
  for (const auto& um : rep.per_user) {
    const double cands = static_cast<double>(ds.num_items - g.user_degree(um.user) - val[um.user].size());
    chance += std::min(1.0, 20.0 / cands);
  }
  chance /= static_cast<double>(rep.per_user.size());
  EXPECT_GT(rep.recall, 0.3 * chance);
  EXPECT_LT(rep.recall, 3.0 * chance);
}

// avg_diff ---------------------------------------------------------------------

TEST(AvgDiff, IdenticalOrRescaledEmbeddingsGiveZero) {
  Rng rng(1);
  const auto f = fixture::random_matrix(30, 5, rng);
  EXPECT_NEAR(avg_diff(f, f, SampleMode::exact_mode()).avg_diff, 0.0, 1e-14);
  const Matrix<double> scaled = 3.0 * f;
  EXPECT_NEAR(avg_diff(f, scaled, SampleMode::exact_mode()).avg_diff, 0.0, 1e-14);
  // Embedding width differs from the feature width: only cosines matter.
  Matrix<double> wide(30, 7);
  wide << f, Matrix<double>::Zero(30, 2);
  EXPECT_NEAR(avg_diff(f, wide, SampleMode::exact_mode()).avg_diff, 0.0, 1e-14);
}

TEST(AvgDiff, OrthogonalFeaturesCollapsedToOneDirection) {
  const Matrix<double> f = Matrix<double>::Identity(2, 2);
  Matrix<double> e(2, 2);
  e << 1, 1, 2, 2;
  const auto r = avg_diff(f, e, SampleMode::exact_mode());
  EXPECT_DOUBLE_EQ(r.avg_diff, 1.0);
  EXPECT_EQ(r.num_pairs, 2u);
}

TEST(AvgDiff, InvariantToPositiveRowScaling) {
  Rng rng(2);
  const auto f = fixture::random_matrix(20, 4, rng);
  const auto e = fixture::random_matrix(20, 6, rng);
  Matrix<double> fs = f, es = e;
  for (Index r = 0; r < 20; ++r) {
    fs.row(r) *= 0.1 + rng.uniform() * 10;
    es.row(r) *= 0.1 + rng.uniform() * 10;
  }
  EXPECT_NEAR(avg_diff(f, e, SampleMode::exact_mode()).avg_diff,
              avg_diff(fs, es, SampleMode::exact_mode()).avg_diff, 1e-12);
}

TEST(AvgDiff, MatchesPairwiseEnumeration) {
  Rng rng(3);
  // 300 rows crosses the internal block boundary.
  for (const Index n : {2, 7, 300}) {
    auto f = fixture::random_matrix(n, 5, rng);
    auto e = fixture::random_matrix(n, 3, rng);
    e.row(n - 1).setZero();
    EXPECT_NEAR(avg_diff(f, e, SampleMode::exact_mode()).avg_diff, oracle::avg_diff(f, e), 1e-12)
        << n;
  }
}

TEST(AvgDiff, SampledConvergesToExact) {
  Rng rng(4);
  const auto f = fixture::random_matrix(120, 6, rng);
  const auto e = fixture::random_matrix(120, 6, rng);
  const double exact = avg_diff(f, e, SampleMode::exact_mode()).avg_diff;
  const auto sampled = avg_diff(f, e, SampleMode::sampled(200000, 8));
  EXPECT_EQ(sampled.num_pairs, 200000u);
  EXPECT_NEAR(sampled.avg_diff, exact, 0.01);
  EXPECT_EQ(sampled.avg_diff, avg_diff(f, e, SampleMode::sampled(200000, 8)).avg_diff);
}

TEST(AvgDiff, RejectsDegenerateInput) {
  const Matrix<double> one = Matrix<double>::Ones(1, 3);
  EXPECT_THROW(avg_diff(one, one, SampleMode::exact_mode()), DataError);
  const Matrix<double> two = Matrix<double>::Ones(2, 3);
  EXPECT_THROW(avg_diff(two, one, SampleMode::exact_mode()), ShapeError);
  EXPECT_THROW(avg_diff(two, two, SampleMode::sampled(0, 1)), ConfigError);
}

TEST(AvgDiff, IdentityProjectionWithoutLayersPreservesGeometry) {
  auto s = scene(7);
  s.hp.layers = 0;
  s.hp.d = 3;
  s.v = s.t;
  s.params = init_parameters<double>(s.hp, {3, 3}, 4, 8, 1);
  for (const Modality m : kModalities) {
    s.params[m].proj_weight.setIdentity();
    s.params[m].proj_bias.setZero();
  }
  const auto rep = avg_diff_report(s.refs(), s.enc(), SampleMode::exact_mode());
  EXPECT_LE(rep[Modality::Textual].avg_diff, 1e-12);
  EXPECT_LE(rep[Modality::Visual].avg_diff, 1e-12);
}

// Interaction similarity -------------------------------------------------------

TEST(Similarity, IdenticalFeaturesGiveOne) {
  const Matrix<double> f = Matrix<double>::Ones(5, 3);
  const auto r = interaction_similarity(f, {{0, 1}, {2, 3, 4}}, SampleMode::exact_mode());
  EXPECT_NEAR(r.mean_ii, 1.0, 1e-12);
  EXPECT_NEAR(r.mean_in, 1.0, 1e-12);
}

TEST(Similarity, OrthogonalFeaturesGiveZero) {
  const Matrix<double> f = Matrix<double>::Identity(4, 4);
  const auto r = interaction_similarity(f, {{0, 1}, {2, 3}}, SampleMode::exact_mode());
  EXPECT_NEAR(r.mean_ii, 0.0, 1e-12);
  EXPECT_NEAR(r.mean_in, 0.0, 1e-12);
}

TEST(Similarity, TwoUsersFourItemsByHand) {
  Matrix<double> f(4, 2);
  f << 1, 0, 2, 0, 0, 1, 0, 3;
  const auto r = interaction_similarity(f, {{0, 1}, {1, 2}}, SampleMode::exact_mode());
  EXPECT_NEAR(r.mean_ii, 0.5, 1e-12);
  EXPECT_NEAR(r.mean_in, 0.25, 1e-12);
  EXPECT_EQ(r.users_ii, 2u);
  EXPECT_EQ(r.users_in, 2u);
}

TEST(Similarity, SingleItemUsersCountOnlyForNonInteracted) {
  Matrix<double> f(3, 2);
  f << 1, 0, 0, 1, 1, 1;
  const auto r = interaction_similarity(f, {{0}, {1, 2}, {}}, SampleMode::exact_mode());
  EXPECT_EQ(r.users_ii, 1u);
  EXPECT_EQ(r.users_in, 2u);
  EXPECT_THROW(interaction_similarity(f, {{0}}, SampleMode::exact_mode()), DataError);
}

TEST(Similarity, MatchesPairwiseEnumeration) {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 3 + static_cast<Index>(rng.below(20));
    auto f = fixture::random_matrix(n, 1 + static_cast<Index>(rng.below(5)), rng);
    if (trial % 3 == 0) f.row(0).setZero();
    std::vector<std::vector<std::uint32_t>> users(1 + rng.below(6));
    for (auto& items : users) {
      for (Index i = 0; i < n; ++i)
        if (rng.uniform() < 0.4) items.push_back(static_cast<std::uint32_t>(i));
      if (items.size() < 2) items = {0, 1};
      if (items.size() == static_cast<std::size_t>(n)) items.pop_back();
    }
    const auto [ii, in] = oracle::similarity(f, users);
    const auto r = interaction_similarity(f, users, SampleMode::exact_mode());
    EXPECT_NEAR(r.mean_ii, ii, 1e-12);
    EXPECT_NEAR(r.mean_in, in, 1e-12);
  }
}

TEST(Similarity, SampledTracksExact) {
  Rng rng(10);
  const auto f = fixture::random_matrix(400, 4, rng);
  std::vector<std::vector<std::uint32_t>> users(50);
  for (auto& items : users)
    for (std::uint32_t k = 0; k < 8; ++k) items.push_back(static_cast<std::uint32_t>(rng.below(400)));
  for (auto& items : users) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
  const auto exact = interaction_similarity(f, users, SampleMode::exact_mode());
  const auto sampled = interaction_similarity(f, users, SampleMode::sampled(200, 3));
  EXPECT_EQ(sampled.mean_ii, exact.mean_ii);
  EXPECT_NEAR(sampled.mean_in, exact.mean_in, 0.02);
  // A sample at least as large as the complement falls back to the exact sum.
  EXPECT_NEAR(interaction_similarity(f, users, SampleMode::sampled(400, 3)).mean_in, exact.mean_in, 1e-12);
}

TEST(Similarity, ClusteredSyntheticSeparates) {
  SyntheticSpec spec;
  spec.users = 100;
  spec.items = 60;
  spec.dim = 8;
  spec.seed = 5;
  const auto data = generate_synthetic(spec);
  const auto ds = split_dataset(data.interactions, {}, 5);
  const auto t = align_features(data.textual, data.item_ids, ds.item_ids, Modality::Textual).values;
  const auto v = align_features(data.visual, data.item_ids, ds.item_ids, Modality::Visual).values;
  const auto rep = interaction_similarity(FeatureRefs<float>{&t, &v}, ds, SampleMode::exact_mode());
  for (const Modality m : kModalities) EXPECT_GT(rep[m].mean_ii, rep[m].mean_in + 0.05);
  const Matrix<float> short_rows = t.topRows(10);
  EXPECT_THROW(interaction_similarity(FeatureRefs<float>{&short_rows, &v}, ds, SampleMode::exact_mode()),
               ShapeError);
}

TEST(AvgDiff, SampledEstimatesAgreeAcrossSeeds) {
  SyntheticSpec spec;
  spec.seed = 0;
  const auto data = generate_synthetic(spec);
  const auto ds = split_dataset(data.interactions, {}, 0);
  const auto t = align_features(data.textual, data.item_ids, ds.item_ids, Modality::Textual).values;
  const auto v = align_features(data.visual, data.item_ids, ds.item_ids, Modality::Visual).values;
  const FeatureRefs<float> refs{&t, &v};
  HyperParams hp;
  const auto params = init_parameters<float>(hp, {spec.dim, spec.dim}, ds.num_users, ds.num_items, 3);
  const auto enc = encode(build_graph(ds), params, refs, hp);
  const auto a = avg_diff_report(refs, enc, SampleMode::sampled(100000, 1));
  const auto b = avg_diff_report(refs, enc, SampleMode::sampled(100000, 2));
  for (const Modality m : kModalities) {
    EXPECT_NE(a[m].avg_diff, b[m].avg_diff);
    EXPECT_LT(std::abs(a[m].avg_diff - b[m].avg_diff), 0.01);
  }
}
