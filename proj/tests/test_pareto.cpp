#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "concepttracer/pareto.hpp"
#include "test_support.hpp"

namespace ct = concepttracer;
using ct_test::pair;

namespace {

// O(n^2) dominance check, ordered like pareto_front.
std::vector<std::size_t> front_oracle(const std::vector<ct::PairScore>& pairs) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < pairs.size() && !dominated; ++j) {
      const auto& p = pairs[j];
      const auto& q = pairs[i];
      dominated = p.saliency >= q.saliency && p.selectivity >= q.selectivity &&
                  (p.saliency > q.saliency || p.selectivity > q.selectivity);
    }
    if (!dominated) out.push_back(i);
  }
  std::sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = pairs[a];
    const auto& pb = pairs[b];
    return std::make_tuple(-pa.saliency, -pa.selectivity, pa.layer, pa.neuron, pa.concept_index) <
           std::make_tuple(-pb.saliency, -pb.selectivity, pb.layer, pb.neuron, pb.concept_index);
  });
  return out;
}

std::vector<ct::PairScore> random_pairs(std::mt19937_64& gen, std::size_t n, int grid) {
  std::vector<ct::PairScore> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    const double sal = static_cast<double>(gen() % static_cast<std::uint64_t>(grid)) / grid;
    const double sel = static_cast<double>(gen() % static_cast<std::uint64_t>(grid)) / grid;
    pairs.push_back(pair(sal, sel, static_cast<int>(gen() % 4), static_cast<std::uint32_t>(gen() % 50),
                         static_cast<std::uint32_t>(i), static_cast<double>(1 + gen() % 10) / 100.0));
  }
  return pairs;
}

}  // namespace

TEST(ParetoFront, WorkedExample) {
  const std::vector<ct::PairScore> pairs{pair(0.9, 0.2), pair(0.5, 0.5), pair(0.2, 0.9), pair(0.4, 0.4)};
  EXPECT_EQ(ct::pareto_front(pairs), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(front_oracle(pairs), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(ParetoFront, SingleAndIdenticalPairs) {
  EXPECT_EQ(ct::pareto_front(std::vector<ct::PairScore>{pair(0.3, 0.3)}), (std::vector<std::size_t>{0}));
  const std::vector<ct::PairScore> same{pair(0.4, 0.6, 0, 2), pair(0.4, 0.6, 0, 0), pair(0.4, 0.6, 0, 1)};
  EXPECT_EQ(ct::pareto_front(same), (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_TRUE(ct::pareto_front(std::vector<ct::PairScore>{}).empty());
}

TEST(ParetoFront, EqualSaliencyLowerSelectivityIsDominated) {
  const std::vector<ct::PairScore> pairs{pair(0.5, 0.5), pair(0.5, 0.4), pair(0.3, 0.5)};
  EXPECT_EQ(ct::pareto_front(pairs), (std::vector<std::size_t>{0}));
}

TEST(ParetoFront, MatchesDominanceOracle) {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pairs = random_pairs(gen, 1 + gen() % 300, trial % 2 ? 10 : 100000);
    const auto front = ct::pareto_front(pairs);
    EXPECT_EQ(front, front_oracle(pairs));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (std::find(front.begin(), front.end(), i) != front.end()) continue;
      EXPECT_TRUE(std::any_of(front.begin(), front.end(), [&](std::size_t f) { return ct::dominates(pairs[f], pairs[i]); }));
    }
  }
}

TEST(MinMaxScale, WorkedExamples) {
  const auto s = ct::min_max_scale(std::vector<double>{0.2, 0.5, 0.9});
  EXPECT_DOUBLE_EQ(s[0], 0.0);
  EXPECT_NEAR(s[1], 3.0 / 7.0, 1e-15);
  EXPECT_DOUBLE_EQ(s[2], 1.0);
  EXPECT_EQ(ct::min_max_scale(std::vector<double>{0.7, 0.7}), (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(ct::min_max_scale(std::vector<double>{1.0}), (std::vector<double>{0.0}));
}

TEST(KneePoint, WorkedExample) {
  const std::vector<ct::PairScore> pairs{pair(0.9, 0.3), pair(0.6, 0.6), pair(0.3, 0.8)};
  const auto front = ct::pareto_front(pairs);
  ASSERT_EQ(front.size(), 3u);
  const auto scores = ct::combined_scores(pairs);
  EXPECT_NEAR(scores[0], 1.0, 1e-12);
  EXPECT_NEAR(scores[1], 1.1, 1e-12);
  EXPECT_NEAR(scores[2], 1.0, 1e-12);
  EXPECT_EQ(ct::knee_point(pairs, front), std::optional<std::size_t>(1));
}

TEST(KneePoint, SingleFrontAndEmptyFront) {
  const std::vector<ct::PairScore> pairs{pair(0.9, 0.9), pair(0.1, 0.2)};
  EXPECT_EQ(ct::knee_point(pairs, ct::pareto_front(pairs)), std::optional<std::size_t>(0));
  EXPECT_EQ(ct::knee_point(pairs, {}), std::nullopt);
}

TEST(KneePoint, SymmetricExtremesBreakTiesById) {
  const std::vector<ct::PairScore> pairs{pair(1.0, 0.0, 1, 0, 0), pair(0.0, 1.0, 0, 5, 3)};
  EXPECT_EQ(ct::knee_point(pairs, ct::pareto_front(pairs)), std::optional<std::size_t>(1));
  auto smaller_p = pairs;
  smaller_p[0].p_combined = 0.001;
  EXPECT_EQ(ct::knee_point(smaller_p, ct::pareto_front(smaller_p)), std::optional<std::size_t>(0));
}

TEST(KneePoint, ExhaustiveArgmaxAndScalingInvariance) {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pairs = random_pairs(gen, 1 + gen() % 200, 1000);
    const auto front = ct::pareto_front(pairs);
    const auto knee = ct::knee_point(pairs, front);
    ASSERT_TRUE(knee.has_value());
    const auto scores = ct::combined_scores(pairs);
    std::size_t best = front[0];
    for (auto f : front)
      if (scores[f] > scores[best] || (scores[f] == scores[best] && ct::tiebreak_less(pairs[f], pairs[best]))) best = f;
    EXPECT_EQ(*knee, best);

    // Power-of-two rescaling keeps min-max scaling exact.
    auto rescaled = pairs;
    for (auto& p : rescaled) p.saliency *= 0.25;
    EXPECT_EQ(ct::knee_point(rescaled, ct::pareto_front(rescaled)), knee);
  }
}

TEST(TopK, OrderingAndTruncation) {
  const std::vector<ct::PairScore> pairs{pair(0.3, 0.9, 0, 0, 0, 0.02), pair(0.8, 0.1, 0, 1, 0, 0.02),
                                         pair(0.8, 0.2, 0, 2, 0, 0.01)};
  EXPECT_EQ(ct::top_k(pairs, ct::Metric::Saliency, 1), (std::vector<std::size_t>{2}));
  EXPECT_EQ(ct::top_k(pairs, ct::Metric::Saliency, 10), (std::vector<std::size_t>{2, 1, 0}));
  EXPECT_EQ(ct::top_k(pairs, ct::Metric::Selectivity, 3), (std::vector<std::size_t>{0, 2, 1}));
  EXPECT_THROW(ct::top_k(pairs, ct::Metric::Saliency, 0), ct::Error);
}

TEST(TopK, CombinedMatchesFullSortOracle) {
  std::mt19937_64 gen(41);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pairs = random_pairs(gen, 100, trial % 2 ? 5 : 1000);
    const auto scores = ct::combined_scores(pairs);
    std::vector<std::size_t> all(pairs.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::stable_sort(all.begin(), all.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return std::make_tuple(pairs[a].p_combined, pairs[a].layer, pairs[a].neuron, pairs[a].concept_index) <
             std::make_tuple(pairs[b].p_combined, pairs[b].layer, pairs[b].neuron, pairs[b].concept_index);
    });
    all.resize(10);
    EXPECT_EQ(ct::top_k(pairs, ct::Metric::Combined, 10), all);
  }
}
