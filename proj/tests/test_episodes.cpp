#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "fsb/episodes.hpp"
#include "fsb/synthetic.hpp"
#include "support.hpp"

using namespace fsb;

namespace {

AssembledLibrary grid_library(std::size_t classes, std::size_t rows_per_class) {
  SyntheticSpec s;
  s.classes = classes;
  s.rows_per_class = rows_per_class;
  s.member_dims = {4};
  s.seed = 11;
  return make_synthetic_library(s);
}

void expect_well_formed(const FeatureLibrary& lib, const Episode& ep, std::size_t m, std::size_t n, std::size_t k) {
  ASSERT_EQ(ep.ways(), m);
  ASSERT_EQ(ep.support_rows.size(), m * n);
  ASSERT_EQ(ep.query_rows.size(), m * k);
  std::set<ClassId> classes(ep.class_ids.begin(), ep.class_ids.end());
  EXPECT_EQ(classes.size(), m);
  std::set<std::size_t> support(ep.support_rows.begin(), ep.support_rows.end());
  std::set<std::size_t> query(ep.query_rows.begin(), ep.query_rows.end());
  EXPECT_EQ(support.size(), m * n);
  EXPECT_EQ(query.size(), m * k);
  for (auto r : support) EXPECT_FALSE(query.contains(r));
  const auto ys = ep.support_labels();
  const auto yq = ep.query_labels();
  for (std::size_t i = 0; i < ep.support_rows.size(); ++i) {
    EXPECT_EQ(lib.labels()[ep.support_rows[i]], ep.class_ids[static_cast<std::size_t>(ys[i])]);
  }
  for (std::size_t i = 0; i < ep.query_rows.size(); ++i) {
    EXPECT_EQ(lib.labels()[ep.query_rows[i]], ep.class_ids[static_cast<std::size_t>(yq[i])]);
  }
}

}  // namespace

TEST(SampleEpisode, ThreeClassesTwoWayOneShot) {
  const auto a = grid_library(3, 20);
  EpisodeSpec spec{.ways = 2, .shots = 1, .queries = 15, .episodes = 1, .base_seed = 5};
  const auto ep = sample_episode(a.library, spec, 0);
  expect_well_formed(a.library, ep, 2, 1, 15);
}

TEST(SampleEpisode, StructureHoldsAcrossManyEpisodes) {
  const auto a = grid_library(12, 25);
  EpisodeSpec spec{.ways = 5, .shots = 5, .queries = 15, .episodes = 200, .base_seed = 77};
  for (std::size_t i = 0; i < spec.episodes; ++i) {
    const auto ep = sample_episode(a.library, spec, i);
    EXPECT_EQ(ep.episode_index, i);
    EXPECT_EQ(ep.seed, episode_seed(77, i));
    expect_well_formed(a.library, ep, 5, 5, 15);
  }
}

TEST(SampleEpisode, ClassTooSmallReportsHaveAndNeed) {
  SyntheticSpec s;
  s.classes = 5;
  s.rows_per_class = 6;
  s.member_dims = {2};
  const auto a = make_synthetic_library(s);
  EpisodeSpec spec{.ways = 5, .shots = 5, .queries = 15, .episodes = 1, .base_seed = 0};
  try {
    sample_episode(a.library, spec, 0);
    FAIL() << "expected ClassTooSmall";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ClassTooSmall);
    EXPECT_NE(std::string(e.what()).find("has 6 rows, need 20"), std::string::npos) << e.what();
  }
}

TEST(SampleEpisode, NotEnoughClasses) {
  const auto a = grid_library(3, 20);
  EpisodeSpec spec{.ways = 4, .shots = 1, .queries = 1, .episodes = 1, .base_seed = 0};
  EXPECT_FSB_ERROR(sample_episode(a.library, spec, 0), Errc::NotEnoughClasses);
}

TEST(SampleEpisode, InvalidSpec) {
  const auto a = grid_library(3, 20);
  EXPECT_FSB_ERROR(sample_episode(a.library, EpisodeSpec{.ways = 1}, 0), Errc::InvalidSpec);
  EXPECT_FSB_ERROR(sample_episode(a.library, EpisodeSpec{.shots = 0}, 0), Errc::InvalidSpec);
  EXPECT_FSB_ERROR(sample_episode(a.library, EpisodeSpec{.queries = 0}, 0), Errc::InvalidSpec);
  EXPECT_FSB_ERROR(sample_episode(a.library, EpisodeSpec{.episodes = 0}, 0), Errc::InvalidSpec);
}

TEST(SampleEpisode, Deterministic) {
  const auto a = grid_library(10, 30);
  EpisodeSpec spec{.ways = 5, .shots = 1, .queries = 15, .episodes = 10, .base_seed = 123};
  const auto first = sample_episode(a.library, spec, 7);
  const auto second = sample_episode(a.library, spec, 7);
  EXPECT_EQ(to_json(first), to_json(second));
  // Index order of evaluation is irrelevant.
  const auto other = sample_episode(a.library, spec, 3);
  EXPECT_EQ(to_json(sample_episode(a.library, spec, 7)), to_json(first));
  EXPECT_NE(to_json(other), to_json(first));
}

TEST(SampleEpisode, FollowsTheDocumentedStream) {
  // Independent re-derivation of episode 4 from the sampling rule.
  const auto a = grid_library(6, 8);
  EpisodeSpec spec{.ways = 3, .shots = 2, .queries = 3, .episodes = 5, .base_seed = 99};
  const auto ep = sample_episode(a.library, spec, 4);

  SplitMix64 rng(mix_seed(99, 4));
  std::vector<ClassId> ids{0, 1, 2, 3, 4, 5};
  for (std::size_t i = 0; i < 3; ++i) std::swap(ids[i], ids[i + rng.below(ids.size() - i)]);
  std::vector<std::size_t> support;
  std::vector<std::size_t> query;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < 8; ++r) rows.push_back(ids[c] * 8 + r);
    for (std::size_t i = 0; i < 5; ++i) std::swap(rows[i], rows[i + rng.below(rows.size() - i)]);
    support.insert(support.end(), rows.begin(), rows.begin() + 2);
    query.insert(query.end(), rows.begin() + 2, rows.begin() + 5);
  }
  EXPECT_EQ(ep.class_ids, std::vector<ClassId>(ids.begin(), ids.begin() + 3));
  EXPECT_EQ(ep.support_rows, support);
  EXPECT_EQ(ep.query_rows, query);
}

TEST(SampleEpisode, ClassCoverageChiSquare) {
  const std::size_t classes = 10;
  const std::size_t ways = 5;
  const std::size_t episodes = 4000;
  const auto a = grid_library(classes, 3);
  EpisodeSpec spec{.ways = ways, .shots = 1, .queries = 1, .episodes = episodes, .base_seed = 2024};
  std::vector<double> counts(classes, 0.0);
  for (std::size_t i = 0; i < episodes; ++i) {
    for (auto c : sample_episode(a.library, spec, i).class_ids) counts[c] += 1.0;
  }
  const double expected = static_cast<double>(episodes * ways) / static_cast<double>(classes);
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 9 degrees of freedom; 27.88 is the 0.999 quantile.
  EXPECT_LT(chi2, 27.88);
}

TEST(Summarize, ZeroVariance) {
  const std::vector<double> acc{0.8, 0.8, 0.8};
  const auto s = summarize(acc);
  EXPECT_EQ(s.mean, 0.8);
  EXPECT_EQ(s.ci95, 0.0);
  EXPECT_EQ(s.per_episode, acc);
}

TEST(Summarize, TwoPoints) {
  const std::vector<double> acc{0.0, 1.0};
  const auto s = summarize(acc);
  EXPECT_DOUBLE_EQ(s.mean, 0.5);
  EXPECT_NEAR(s.ci95, 1.96 * std::sqrt(0.5) / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(s.ci95, 0.98, 1e-12);
}

TEST(Summarize, SingleEpisodeHasZeroWidth) {
  const std::vector<double> acc{0.4};
  const auto s = summarize(acc);
  EXPECT_EQ(s.mean, 0.4);
  EXPECT_EQ(s.ci95, 0.0);
}

TEST(Summarize, EmptyInput) {
  EXPECT_FSB_ERROR(summarize(std::vector<double>{}), Errc::EmptyInput);
}

TEST(Summarize, BernoulliMonteCarlo) {
  SplitMix64 rng(31);
  std::vector<double> acc(600);
  for (auto& a : acc) a = rng.uniform() < 0.5 ? 1.0 : 0.0;
  const auto s = summarize(acc);

  // Oracle: one-pass sums.
  double sum = 0.0;
  double sq = 0.0;
  for (double a : acc) {
    sum += a;
    sq += a * a;
  }
  const double n = 600.0;
  const double var = (sq - sum * sum / n) / (n - 1.0);
  EXPECT_NEAR(s.mean, sum / n, 1e-12);
  EXPECT_NEAR(s.ci95, 1.96 * std::sqrt(var) / std::sqrt(n), 1e-12);
  EXPECT_NEAR(s.ci95, 1.96 * 0.5 / std::sqrt(n), 0.003);
}
