#pragma once

// Feature-importance analyses on linear (no hidden layer) heads trained over
// the concatenated library: importance is the L1 norm of the output weights
// attached to each feature.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fsb/classifier.hpp"
#include "fsb/episodes.hpp"
#include "fsb/error.hpp"
#include "fsb/feature_store.hpp"
#include "fsb/parallel.hpp"
#include "fsb/rng.hpp"

namespace fsb {

using ImportanceProfile = std::vector<double>;

/// Entry j = sum over classes of |W2(c, j)|.
inline ImportanceProfile importance(const HeadModel& model) {
  if (model.has_hidden()) fail(Errc::HasHiddenLayer, "importance needs a head without a hidden layer");
  ImportanceProfile out(static_cast<std::size_t>(model.W2.cols()));
  for (Eigen::Index j = 0; j < model.W2.cols(); ++j) out[static_cast<std::size_t>(j)] = model.W2.col(j).cwiseAbs().sum();
  return out;
}

/// Indices (ascending) of the `count` most important features within a
/// universe of `universe` features.
struct TopFeatureSet {
  std::size_t universe = 0;
  std::vector<std::size_t> indices;

  std::size_t size() const { return indices.size(); }
};

/// The `count` largest entries; ties at the threshold go to the smaller index.
inline TopFeatureSet top_features(std::span<const double> profile, std::size_t count) {
  if (count > profile.size()) fail(Errc::InvalidSpec, "top-set larger than the feature universe");
  std::vector<std::size_t> order(profile.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return profile[a] > profile[b]; });
  TopFeatureSet top{profile.size(), {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count)}};
  std::sort(top.indices.begin(), top.indices.end());
  return top;
}

/// Top fifth: floor(0.2 * n) features.
inline TopFeatureSet top_features(std::span<const double> profile) {
  return top_features(profile, profile.size() / 5);
}

/// Sample Pearson correlation, two-pass.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    fail(Errc::LengthMismatch, "pearson of vectors with " + std::to_string(x.size()) + " and " +
                                   std::to_string(y.size()) + " entries");
  }
  if (x.size() < 2) fail(Errc::LengthMismatch, "pearson needs at least two points");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) fail(Errc::ConstantInput, "pearson of a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// |a ∩ b| / |a ∪ b|; two empty sets count as identical.
inline double jaccard(const TopFeatureSet& a, const TopFeatureSet& b) {
  if (a.universe != b.universe) {
    fail(Errc::UniverseMismatch, "feature universes differ: " + std::to_string(a.universe) + " vs " +
                                     std::to_string(b.universe));
  }
  std::size_t inter = 0;
  for (std::size_t i = 0, j = 0; i < a.indices.size() && j < b.indices.size();) {
    if (a.indices[i] < b.indices[j]) {
      ++i;
    } else if (b.indices[j] < a.indices[i]) {
      ++j;
    } else {
      ++inter, ++i, ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Fraction of each extractor's columns that fall in the top set, in layout order.
inline std::vector<double> extractor_share(const TopFeatureSet& top, const ExtractorLayout& layout) {
  if (layout.total_dim() != top.universe) {
    fail(Errc::UniverseMismatch, "layout covers " + std::to_string(layout.total_dim()) + " features, top set " +
                                     std::to_string(top.universe));
  }
  std::vector<double> share;
  share.reserve(layout.blocks.size());
  for (const auto& b : layout.blocks) {
    const auto lo = std::lower_bound(top.indices.begin(), top.indices.end(), b.offset);
    const auto hi = std::lower_bound(top.indices.begin(), top.indices.end(), b.offset + b.length);
    share.push_back(b.length == 0 ? 0.0 : static_cast<double>(hi - lo) / static_cast<double>(b.length));
  }
  return share;
}

// ---------------------------------------------------------------------------

/// Training settings for the linear heads of the analyses. Weights are learned
/// without regularization and without a hidden layer.
struct AnalysisConfig {
  double learning_rate = 1e-2;
  std::size_t epochs = 100;
  double l2_lambda = 0.0;
  std::size_t shots = 5;    // support rows per class in heatmap tasks
  std::size_t reserve = 0;  // rows per class withheld from the full-data head
  std::size_t workers = 1;

  TrainConfig train_config(std::uint64_t seed) const {
    TrainConfig c;
    c.learning_rate = learning_rate;
    c.epochs = epochs;
    c.hidden_size = 0;
    c.l2_lambda = l2_lambda;
    c.seed = seed;
    return c;
  }
};

namespace detail {

inline ImportanceProfile fit_importance(const FeatureLibrary& lib, std::span<const std::size_t> rows,
                                        std::span<const int> labels, std::size_t ways, const TrainConfig& cfg) {
  const auto X = gather_rows(lib, rows);
  return importance(train_head(X, labels, ways, cfg).model);
}

}  // namespace detail

/// Trains a one-shot head and a head on every (non-reserved) row of the same
/// `ways` classes, both linear over all library features, and correlates
/// their importance profiles.
inline double correlation_experiment(const FeatureLibrary& lib, std::size_t ways, std::uint64_t seed,
                                     std::size_t task_index = 0, const AnalysisConfig& options = {}) {
  const auto task = draw_task(lib, ways, 1, options.reserve, seed, task_index);

  std::vector<std::size_t> full_rows;
  std::vector<int> full_labels;
  for (std::size_t c = 0; c < task.class_ids.size(); ++c) {
    const auto reserved = std::span(task.query_rows).subspan(c * options.reserve, options.reserve);
    for (auto r : lib.class_index().at(task.class_ids[c])) {
      if (std::find(reserved.begin(), reserved.end(), r) != reserved.end()) continue;
      full_rows.push_back(r);
      full_labels.push_back(static_cast<int>(c));
    }
  }

  const auto one_shot = detail::fit_importance(lib, task.support_rows, task.support_labels(), ways,
                                               options.train_config(mix_seed(task.seed, 0)));
  const auto full = detail::fit_importance(lib, full_rows, full_labels, ways,
                                           options.train_config(mix_seed(task.seed, 1)));
  return pearson(one_shot, full);
}

struct HeatmapResult {
  std::vector<std::string> datasets;
  std::vector<std::string> extractors;
  /// [dataset x dataset] mean Jaccard of top-feature sets.
  Eigen::MatrixXd jaccard;
  /// [dataset x extractor] mean fraction of each extractor's features in the top set.
  Eigen::MatrixXd shares;
};

/// Top-feature set of one `ways`-way training task.
inline TopFeatureSet task_top_features(const FeatureLibrary& lib, std::size_t ways, std::uint64_t seed,
                                       std::size_t task_index, const AnalysisConfig& options) {
  const auto task = draw_task(lib, ways, options.shots, 0, seed, task_index);
  const auto profile = detail::fit_importance(lib, task.support_rows, task.support_labels(), ways,
                                              options.train_config(task.seed));
  return top_features(profile);
}

/// Mean Jaccard over task pairs. Between two datasets every (i, j) pair
/// counts; within a dataset only pairs i < j (a lone task is paired with itself).
inline double mean_pairwise_jaccard(const std::vector<TopFeatureSet>& a, const std::vector<TopFeatureSet>& b,
                                    bool same_dataset) {
  double sum = 0.0;
  std::size_t pairs = 0;
  if (same_dataset && a.size() == 1) return jaccard(a[0], a[0]);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = same_dataset ? i + 1 : 0; j < b.size(); ++j) {
      sum += jaccard(a[i], b[j]);
      ++pairs;
    }
  }
  return pairs == 0 ? 0.0 : sum / static_cast<double>(pairs);
}

inline HeatmapResult heatmaps_from_sets(const std::vector<std::string>& datasets,
                                        const std::vector<std::vector<TopFeatureSet>>& sets,
                                        const ExtractorLayout& layout) {
  HeatmapResult out;
  out.datasets = datasets;
  for (const auto& b : layout.blocks) out.extractors.push_back(b.name);
  const auto d = static_cast<Eigen::Index>(datasets.size());
  out.jaccard.resize(d, d);
  out.shares = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(layout.blocks.size()));
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i; j < d; ++j) {
      const double v = mean_pairwise_jaccard(sets[static_cast<std::size_t>(i)], sets[static_cast<std::size_t>(j)], i == j);
      out.jaccard(i, j) = out.jaccard(j, i) = v;
    }
    for (const auto& top : sets[static_cast<std::size_t>(i)]) {
      const auto s = extractor_share(top, layout);
      for (std::size_t e = 0; e < s.size(); ++e) out.shares(i, static_cast<Eigen::Index>(e)) += s[e];
    }
    out.shares.row(i) /= static_cast<double>(std::max<std::size_t>(sets[static_cast<std::size_t>(i)].size(), 1));
  }
  return out;
}

/// All libraries must share one layout (same extractors, same order).
inline HeatmapResult cross_dataset_heatmaps(const std::vector<AssembledLibrary>& libraries, std::size_t ways,
                                            std::size_t tasks, std::uint64_t seed, const AnalysisConfig& options = {}) {
  if (libraries.empty()) fail(Errc::EmptyInput, "no libraries");
  if (tasks < 1) fail(Errc::InvalidSpec, "need at least one task per dataset");
  const auto& layout = libraries.front().layout;
  for (const auto& l : libraries) {
    bool same = l.layout.blocks.size() == layout.blocks.size();
    for (std::size_t b = 0; same && b < layout.blocks.size(); ++b) {
      same = l.layout.blocks[b].name == layout.blocks[b].name && l.layout.blocks[b].length == layout.blocks[b].length;
    }
    if (!same) fail(Errc::UniverseMismatch, l.library.dataset_name() + " has a different extractor layout");
  }
  std::vector<std::string> names;
  std::vector<std::vector<TopFeatureSet>> sets;
  for (const auto& l : libraries) {
    names.push_back(l.library.dataset_name());
    sets.push_back(parallel_map(tasks, options.workers, [&](std::size_t t) {
      return task_top_features(l.library, ways, seed, t, options);
    }));
  }
  return heatmaps_from_sets(names, sets, layout);
}

}  // namespace fsb
