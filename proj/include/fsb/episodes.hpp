#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsb/error.hpp"
#include "fsb/feature_store.hpp"
#include "fsb/rng.hpp"

namespace fsb {

inline constexpr std::size_t kDefaultEpisodes = 600;
inline constexpr std::size_t kDefaultQueries = 15;

struct EpisodeSpec {
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t queries = kDefaultQueries;
  std::size_t episodes = kDefaultEpisodes;
  std::uint64_t base_seed = 0;

  void validate() const {
    if (ways < 2) fail(Errc::InvalidSpec, "ways must be >= 2");
    if (shots < 1) fail(Errc::InvalidSpec, "shots must be >= 1");
    if (queries < 1) fail(Errc::InvalidSpec, "queries must be >= 1");
    if (episodes < 1) fail(Errc::InvalidSpec, "episode count must be >= 1");
  }
};

/// A concrete task. Support and query rows are class-major: the rows of
/// class_ids[c] come at positions [c*shots, (c+1)*shots) and
/// [c*queries, (c+1)*queries) respectively, so local label c means class_ids[c].
struct Episode {
  std::vector<ClassId> class_ids;
  std::vector<std::size_t> support_rows;
  std::vector<std::size_t> query_rows;
  std::size_t shots = 0;
  std::size_t queries = 0;
  std::size_t episode_index = 0;
  std::uint64_t seed = 0;  // stream seed the episode was drawn with

  std::size_t ways() const { return class_ids.size(); }

  std::vector<int> support_labels() const { return local_labels(shots); }
  std::vector<int> query_labels() const { return local_labels(queries); }

 private:
  std::vector<int> local_labels(std::size_t per_class) const {
    std::vector<int> out;
    out.reserve(class_ids.size() * per_class);
    for (std::size_t c = 0; c < class_ids.size(); ++c) out.insert(out.end(), per_class, static_cast<int>(c));
    return out;
  }
};

inline std::uint64_t episode_seed(std::uint64_t base_seed, std::size_t episode_index) {
  return mix_seed(base_seed, episode_index);
}

/// Draws `ways` classes and, per class, `shots` + `queries` distinct rows.
/// `queries` may be zero here; training-only tasks use that.
inline Episode draw_task(const FeatureLibrary& lib, std::size_t ways, std::size_t shots,
                         std::size_t queries, std::uint64_t base_seed, std::size_t episode_index) {
  auto ids = lib.class_ids();
  if (ids.size() < ways) {
    fail(Errc::NotEnoughClasses, lib.dataset_name() + " has " + std::to_string(ids.size()) +
                                     " classes, need " + std::to_string(ways));
  }
  const auto seed = episode_seed(base_seed, episode_index);
  SplitMix64 rng(seed);
  partial_shuffle(std::span<ClassId>(ids), ways, rng);

  Episode ep;
  ep.shots = shots;
  ep.queries = queries;
  ep.episode_index = episode_index;
  ep.seed = seed;
  ep.class_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(ways));
  ep.support_rows.reserve(ways * shots);
  ep.query_rows.reserve(ways * queries);
  const std::size_t need = shots + queries;
  for (auto id : ep.class_ids) {
    auto rows = lib.class_index().at(id);
    if (rows.size() < need) {
      fail(Errc::ClassTooSmall, "class " + std::to_string(id) + " has " + std::to_string(rows.size()) +
                                    " rows, need " + std::to_string(need));
    }
    partial_shuffle(std::span<std::size_t>(rows), need, rng);
    ep.support_rows.insert(ep.support_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(shots));
    ep.query_rows.insert(ep.query_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(shots),
                         rows.begin() + static_cast<std::ptrdiff_t>(need));
  }
  return ep;
}

/// Deterministic in (spec.base_seed, episode_index) alone.
inline Episode sample_episode(const FeatureLibrary& lib, const EpisodeSpec& spec, std::size_t episode_index) {
  spec.validate();
  return draw_task(lib, spec.ways, spec.shots, spec.queries, spec.base_seed, episode_index);
}

inline nlohmann::json to_json(const Episode& ep) {
  return {{"episode", ep.episode_index},
          {"classes", ep.class_ids},
          {"support", ep.support_rows},
          {"query", ep.query_rows}};
}

// ---------------------------------------------------------------------------

struct AccuracySummary {
  double mean = 0.0;
  double ci95 = 0.0;
  std::vector<double> per_episode;
};

/// mean and 1.96 * s / sqrt(E), s the sample standard deviation (E - 1 denominator).
/// A single episode has no spread estimate; its ci95 is reported as 0.
inline AccuracySummary summarize(std::span<const double> per_episode) {
  if (per_episode.empty()) fail(Errc::EmptyInput, "cannot summarize zero episodes");
  AccuracySummary s;
  s.per_episode.assign(per_episode.begin(), per_episode.end());
  const auto [lo, hi] = std::minmax_element(per_episode.begin(), per_episode.end());
  if (*lo == *hi) {
    s.mean = *lo;
    return s;
  }
  const auto n = static_cast<double>(per_episode.size());
  double sum = 0.0;
  for (double a : per_episode) sum += a;
  s.mean = sum / n;
  if (per_episode.size() > 1) {
    double ss = 0.0;
    for (double a : per_episode) ss += (a - s.mean) * (a - s.mean);
    s.ci95 = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

}  // namespace fsb
