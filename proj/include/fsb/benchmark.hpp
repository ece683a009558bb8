#pragma once

#include <vector>

#include "fsb/classifier.hpp"
#include "fsb/ensembles.hpp"
#include "fsb/episodes.hpp"
#include "fsb/feature_store.hpp"
#include "fsb/parallel.hpp"
#include "fsb/reporting.hpp"

namespace fsb {

/// Per-episode accuracies of `method` over spec.episodes episodes, in episode
/// order. The result does not depend on `workers`.
inline std::vector<double> run_episodes(const FeatureLibrary& lib, const EpisodeSpec& spec, const MethodSpec& method,
                                        const TrainConfig& config, std::size_t workers = 1) {
  spec.validate();
  config.validate();
  method.resolve(lib);
  return parallel_map(spec.episodes, workers, [&](std::size_t i) {
    return evaluate_method(lib, sample_episode(lib, spec, i), method, config);
  });
}

inline BenchmarkRow run_benchmark(const FeatureLibrary& lib, const EpisodeSpec& spec, const MethodSpec& method,
                                  const TrainConfig& config, std::size_t workers = 1) {
  const auto acc = run_episodes(lib, spec, method, config, workers);
  const auto s = summarize(acc);
  return {lib.dataset_name(), method.name(), spec.ways, spec.shots, s.mean, s.ci95,
          spec.episodes, spec.base_seed, config_fingerprint(config, method)};
}

}  // namespace fsb
