#pragma once

// Hyperparameter selection on a validation library: one configuration per
// way-count, chosen on 1-shot episodes and reused for every shot count and
// every test dataset.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsb/benchmark.hpp"
#include "fsb/classifier.hpp"
#include "fsb/ensembles.hpp"
#include "fsb/episodes.hpp"
#include "fsb/error.hpp"

namespace fsb {

struct SearchGrid {
  std::vector<double> learning_rates{1e-3, 5e-4};
  std::vector<std::size_t> epoch_counts{100, 200, 300};
  std::vector<std::size_t> hidden_sizes{0, 512, 1024, 2048, 4096};
  std::vector<double> l2_lambdas{0.1, 0.2, 0.5, 0.7, 0.9};

  void validate() const {
    if (learning_rates.empty() || epoch_counts.empty() || hidden_sizes.empty() || l2_lambdas.empty()) {
      fail(Errc::InvalidSpec, "every grid axis needs at least one value");
    }
  }

  std::size_t size() const {
    return learning_rates.size() * epoch_counts.size() * hidden_sizes.size() * l2_lambdas.size();
  }

  /// Grid points in lexicographic (lr, epochs, hidden, lambda) order.
  std::vector<TrainConfig> points(const TrainConfig& base = {}) const {
    std::vector<TrainConfig> out;
    out.reserve(size());
    for (double lr : learning_rates) {
      for (auto ep : epoch_counts) {
        for (auto h : hidden_sizes) {
          for (double l2 : l2_lambdas) {
            TrainConfig c = base;
            c.learning_rate = lr;
            c.epochs = ep;
            c.hidden_size = h;
            c.l2_lambda = l2;
            out.push_back(c);
          }
        }
      }
    }
    return out;
  }
};

/// Ways -> configuration. 5-shot problems use the 1-shot entry.
struct TunedProfile {
  std::string method;
  std::map<std::size_t, TrainConfig> by_ways;

  const TrainConfig& for_ways(std::size_t ways) const {
    const auto it = by_ways.find(ways);
    if (it == by_ways.end()) {
      fail(Errc::UnknownWays, "profile for " + method + " has no " + std::to_string(ways) + "-way entry");
    }
    return it->second;
  }
};

namespace detail {

struct PublishedSetting {
  std::string_view backbone;
  std::size_t ways;
  std::size_t epochs;
  std::size_t hidden;
  double learning_rate;
  double l2_lambda;
};

// Settings selected on CUB-200 for each backbone (epochs, hidden, lr, lambda).
inline constexpr PublishedSetting kPublishedSettings[] = {
    {"DenseNet121", 5, 200, 1024, 1e-3, 0.2},
    {"DenseNet161", 5, 100, 1024, 5e-4, 0.2},
    {"DenseNet169", 5, 300, 1024, 5e-4, 0.5},
    {"DenseNet201", 5, 100, 512, 5e-4, 0.5},
    {"ResNet18", 5, 200, 512, 1e-3, 0.2},
    {"ResNet34", 5, 100, 1024, 5e-4, 0.2},
    {"ResNet50", 5, 300, 2048, 5e-4, 0.1},
    {"ResNet101", 5, 100, 512, 1e-3, 0.1},
    {"ResNet152", 5, 300, 512, 5e-4, 0.1},
    {"full_library", 5, 300, 1024, 5e-4, 0.1},
    {"BiT-ResNet-101-3", 5, 300, 4096, 1e-3, 0.7},
    {"BiT-ResNet-152-4", 5, 300, 2048, 5e-4, 0.7},
    {"BiT-ResNet-50-1", 5, 200, 2048, 5e-4, 0.5},

    {"DenseNet121", 20, 100, 1024, 5e-4, 0.2},
    {"DenseNet161", 20, 100, 512, 1e-3, 0.1},
    {"DenseNet169", 20, 300, 512, 5e-4, 0.1},
    {"DenseNet201", 20, 200, 1024, 5e-4, 0.1},
    {"ResNet18", 20, 200, 2048, 5e-4, 0.1},
    {"ResNet34", 20, 100, 1024, 5e-4, 0.1},
    {"ResNet50", 20, 100, 1024, 5e-4, 0.1},
    {"ResNet101", 20, 200, 2048, 5e-4, 0.2},
    {"ResNet152", 20, 100, 512, 5e-4, 0.2},
    {"full_library", 20, 100, 512, 5e-4, 0.1},
    {"BiT-ResNet-101-3", 20, 300, 2048, 5e-4, 0.5},
    {"BiT-ResNet-152-4", 20, 300, 1024, 5e-4, 0.5},
    {"BiT-ResNet-50-1", 20, 100, 2048, 5e-4, 0.9},

    {"DenseNet121", 40, 100, 2048, 5e-4, 0.1},
    {"DenseNet161", 40, 100, 512, 5e-4, 0.1},
    {"DenseNet169", 40, 100, 512, 1e-3, 0.2},
    {"DenseNet201", 40, 100, 1024, 5e-4, 0.1},
    {"ResNet18", 40, 100, 512, 1e-3, 0.1},
    {"ResNet34", 40, 100, 2048, 5e-4, 0.2},
    {"ResNet50", 40, 100, 512, 5e-4, 0.1},
    {"ResNet101", 40, 100, 512, 5e-4, 0.1},
    {"ResNet152", 40, 100, 1024, 5e-4, 0.1},
    {"full_library", 40, 100, 1024, 5e-4, 0.1},
    {"BiT-ResNet-101-3", 40, 300, 512, 5e-4, 0.7},
    {"BiT-ResNet-152-4", 40, 200, 1024, 5e-4, 0.5},
    {"BiT-ResNet-50-1", 40, 300, 1024, 5e-4, 0.5},
};

/// Lowercase with '-', '_' and spaces removed: "BiT-ResNet-50-1" -> "bitresnet501".
inline std::string canonical_backbone(std::string_view name) {
  if (name.starts_with("single:")) name.remove_prefix(7);
  std::string out;
  for (char c : name) {
    if (c == '-' || c == '_' || c == ' ') continue;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

}  // namespace detail

/// The published per-backbone settings. Accepts backbone names in any case
/// and punctuation ("resnet18", "single:ResNet18", "bit_resnet_50_1") and
/// "full_library".
inline TunedProfile default_profile(std::string_view method) {
  const auto key = detail::canonical_backbone(method);
  TunedProfile p;
  for (const auto& s : detail::kPublishedSettings) {
    if (detail::canonical_backbone(s.backbone) != key) continue;
    p.method = std::string(s.backbone);
    TrainConfig c;
    c.epochs = s.epochs;
    c.hidden_size = s.hidden;
    c.learning_rate = s.learning_rate;
    c.l2_lambda = s.l2_lambda;
    p.by_ways[s.ways] = c;
  }
  if (p.by_ways.empty()) fail(Errc::UnknownMethod, "no published settings for '" + std::string(method) + "'");
  return p;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"epochs", c.epochs},       {"hidden_size", c.hidden_size},
          {"l2_lambda", c.l2_lambda},         {"adam_beta1", c.adam_beta1}, {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},           {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.hidden_size = j.at("hidden_size").get<std::size_t>();
    c.l2_lambda = j.at("l2_lambda").get<double>();
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ParseError, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json to_json(const TunedProfile& p) {
  nlohmann::json configs = nlohmann::json::object();
  for (const auto& [ways, c] : p.by_ways) configs[std::to_string(ways)] = to_json(c);
  return {{"method", p.method}, {"configs", configs}};
}

inline TunedProfile tuned_profile_from_json(const nlohmann::json& j) {
  TunedProfile p;
  try {
    p.method = j.at("method").get<std::string>();
    for (const auto& [ways, c] : j.at("configs").items()) {
      p.by_ways[detail::parse_number<std::size_t>(ways)] = train_config_from_json(c);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ParseError, std::string("profile: ") + e.what());
  }
  return p;
}

inline void save_profile(const std::filesystem::path& path, const TunedProfile& p) {
  detail::write_file(path, to_json(p).dump(2) + "\n");
}

inline TunedProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open profile " + path.string());
  try {
    return tuned_profile_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ParseError, path.string() + ": " + e.what());
  }
}

struct GridScore {
  TrainConfig config;
  double mean_accuracy = 0.0;
};

struct SearchResult {
  TrainConfig best;
  std::vector<GridScore> scores;  // grid order
};

/// True when `a` should be preferred over `b`: higher mean accuracy, then
/// fewer epochs, smaller hidden layer, larger lambda, smaller learning rate.
inline bool better_grid_score(const GridScore& a, const GridScore& b) {
  if (a.mean_accuracy != b.mean_accuracy) return a.mean_accuracy > b.mean_accuracy;
  if (a.config.epochs != b.config.epochs) return a.config.epochs < b.config.epochs;
  if (a.config.hidden_size != b.config.hidden_size) return a.config.hidden_size < b.config.hidden_size;
  if (a.config.l2_lambda != b.config.l2_lambda) return a.config.l2_lambda > b.config.l2_lambda;
  return a.config.learning_rate < b.config.learning_rate;
}

struct SearchOptions {
  std::size_t episodes = kDefaultEpisodes;
  std::size_t queries = kDefaultQueries;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  /// Datasets the result will be tested on; the validation library must not be one of them.
  std::vector<std::string> test_datasets;
  TrainConfig base;  // Adam constants and training seed
};

/// Scores every grid point on the same 1-shot `ways`-way episodes of the
/// validation library and returns the best one.
inline SearchResult grid_search(const FeatureLibrary& validation, const MethodSpec& method, std::size_t ways,
                                const SearchGrid& grid, const SearchOptions& options = {}) {
  grid.validate();
  for (const auto& t : options.test_datasets) {
    if (t == validation.dataset_name()) {
      fail(Errc::ValidationEqualsTest, "validation library '" + t + "' is also a test dataset");
    }
  }
  EpisodeSpec spec;
  spec.ways = ways;
  spec.shots = 1;
  spec.queries = options.queries;
  spec.episodes = options.episodes;
  spec.base_seed = options.seed;

  SearchResult result;
  for (const auto& cfg : grid.points(options.base)) {
    const auto acc = run_episodes(validation, spec, method, cfg, options.workers);
    result.scores.push_back({cfg, summarize(acc).mean});
  }
  result.best = std::min_element(result.scores.begin(), result.scores.end(), better_grid_score)->config;
  return result;
}

}  // namespace fsb
