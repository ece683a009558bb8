#pragma once

// Gaussian-cluster feature libraries for tests and demos.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "fsb/error.hpp"
#include "fsb/feature_store.hpp"
#include "fsb/rng.hpp"

namespace fsb {

enum class Background {
  Noise,     // non-signal columns are i.i.d. N(0, noise^2)
  Constant,  // non-signal columns hold a fixed per-column value in [0, 3)
};

struct SyntheticSpec {
  std::string dataset = "synthetic";
  std::size_t classes = 10;
  std::size_t rows_per_class = 20;
  std::vector<std::uint32_t> member_dims{64};
  /// Pairwise distance between class means within each member, in units of
  /// the noise standard deviation.
  double separation = 10.0;
  double noise = 1.0;
  /// Fraction of each member's columns that carry class signal; the rest is
  /// pure noise. The signal columns are fixed per member.
  double signal_fraction = 1.0;
  Background background = Background::Noise;
  std::uint64_t seed = 0;
};

/// Standard normal draws by Box-Muller on a SplitMix64 stream.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = rng_.uniform();
    while (u1 <= 0.0) u1 = rng_.uniform();
    const double u2 = rng_.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  SplitMix64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Class means: when a member has at least as many signal columns as there
/// are classes, class c sits at separation/sqrt(2) along its own signal
/// axis, giving exactly `separation` between every pair. Otherwise means are
/// Gaussian over the signal columns with expected pairwise distance `separation`.
inline std::vector<EmbeddingSet> make_synthetic_sets(const SyntheticSpec& spec) {
  if (spec.classes < 1 || spec.rows_per_class < 1 || spec.member_dims.empty()) {
    fail(Errc::InvalidSpec, "synthetic library needs classes, rows and members");
  }
  const std::size_t rows = spec.classes * spec.rows_per_class;
  auto labels = std::make_shared<std::vector<ClassId>>(rows);
  for (std::size_t r = 0; r < rows; ++r) (*labels)[r] = static_cast<ClassId>(r / spec.rows_per_class);
  std::shared_ptr<const std::vector<ClassId>> shared_labels = labels;

  std::vector<EmbeddingSet> sets;
  for (std::size_t m = 0; m < spec.member_dims.size(); ++m) {
    const std::size_t dim = spec.member_dims[m];
    SplitMix64 layout_rng(mix_seed(spec.seed, 2 * m));
    NormalStream normal(mix_seed(spec.seed, 2 * m + 1));

    std::vector<std::size_t> cols(dim);
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    const auto signal = static_cast<std::size_t>(std::floor(spec.signal_fraction * static_cast<double>(dim) + 1e-9));
    partial_shuffle(std::span<std::size_t>(cols), signal, layout_rng);
    cols.resize(signal);

    std::vector<bool> is_signal(dim, false);
    for (auto col : cols) is_signal[col] = true;
    std::vector<double> offsets(dim, 0.0);
    if (spec.background == Background::Constant) {
      for (auto& o : offsets) o = 3.0 * layout_rng.uniform();
    }

    std::vector<double> means(spec.classes * dim, 0.0);
    if (signal >= spec.classes) {
      for (std::size_t c = 0; c < spec.classes; ++c) {
        means[c * dim + cols[c]] = spec.separation * spec.noise / std::sqrt(2.0);
      }
    } else if (signal > 0) {
      const double tau = spec.separation * spec.noise / std::sqrt(2.0 * static_cast<double>(signal));
      for (std::size_t c = 0; c < spec.classes; ++c) {
        for (auto col : cols) means[c * dim + col] = tau * normal.next();
      }
    }

    std::vector<float> data(rows * dim);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t c = (*labels)[r];
      for (std::size_t j = 0; j < dim; ++j) {
        const bool constant = spec.background == Background::Constant && !is_signal[j];
        const double v = constant ? offsets[j] : means[c * dim + j] + spec.noise * normal.next();
        data[r * dim + j] = static_cast<float>(v);
      }
    }
    EmbeddingPayload payload{static_cast<std::uint32_t>(dim), rows, std::move(data)};
    sets.push_back(make_embedding_set("member" + std::to_string(m), std::move(payload), shared_labels));
  }
  return sets;
}

inline AssembledLibrary make_synthetic_library(const SyntheticSpec& spec) {
  return assemble_library(spec.dataset, make_synthetic_sets(spec));
}

/// Writes a manifest plus one embedding file per member into `dir`.
inline std::filesystem::path write_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto sets = make_synthetic_sets(spec);
  Manifest m;
  m.dataset = spec.dataset;
  m.rows = sets.front().rows;
  m.labels = *sets.front().row_labels;
  for (std::size_t c = 0; c < spec.classes; ++c) m.classes.push_back({static_cast<ClassId>(c), "class" + std::to_string(c)});
  for (const auto& s : sets) {
    const std::string file = s.extractor_name + ".fseb";
    write_embedding_set(dir / file, s);
    m.extractors.push_back({s.extractor_name, file, s.feature_dim});
  }
  const auto manifest_path = dir / "manifest.json";
  write_manifest(manifest_path, m);
  return manifest_path;
}

}  // namespace fsb
