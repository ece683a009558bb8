#pragma once

// Published numbers used to check runs on real embeddings.

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace fsb::reference {

struct Backbone {
  std::string_view name;
  std::uint32_t dim;
};

/// The nine ILSVRC2012-trained extractors and their pooled embedding widths.
inline constexpr std::array<Backbone, 9> kLibraryBackbones{{
    {"DenseNet121", 1024},
    {"DenseNet161", 2208},
    {"DenseNet169", 1664},
    {"DenseNet201", 1920},
    {"ResNet18", 512},
    {"ResNet34", 512},
    {"ResNet50", 2048},
    {"ResNet101", 2048},
    {"ResNet152", 2048},
}};

inline constexpr std::uint32_t library_total_dim() {
  std::uint32_t total = 0;
  for (const auto& b : kLibraryBackbones) total += b.dim;
  return total;
}

struct Accuracy {
  double mean;  // percent
  double ci95;  // percent
};

struct DatasetReference {
  std::string_view dataset;
  Accuracy resnet18;
  Accuracy densenet161;
  Accuracy full_library;
};

/// 5-way 5-shot query accuracy, 600 episodes.
inline constexpr std::array<DatasetReference, 8> kFiveWayFiveShot{{
    {"Aircraft", {61.2, 0.9}, {66.0, 0.9}, {68.9, 0.9}},
    {"FC100", {72.1, 0.8}, {73.7, 0.7}, {79.1, 0.8}},
    {"Omniglot", {95.4, 0.3}, {96.6, 0.3}, {97.5, 0.3}},
    {"Texture", {79.3, 0.6}, {83.4, 0.6}, {85.3, 0.6}},
    {"Traffic", {83.2, 0.7}, {83.9, 0.7}, {85.8, 0.7}},
    {"Fungi", {77.7, 0.7}, {78.4, 0.8}, {81.2, 0.8}},
    {"QuickDraw", {81.7, 0.6}, {81.3, 0.6}, {84.2, 0.6}},
    {"VGGFlower", {95.3, 0.4}, {96.8, 0.3}, {97.4, 0.3}},
}};

inline std::optional<DatasetReference> five_way_five_shot(std::string_view dataset) {
  for (const auto& r : kFiveWayFiveShot) {
    if (r.dataset == dataset) return r;
  }
  return std::nullopt;
}

}  // namespace fsb::reference
