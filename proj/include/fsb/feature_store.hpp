#pragma once

// Embedding files, dataset manifests and the immutable feature library that
// every other module reads from.
//
// Embedding file layout (little-endian, no padding):
//   "FSEB" | u32 version = 1 | u32 feature_dim | u64 rows | rows*feature_dim f32, row-major

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fsb/error.hpp"

namespace fsb {

using ClassId = std::uint32_t;

inline constexpr std::array<char, 4> kEmbeddingMagic{'F', 'S', 'E', 'B'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 4 + 4 + 4 + 8;

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(u & 0xFF));
    u = static_cast<U>(u >> 8);
  }
}

template <typename T>
T get_le(const unsigned char* bytes) {
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) u = static_cast<decltype(u)>((u << 8) | bytes[i]);
  return static_cast<T>(u);
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::IoError, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::IoError, "write failed for " + path.string());
}

}  // namespace detail

/// One extractor's embeddings of every image in a dataset.
struct EmbeddingSet {
  std::string extractor_name;
  std::uint32_t feature_dim = 0;
  std::uint64_t rows = 0;
  std::shared_ptr<const std::vector<float>> data;
  std::shared_ptr<const std::vector<ClassId>> row_labels;

  std::span<const float> row(std::uint64_t r) const {
    return {data->data() + r * feature_dim, feature_dim};
  }
  float at(std::uint64_t r, std::uint32_t c) const { return (*data)[r * feature_dim + c]; }
};

/// Raw contents of an embedding file before labels are attached.
struct EmbeddingPayload {
  std::uint32_t feature_dim = 0;
  std::uint64_t rows = 0;
  std::vector<float> data;
};

inline std::string encode_embedding_payload(std::uint32_t feature_dim, std::uint64_t rows,
                                            std::span<const float> data) {
  if (feature_dim == 0) fail(Errc::InvalidSpec, "feature_dim must be positive");
  if (data.size() != rows * feature_dim) {
    fail(Errc::ShapeMismatch, "payload has " + std::to_string(data.size()) + " values, expected " +
                                  std::to_string(rows * feature_dim));
  }
  std::string out;
  out.reserve(kEmbeddingHeaderBytes + data.size() * 4);
  out.append(kEmbeddingMagic.data(), kEmbeddingMagic.size());
  detail::put_le<std::uint32_t>(out, kEmbeddingVersion);
  detail::put_le<std::uint32_t>(out, feature_dim);
  detail::put_le<std::uint64_t>(out, rows);
  for (float v : data) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline void write_embedding_file(const std::filesystem::path& path, std::uint32_t feature_dim,
                                 std::uint64_t rows, std::span<const float> data) {
  detail::write_file(path, encode_embedding_payload(feature_dim, rows, data));
}

inline void write_embedding_set(const std::filesystem::path& path, const EmbeddingSet& set) {
  write_embedding_file(path, set.feature_dim, set.rows, *set.data);
}

/// Reads and validates an embedding file: magic, version, exact size and
/// finiteness of every value.
inline EmbeddingPayload read_embedding_payload(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open " + path.string());
  std::error_code ec;
  const auto file_size = std::filesystem::file_size(path, ec);
  if (ec) fail(Errc::IoError, "cannot stat " + path.string());

  std::array<unsigned char, kEmbeddingHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()),
          static_cast<std::streamsize>(std::min<std::uintmax_t>(file_size, header.size())));
  if (file_size < 4) {
    fail(Errc::TruncatedFile, path.string() + ": file ends at byte " + std::to_string(file_size) +
                                  " inside the magic header");
  }
  if (std::memcmp(header.data(), kEmbeddingMagic.data(), 4) != 0) {
    fail(Errc::BadMagic, path.string() + ": bytes 0..3 are not \"FSEB\"");
  }
  if (file_size < kEmbeddingHeaderBytes) {
    fail(Errc::TruncatedFile, path.string() + ": file ends at byte " + std::to_string(file_size) +
                                  " inside the 20-byte header");
  }
  const auto version = detail::get_le<std::uint32_t>(header.data() + 4);
  if (version != kEmbeddingVersion) {
    fail(Errc::VersionUnsupported,
         path.string() + ": version " + std::to_string(version) + " at byte offset 4");
  }
  EmbeddingPayload payload;
  payload.feature_dim = detail::get_le<std::uint32_t>(header.data() + 8);
  payload.rows = detail::get_le<std::uint64_t>(header.data() + 12);
  if (payload.feature_dim == 0) {
    fail(Errc::ManifestInvalid, path.string() + ": feature_dim 0 at byte offset 8");
  }

  const std::uintmax_t row_bytes = std::uintmax_t{payload.feature_dim} * 4;
  const std::uintmax_t body = file_size - kEmbeddingHeaderBytes;
  if (payload.rows > body / row_bytes) {
    const auto complete_rows = body / row_bytes;
    fail(Errc::TruncatedFile, path.string() + ": header declares " + std::to_string(payload.rows) +
                                  " rows but payload ends at byte " + std::to_string(file_size) +
                                  " (row " + std::to_string(complete_rows) + " incomplete)");
  }
  const std::uintmax_t expected = payload.rows * row_bytes;
  if (body != expected) {
    fail(Errc::TrailingData, path.string() + ": " + std::to_string(body - expected) +
                                 " unexpected bytes after offset " +
                                 std::to_string(kEmbeddingHeaderBytes + expected));
  }

  const std::size_t count = payload.rows * payload.feature_dim;
  payload.data.resize(count);
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(payload.data.data()), static_cast<std::streamsize>(count * 4));
    if (!in) fail(Errc::IoError, "read failed for " + path.string());
  } else {
    std::vector<unsigned char> raw(count * 4);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) fail(Errc::IoError, "read failed for " + path.string());
    for (std::size_t i = 0; i < count; ++i) {
      payload.data[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(raw.data() + 4 * i));
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::isfinite(payload.data[i])) {
      fail(Errc::NonFiniteValue, path.string() + ": non-finite value at row " +
                                     std::to_string(i / payload.feature_dim) + ", col " +
                                     std::to_string(i % payload.feature_dim));
    }
  }
  return payload;
}

inline EmbeddingSet make_embedding_set(std::string name, EmbeddingPayload payload,
                                       std::shared_ptr<const std::vector<ClassId>> labels) {
  if (!labels || labels->size() != payload.rows) {
    fail(Errc::LabelCountMismatch, name + ": " + std::to_string(payload.rows) + " rows but " +
                                       std::to_string(labels ? labels->size() : 0) + " labels");
  }
  EmbeddingSet set;
  set.extractor_name = std::move(name);
  set.feature_dim = payload.feature_dim;
  set.rows = payload.rows;
  set.data = std::make_shared<const std::vector<float>>(std::move(payload.data));
  set.row_labels = std::move(labels);
  return set;
}

inline EmbeddingSet load_embedding_set(const std::filesystem::path& path, std::string name,
                                       std::shared_ptr<const std::vector<ClassId>> labels) {
  return make_embedding_set(std::move(name), read_embedding_payload(path), std::move(labels));
}

// ---------------------------------------------------------------------------
// Manifest

struct ClassInfo {
  ClassId id = 0;
  std::string name;
};

struct ExtractorEntry {
  std::string name;
  std::string file;
  std::uint32_t dim = 0;
};

struct Manifest {
  std::string dataset;
  std::uint64_t rows = 0;
  std::vector<ClassId> labels;
  std::vector<ClassInfo> classes;
  std::vector<ExtractorEntry> extractors;
  std::filesystem::path base_dir;  // extractor files are relative to this
};

inline Manifest parse_manifest(const nlohmann::json& j, std::filesystem::path base_dir = {}) {
  Manifest m;
  try {
    m.dataset = j.at("dataset").get<std::string>();
    m.rows = j.at("rows").get<std::uint64_t>();
    for (const auto& l : j.at("labels")) {
      const auto v = l.get<std::int64_t>();
      if (v < 0 || v > std::numeric_limits<ClassId>::max()) {
        fail(Errc::ManifestInvalid, "label " + std::to_string(v) + " is not a valid class id");
      }
      m.labels.push_back(static_cast<ClassId>(v));
    }
    for (const auto& c : j.at("classes")) {
      const auto id = c.at("id").get<std::int64_t>();
      if (id < 0 || id > std::numeric_limits<ClassId>::max()) {
        fail(Errc::ManifestInvalid, "class id " + std::to_string(id) + " is not valid");
      }
      m.classes.push_back({static_cast<ClassId>(id), c.at("name").get<std::string>()});
    }
    for (const auto& e : j.at("extractors")) {
      m.extractors.push_back(
          {e.at("name").get<std::string>(), e.at("file").get<std::string>(), e.at("dim").get<std::uint32_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ManifestInvalid, e.what());
  }
  m.base_dir = std::move(base_dir);

  if (m.labels.size() != m.rows) {
    fail(Errc::LabelCountMismatch, "manifest declares " + std::to_string(m.rows) + " rows but has " +
                                       std::to_string(m.labels.size()) + " labels");
  }
  std::map<ClassId, std::string> table;
  for (const auto& c : m.classes) {
    if (!table.emplace(c.id, c.name).second) {
      fail(Errc::DuplicateName, "class id " + std::to_string(c.id) + " listed twice");
    }
  }
  for (std::size_t r = 0; r < m.labels.size(); ++r) {
    if (!table.contains(m.labels[r])) {
      fail(Errc::UnknownClass, "row " + std::to_string(r) + " has label " +
                                   std::to_string(m.labels[r]) + " missing from the class table");
    }
  }
  if (m.extractors.empty()) fail(Errc::ManifestInvalid, "manifest lists no extractors");
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ManifestInvalid, path.string() + ": " + e.what());
  }
  return parse_manifest(j, path.parent_path());
}

inline nlohmann::json to_json(const Manifest& m) {
  nlohmann::json j;
  j["dataset"] = m.dataset;
  j["rows"] = m.rows;
  j["labels"] = m.labels;
  j["classes"] = nlohmann::json::array();
  for (const auto& c : m.classes) j["classes"].push_back({{"id", c.id}, {"name", c.name}});
  j["extractors"] = nlohmann::json::array();
  for (const auto& e : m.extractors) {
    j["extractors"].push_back({{"name", e.name}, {"file", e.file}, {"dim", e.dim}});
  }
  return j;
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  detail::write_file(path, to_json(m).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Library

struct ExtractorBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
};

/// Column ownership of the concatenated feature space, in member order.
struct ExtractorLayout {
  std::vector<ExtractorBlock> blocks;

  std::size_t total_dim() const {
    return blocks.empty() ? 0 : blocks.back().offset + blocks.back().length;
  }
};

struct AssembledLibrary;

class FeatureLibrary {
 public:
  FeatureLibrary() = default;

  const std::string& dataset_name() const { return dataset_name_; }
  const std::vector<EmbeddingSet>& members() const { return members_; }
  std::uint64_t rows() const { return members_.empty() ? 0 : members_.front().rows; }
  std::size_t total_dim() const { return total_dim_; }
  const std::vector<ClassId>& labels() const { return *members_.front().row_labels; }
  /// class id -> ascending row indices; ordered by class id.
  const std::map<ClassId, std::vector<std::size_t>>& class_index() const { return class_index_; }

  std::vector<ClassId> class_ids() const {
    std::vector<ClassId> ids;
    ids.reserve(class_index_.size());
    for (const auto& [id, rows] : class_index_) ids.push_back(id);
    return ids;
  }

  std::size_t member_index(std::string_view name) const {
    for (std::size_t i = 0; i < members_.size(); ++i) {
      if (members_[i].extractor_name == name) return i;
    }
    fail(Errc::UnknownMember, "no member named '" + std::string(name) + "' in " + dataset_name_);
  }

  std::vector<std::size_t> all_members() const {
    std::vector<std::size_t> idx(members_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
  }

 private:
  friend AssembledLibrary assemble_library(std::string, std::vector<EmbeddingSet>);

  std::string dataset_name_;
  std::vector<EmbeddingSet> members_;
  std::map<ClassId, std::vector<std::size_t>> class_index_;
  std::size_t total_dim_ = 0;
};

struct AssembledLibrary {
  FeatureLibrary library;
  ExtractorLayout layout;
};

/// Members keep the given order; the layout's blocks follow it.
inline AssembledLibrary assemble_library(std::string dataset_name, std::vector<EmbeddingSet> sets) {
  if (sets.empty()) fail(Errc::InvalidSpec, "a library needs at least one embedding set");
  const auto& first = sets.front();
  for (std::size_t i = 1; i < sets.size(); ++i) {
    const auto& s = sets[i];
    if (s.rows != first.rows) {
      fail(Errc::RowCountMismatch, s.extractor_name + " has " + std::to_string(s.rows) + " rows, " +
                                       first.extractor_name + " has " + std::to_string(first.rows));
    }
    if (s.row_labels != first.row_labels) {
      for (std::uint64_t r = 0; r < s.rows; ++r) {
        if ((*s.row_labels)[r] != (*first.row_labels)[r]) {
          fail(Errc::LabelOrderMismatch, s.extractor_name + " disagrees with " + first.extractor_name +
                                             " on the label of row " + std::to_string(r));
        }
      }
    }
    for (std::size_t k = 0; k < i; ++k) {
      if (sets[k].extractor_name == s.extractor_name) {
        fail(Errc::DuplicateName, "member '" + s.extractor_name + "' appears twice");
      }
    }
  }
  if (first.row_labels->size() != first.rows) {
    fail(Errc::LabelCountMismatch, first.extractor_name + ": label count differs from rows");
  }

  AssembledLibrary out;
  auto& lib = out.library;
  lib.dataset_name_ = std::move(dataset_name);
  std::size_t offset = 0;
  for (const auto& s : sets) {
    out.layout.blocks.push_back({s.extractor_name, offset, s.feature_dim});
    offset += s.feature_dim;
  }
  lib.total_dim_ = offset;
  const auto& labels = *first.row_labels;
  for (std::size_t r = 0; r < labels.size(); ++r) lib.class_index_[labels[r]].push_back(r);
  lib.members_ = std::move(sets);
  return out;
}

/// Loads every extractor listed in a manifest and assembles the library.
inline AssembledLibrary load_library(const Manifest& manifest) {
  auto labels = std::make_shared<const std::vector<ClassId>>(manifest.labels);
  std::vector<EmbeddingSet> sets;
  for (const auto& e : manifest.extractors) {
    auto set = load_embedding_set(manifest.base_dir / e.file, e.name, labels);
    if (set.feature_dim != e.dim) {
      fail(Errc::DimMismatch, e.name + ": manifest says dim " + std::to_string(e.dim) + ", file has " +
                                  std::to_string(set.feature_dim));
    }
    sets.push_back(std::move(set));
  }
  return assemble_library(manifest.dataset, std::move(sets));
}

inline AssembledLibrary load_library(const std::filesystem::path& manifest_path) {
  return load_library(load_manifest(manifest_path));
}

/// Horizontally concatenates the selected members' features for the given
/// rows. Members are emitted in layout order whatever order they are named in.
inline Eigen::MatrixXd gather_rows(const FeatureLibrary& lib, std::span<const std::size_t> rows,
                                   std::span<const std::size_t> member_indices) {
  std::vector<std::size_t> members(member_indices.begin(), member_indices.end());
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  std::size_t width = 0;
  for (auto m : members) {
    if (m >= lib.members().size()) {
      fail(Errc::UnknownMember, "member index " + std::to_string(m) + " out of range");
    }
    width += lib.members()[m].feature_dim;
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= lib.rows()) {
      fail(Errc::IndexOutOfRange, "row " + std::to_string(rows[i]) + " >= " + std::to_string(lib.rows()));
    }
    Eigen::Index col = 0;
    for (auto m : members) {
      const auto src = lib.members()[m].row(rows[i]);
      for (float v : src) out(static_cast<Eigen::Index>(i), col++) = v;
    }
  }
  return out;
}

inline Eigen::MatrixXd gather_rows(const FeatureLibrary& lib, std::span<const std::size_t> rows,
                                   const std::vector<std::string>& member_names) {
  std::vector<std::size_t> idx;
  for (const auto& n : member_names) idx.push_back(lib.member_index(n));
  return gather_rows(lib, rows, idx);
}

inline Eigen::MatrixXd gather_rows(const FeatureLibrary& lib, std::span<const std::size_t> rows) {
  return gather_rows(lib, rows, lib.all_members());
}

}  // namespace fsb
