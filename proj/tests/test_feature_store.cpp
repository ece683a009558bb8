#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fsb/feature_store.hpp"
#include "fsb/reference.hpp"
#include "fsb/rng.hpp"
#include "support.hpp"

using namespace fsb;
using fsb::test::TempDir;

namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform() * 20.0 - 10.0);
  return v;
}

std::shared_ptr<const std::vector<ClassId>> labels_of(std::vector<ClassId> v) {
  return std::make_shared<const std::vector<ClassId>>(std::move(v));
}

EmbeddingSet make_set(std::string name, std::uint32_t dim, std::shared_ptr<const std::vector<ClassId>> labels,
                      std::uint64_t seed) {
  const auto rows = labels->size();
  return make_embedding_set(std::move(name), {dim, rows, random_floats(rows * dim, seed)}, std::move(labels));
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(EmbeddingFile, HeaderLayout) {
  const std::vector<float> data{1.0f, -2.5f};
  const auto bytes = encode_embedding_payload(2, 1, data);
  ASSERT_EQ(bytes.size(), 20u + 8u);
  EXPECT_EQ(bytes.substr(0, 4), "FSEB");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  EXPECT_EQ(detail::get_le<std::uint32_t>(p + 4), 1u);
  EXPECT_EQ(detail::get_le<std::uint32_t>(p + 8), 2u);
  EXPECT_EQ(detail::get_le<std::uint64_t>(p + 12), 1u);
  // 1.0f = 0x3F800000, little-endian.
  EXPECT_EQ(p[20], 0x00);
  EXPECT_EQ(p[23], 0x3F);
}

TEST(EmbeddingFile, RoundTripDim512Rows3) {
  TempDir dir;
  const auto data = random_floats(3 * 512, 1);
  write_embedding_file(dir / "a.fseb", 512, 3, data);
  const auto set = load_embedding_set(dir / "a.fseb", "ResNet18", labels_of({0, 1, 1}));
  EXPECT_EQ(set.feature_dim, 512u);
  EXPECT_EQ(set.rows, 3u);
  EXPECT_EQ(*set.data, data);
  EXPECT_EQ(set.at(2, 511), data[2 * 512 + 511]);
}

TEST(EmbeddingFile, RoundTripReproducesBytes) {
  TempDir dir;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SplitMix64 rng(seed);
    const auto dim = static_cast<std::uint32_t>(1 + rng.below(40));
    const auto rows = rng.below(30);
    const auto data = random_floats(rows * dim, seed + 100);
    const auto path = dir / ("r" + std::to_string(seed) + ".fseb");
    write_embedding_file(path, dim, rows, data);
    const auto payload = read_embedding_payload(path);
    EXPECT_EQ(payload.data, data);
    std::vector<ClassId> labels(rows, 0);
    const auto set = make_embedding_set("x", payload, labels_of(labels));
    const auto again = dir / ("r" + std::to_string(seed) + "b.fseb");
    write_embedding_set(again, set);
    EXPECT_EQ(read_bytes(path), read_bytes(again));
  }
}

TEST(EmbeddingFile, MissingRowIsTruncated) {
  TempDir dir;
  auto bytes = encode_embedding_payload(4, 10, random_floats(40, 2));
  bytes.resize(bytes.size() - 16);
  write_bytes(dir / "t.fseb", bytes);
  try {
    read_embedding_payload(dir / "t.fseb");
    FAIL() << "expected TruncatedFile";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TruncatedFile);
    EXPECT_NE(std::string(e.what()).find("row 9"), std::string::npos) << e.what();
  }
}

TEST(EmbeddingFile, ShortHeaderIsTruncated) {
  TempDir dir;
  write_bytes(dir / "h.fseb", std::string("FSEB\x01\x00", 6));
  EXPECT_FSB_ERROR(read_embedding_payload(dir / "h.fseb"), Errc::TruncatedFile);
  write_bytes(dir / "m.fseb", "FS");
  EXPECT_FSB_ERROR(read_embedding_payload(dir / "m.fseb"), Errc::TruncatedFile);
}

TEST(EmbeddingFile, ExtraBytesAreTrailingData) {
  TempDir dir;
  auto bytes = encode_embedding_payload(2, 2, random_floats(4, 3));
  bytes += "xyz";
  write_bytes(dir / "x.fseb", bytes);
  EXPECT_FSB_ERROR(read_embedding_payload(dir / "x.fseb"), Errc::TrailingData);
}

TEST(EmbeddingFile, BadMagic) {
  TempDir dir;
  auto bytes = encode_embedding_payload(2, 1, random_floats(2, 4));
  bytes[0] = 'X';
  write_bytes(dir / "b.fseb", bytes);
  EXPECT_FSB_ERROR(read_embedding_payload(dir / "b.fseb"), Errc::BadMagic);
}

TEST(EmbeddingFile, UnsupportedVersion) {
  TempDir dir;
  auto bytes = encode_embedding_payload(2, 1, random_floats(2, 5));
  bytes[4] = 2;
  write_bytes(dir / "v.fseb", bytes);
  EXPECT_FSB_ERROR(read_embedding_payload(dir / "v.fseb"), Errc::VersionUnsupported);
}

TEST(EmbeddingFile, NanNamesRowAndColumn) {
  TempDir dir;
  auto data = random_floats(3 * 5, 6);
  data[2 * 5 + 3] = std::numeric_limits<float>::quiet_NaN();
  write_embedding_file(dir / "n.fseb", 5, 3, data);
  try {
    read_embedding_payload(dir / "n.fseb");
    FAIL() << "expected NonFiniteValue";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonFiniteValue);
    EXPECT_NE(std::string(e.what()).find("row 2, col 3"), std::string::npos) << e.what();
  }
}

TEST(EmbeddingFile, InfinityRejected) {
  TempDir dir;
  auto data = random_floats(4, 7);
  data[1] = std::numeric_limits<float>::infinity();
  write_embedding_file(dir / "i.fseb", 2, 2, data);
  EXPECT_FSB_ERROR(read_embedding_payload(dir / "i.fseb"), Errc::NonFiniteValue);
}

TEST(EmbeddingFile, LabelCountMismatch) {
  TempDir dir;
  write_embedding_file(dir / "l.fseb", 2, 3, random_floats(6, 8));
  EXPECT_FSB_ERROR(load_embedding_set(dir / "l.fseb", "x", labels_of({0, 1})), Errc::LabelCountMismatch);
}

TEST(EmbeddingFile, MissingFile) {
  EXPECT_FSB_ERROR(read_embedding_payload("/nonexistent/dir/none.fseb"), Errc::IoError);
}

TEST(Manifest, ParseAndSerialize) {
  const auto j = nlohmann::json::parse(R"({
    "dataset": "toy", "rows": 3, "labels": [4, 7, 4],
    "classes": [{"id": 4, "name": "cat"}, {"id": 7, "name": "dog"}],
    "extractors": [{"name": "ResNet18", "file": "r18.fseb", "dim": 512}]
  })");
  const auto m = parse_manifest(j);
  EXPECT_EQ(m.dataset, "toy");
  EXPECT_EQ(m.labels, (std::vector<ClassId>{4, 7, 4}));
  ASSERT_EQ(m.extractors.size(), 1u);
  EXPECT_EQ(m.extractors[0].dim, 512u);
  EXPECT_EQ(parse_manifest(to_json(m)).labels, m.labels);
}

TEST(Manifest, Errors) {
  auto base = nlohmann::json::parse(R"({
    "dataset": "toy", "rows": 2, "labels": [0, 1],
    "classes": [{"id": 0, "name": "a"}, {"id": 1, "name": "b"}],
    "extractors": [{"name": "e", "file": "e.fseb", "dim": 2}]
  })");
  auto j = base;
  j["rows"] = 3;
  EXPECT_FSB_ERROR(parse_manifest(j), Errc::LabelCountMismatch);
  j = base;
  j["labels"] = {0, 5};
  EXPECT_FSB_ERROR(parse_manifest(j), Errc::UnknownClass);
  j = base;
  j["classes"].push_back({{"id", 0}, {"name", "again"}});
  EXPECT_FSB_ERROR(parse_manifest(j), Errc::DuplicateName);
  j = base;
  j["extractors"] = nlohmann::json::array();
  EXPECT_FSB_ERROR(parse_manifest(j), Errc::ManifestInvalid);
  j = base;
  j.erase("dataset");
  EXPECT_FSB_ERROR(parse_manifest(j), Errc::ManifestInvalid);
  j = base;
  j["labels"] = {0, -1};
  EXPECT_FSB_ERROR(parse_manifest(j), Errc::ManifestInvalid);
}

TEST(Manifest, LoadLibraryChecksDims) {
  TempDir dir;
  write_embedding_file(dir / "e.fseb", 3, 2, random_floats(6, 9));
  Manifest m;
  m.dataset = "toy";
  m.rows = 2;
  m.labels = {0, 1};
  m.classes = {{0, "a"}, {1, "b"}};
  m.extractors = {{"e", "e.fseb", 3}};
  write_manifest(dir / "manifest.json", m);
  const auto lib = load_library(dir / "manifest.json");
  EXPECT_EQ(lib.library.total_dim(), 3u);
  m.extractors[0].dim = 4;
  write_manifest(dir / "manifest.json", m);
  EXPECT_FSB_ERROR(load_library(dir / "manifest.json"), Errc::DimMismatch);
}

TEST(AssembleLibrary, NineMembersTotal13984) {
  auto labels = labels_of({0, 1});
  std::vector<EmbeddingSet> sets;
  std::uint64_t seed = 0;
  for (const auto& b : reference::kLibraryBackbones) sets.push_back(make_set(std::string(b.name), b.dim, labels, ++seed));
  const auto a = assemble_library("toy", std::move(sets));
  EXPECT_EQ(a.library.total_dim(), 13984u);
  EXPECT_EQ(reference::library_total_dim(), 13984u);
  ASSERT_EQ(a.layout.blocks.size(), 9u);
  EXPECT_EQ(a.layout.total_dim(), 13984u);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(a.layout.blocks[i].name, reference::kLibraryBackbones[i].name);
    EXPECT_EQ(a.layout.blocks[i].offset, offset);
    offset += a.layout.blocks[i].length;
  }

  std::vector<std::size_t> rows{1};
  const auto X = gather_rows(a.library, rows, std::vector<std::string>{"ResNet18"});
  EXPECT_EQ(X.cols(), 512);
  EXPECT_EQ(gather_rows(a.library, rows).cols(), 13984);
}

TEST(AssembleLibrary, SingleMemberLayout) {
  const auto a = assemble_library("toy", {make_set("r18", 512, labels_of({0, 0, 1}), 1)});
  EXPECT_EQ(a.library.total_dim(), 512u);
  ASSERT_EQ(a.layout.blocks.size(), 1u);
  EXPECT_EQ(a.layout.blocks[0].name, "r18");
  EXPECT_EQ(a.layout.blocks[0].offset, 0u);
  EXPECT_EQ(a.layout.blocks[0].length, 512u);
}

TEST(AssembleLibrary, ClassIndexPartitionsRows) {
  const auto a = assemble_library("toy", {make_set("e", 2, labels_of({3, 1, 3, 0, 1}), 1)});
  const auto& idx = a.library.class_index();
  EXPECT_EQ(a.library.class_ids(), (std::vector<ClassId>{0, 1, 3}));
  EXPECT_EQ(idx.at(3), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(idx.at(1), (std::vector<std::size_t>{1, 4}));
  EXPECT_EQ(idx.at(0), (std::vector<std::size_t>{3}));
}

TEST(AssembleLibrary, Errors) {
  std::vector<ClassId> hundred(100, 0);
  std::vector<ClassId> ninety_nine(99, 0);
  EXPECT_FSB_ERROR(assemble_library("t", {make_set("a", 2, labels_of(hundred), 1), make_set("b", 2, labels_of(ninety_nine), 2)}),
                   Errc::RowCountMismatch);
  EXPECT_FSB_ERROR(assemble_library("t", {make_set("a", 2, labels_of({0, 1}), 1), make_set("b", 2, labels_of({1, 0}), 2)}),
                   Errc::LabelOrderMismatch);
  auto l = labels_of({0, 1});
  EXPECT_FSB_ERROR(assemble_library("t", {make_set("a", 2, l, 1), make_set("a", 3, l, 2)}), Errc::DuplicateName);
  EXPECT_FSB_ERROR(assemble_library("t", {}), Errc::InvalidSpec);
}

TEST(GatherRows, Examples) {
  auto l = labels_of({0, 1, 1});
  const auto a = assemble_library("t", {make_set("a", 3, l, 1), make_set("b", 2, l, 2)});
  const auto& lib = a.library;

  std::vector<std::size_t> zero{0};
  const auto X = gather_rows(lib, zero);
  ASSERT_EQ(X.rows(), 1);
  ASSERT_EQ(X.cols(), 5);
  for (std::uint32_t c = 0; c < 3; ++c) EXPECT_EQ(X(0, c), lib.members()[0].at(0, c));
  for (std::uint32_t c = 0; c < 2; ++c) EXPECT_EQ(X(0, 3 + c), lib.members()[1].at(0, c));

  std::vector<std::size_t> dup{2, 2};
  const auto D = gather_rows(lib, dup);
  EXPECT_EQ(D.row(0), D.row(1));

  // Members come out in layout order whatever order they are named in.
  EXPECT_EQ(gather_rows(lib, zero, std::vector<std::string>{"b", "a"}), X);
}

TEST(GatherRows, Errors) {
  const auto a = assemble_library("t", {make_set("a", 3, labels_of({0, 1}), 1)});
  std::vector<std::size_t> bad{2};
  EXPECT_FSB_ERROR(gather_rows(a.library, bad), Errc::IndexOutOfRange);
  std::vector<std::size_t> ok{0};
  EXPECT_FSB_ERROR(gather_rows(a.library, ok, std::vector<std::string>{"zzz"}), Errc::UnknownMember);
  std::vector<std::size_t> member{3};
  EXPECT_FSB_ERROR(gather_rows(a.library, ok, member), Errc::UnknownMember);
}

TEST(AssembleLibrary, PermutedMembersGiveSameColumnMultiset) {
  auto l = labels_of({0, 1, 2, 0});
  std::vector<EmbeddingSet> sets{make_set("a", 3, l, 1), make_set("b", 5, l, 2), make_set("c", 2, l, 3)};
  const auto forward = assemble_library("t", sets);
  std::vector<EmbeddingSet> permuted{sets[2], sets[0], sets[1]};
  const auto shuffled = assemble_library("t", permuted);
  EXPECT_EQ(shuffled.layout.blocks[0].name, "c");
  EXPECT_EQ(shuffled.layout.blocks[0].length, 2u);
  EXPECT_EQ(shuffled.layout.blocks[1].offset, 2u);

  std::vector<std::size_t> rows{0, 1, 2, 3};
  const auto A = gather_rows(forward.library, rows);
  const auto B = gather_rows(shuffled.library, rows);
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    std::vector<double> x(A.row(r).begin(), A.row(r).end());
    std::vector<double> y(B.row(r).begin(), B.row(r).end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    EXPECT_EQ(x, y);
  }
  // Undoing the block permutation recovers the original matrix exactly.
  Eigen::MatrixXd undone(B.rows(), B.cols());
  undone << B.middleCols(2, 3), B.middleCols(5, 5), B.middleCols(0, 2);
  EXPECT_EQ(undone, A);
}
