#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "fsb/fsb.hpp"

namespace fs = std::filesystem;
using namespace fsb;

namespace {

std::size_t default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  detail::write_file(p, text);
}

std::vector<std::size_t> parse_ways_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(detail::parse_number<std::size_t>(item));
  if (out.empty()) fail(Errc::InvalidSpec, "empty --ways list");
  return out;
}

/// Optional overrides of individual TrainConfig fields.
struct ConfigFlags {
  std::optional<double> learning_rate;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> hidden;
  std::optional<double> l2;
  std::optional<std::uint64_t> train_seed;

  void add(CLI::App* app) {
    app->add_option("--lr", learning_rate, "Adam learning rate");
    app->add_option("--epochs", epochs, "Full-batch training epochs");
    app->add_option("--hidden", hidden, "Hidden units (0 drops the hidden layer)");
    app->add_option("--l2", l2, "L2 penalty weight on W1 and W2");
    app->add_option("--train-seed", train_seed, "Seed mixed into every head initialization");
  }

  TrainConfig apply(TrainConfig c) const {
    if (learning_rate) c.learning_rate = *learning_rate;
    if (epochs) c.epochs = *epochs;
    if (hidden) c.hidden_size = *hidden;
    if (l2) c.l2_lambda = *l2;
    if (train_seed) c.seed = *train_seed;
    c.validate();
    return c;
  }
};

/// Profile file, then the published settings for the method, then the
/// built-in defaults; explicit flags override whichever was found.
TrainConfig resolve_config(const std::string& profile_path, const MethodSpec& method, std::size_t ways,
                           const ConfigFlags& flags) {
  TrainConfig base;
  if (!profile_path.empty()) {
    base = load_profile(profile_path).for_ways(ways);
  } else {
    const std::string key = method.kind == MethodKind::Single ? method.members.front()
                            : method.kind == MethodKind::FullLibrary ? "full_library"
                                                                      : "";
    try {
      if (!key.empty()) base = default_profile(key).for_ways(ways);
    } catch (const Error& e) {
      if (e.code() != Errc::UnknownMethod && e.code() != Errc::UnknownWays) throw;
    }
  }
  return flags.apply(base);
}

int cmd_validate(const std::string& manifest_path) {
  const auto manifest = load_manifest(manifest_path);
  const auto lib = load_library(manifest);
  const auto& idx = lib.library.class_index();
  std::size_t smallest = lib.library.rows();
  std::size_t largest = 0;
  for (const auto& [id, rows] : idx) {
    smallest = std::min(smallest, rows.size());
    largest = std::max(largest, rows.size());
  }
  std::printf("dataset     %s\n", lib.library.dataset_name().c_str());
  std::printf("rows        %llu\n", static_cast<unsigned long long>(lib.library.rows()));
  std::printf("classes     %zu (rows per class %zu..%zu)\n", idx.size(), smallest, largest);
  std::printf("extractors  %zu\n", lib.layout.blocks.size());
  for (const auto& b : lib.layout.blocks) {
    std::printf("  %-20s dim %6zu  columns [%zu, %zu)\n", b.name.c_str(), b.length, b.offset, b.offset + b.length);
  }
  std::printf("total_dim   %zu\n", lib.library.total_dim());
  std::printf("ok\n");
  return 0;
}

struct SampleArgs {
  std::string manifest;
  EpisodeSpec spec;
  std::string dump = "-";
};

int cmd_sample(const SampleArgs& a) {
  const auto lib = load_library(a.manifest);
  a.spec.validate();
  std::string out;
  for (std::size_t i = 0; i < a.spec.episodes; ++i) {
    out += to_json(sample_episode(lib.library, a.spec, i)).dump();
    out += '\n';
  }
  write_text(a.dump, out);
  return 0;
}

struct BenchArgs {
  std::string manifest;
  std::string method = "full_library";
  EpisodeSpec spec;
  std::string profile;
  std::string out = "-";
  std::string format = "csv";
  std::size_t workers = default_workers();
  ConfigFlags flags;
};

int cmd_bench(const BenchArgs& a) {
  const auto lib = load_library(a.manifest);
  const auto method = MethodSpec::parse(a.method);
  const auto config = resolve_config(a.profile, method, a.spec.ways, a.flags);
  const auto row = run_benchmark(lib.library, a.spec, method, config, a.workers);
  write_text(a.out, emit({{row}}, a.format == "markdown" ? ReportFormat::Markdown : ReportFormat::Csv));
  std::fprintf(stderr, "%s %s %zu-way %zu-shot: %s%% over %zu episodes\n", row.dataset.c_str(), row.method.c_str(),
               row.ways, row.shots, format_accuracy_cell(row.mean, row.ci95).c_str(), row.episodes);
  return 0;
}

struct TuneArgs {
  std::string validation;
  std::string method = "full_library";
  std::string ways = "5,20,40";
  std::size_t episodes = kDefaultEpisodes;
  std::size_t queries = kDefaultQueries;
  std::uint64_t seed = 0;
  std::string out = "profile.json";
  std::vector<std::string> test_datasets;
  std::size_t workers = default_workers();
  SearchGrid grid;
};

int cmd_tune(const TuneArgs& a) {
  const auto lib = load_library(a.validation);
  const auto method = MethodSpec::parse(a.method);
  SearchOptions opt;
  opt.episodes = a.episodes;
  opt.queries = a.queries;
  opt.seed = a.seed;
  opt.workers = a.workers;
  opt.test_datasets = a.test_datasets;
  TunedProfile profile;
  profile.method = method.name();
  for (auto ways : parse_ways_list(a.ways)) {
    const auto result = grid_search(lib.library, method, ways, a.grid, opt);
    const auto& best = result.best;
    double best_acc = 0.0;
    for (const auto& s : result.scores) {
      if (s.config == best) best_acc = s.mean_accuracy;
    }
    std::fprintf(stderr, "%zu-way: lr %s, epochs %zu, hidden %zu, l2 %s (1-shot validation accuracy %.4f)\n", ways,
                 format_double(best.learning_rate).c_str(), best.epochs, best.hidden_size,
                 format_double(best.l2_lambda).c_str(), best_acc);
    profile.by_ways[ways] = best;
  }
  write_text(a.out, to_json(profile).dump(2) + "\n");
  return 0;
}

struct AnalyzeArgs {
  std::string kind;
  std::vector<std::string> manifests;
  std::size_t ways = 40;
  std::size_t tasks = 100;
  std::uint64_t seed = 0;
  std::string out = "analysis";
  AnalysisConfig options;
};

std::string matrix_csv(const std::string& corner, const std::vector<std::string>& rows,
                       const std::vector<std::string>& cols, const Eigen::MatrixXd& m) {
  std::string out = detail::csv_field(corner);
  for (const auto& c : cols) out += ',' + detail::csv_field(c);
  out += '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += detail::csv_field(rows[i]);
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out += ',' + format_double(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    out += '\n';
  }
  return out;
}

int cmd_analyze(const AnalyzeArgs& a) {
  std::vector<AssembledLibrary> libs;
  for (const auto& m : a.manifests) libs.push_back(load_library(m));
  const fs::path dir(a.out);
  fs::create_directories(dir);

  if (a.kind == "correlation") {
    std::string csv = "dataset,task,ways,seed,pearson_r\n";
    for (const auto& l : libs) {
      const auto r = parallel_map(a.tasks, a.options.workers, [&](std::size_t t) {
        return correlation_experiment(l.library, a.ways, a.seed, t, a.options);
      });
      double mean = 0.0;
      for (std::size_t t = 0; t < r.size(); ++t) {
        csv += detail::csv_field(l.library.dataset_name()) + ',' + std::to_string(t) + ',' + std::to_string(a.ways) +
               ',' + std::to_string(a.seed) + ',' + format_double(r[t]) + '\n';
        mean += r[t] / static_cast<double>(r.size());
      }
      std::fprintf(stderr, "%s: mean r = %.3f over %zu tasks\n", l.library.dataset_name().c_str(), mean, r.size());
    }
    detail::write_file(dir / "correlation.csv", csv);
    return 0;
  }

  const auto h = cross_dataset_heatmaps(libs, a.ways, a.tasks, a.seed, a.options);
  if (a.kind == "jaccard") {
    detail::write_file(dir / "jaccard.csv", matrix_csv("dataset", h.datasets, h.datasets, h.jaccard));
  } else {
    detail::write_file(dir / "shares.csv", matrix_csv("dataset", h.datasets, h.extractors, h.shares));
  }
  return 0;
}

struct SynthArgs {
  SyntheticSpec spec;
  std::string dims = "64";
  std::string background = "noise";
  std::string out;
};

int cmd_synth(SynthArgs a) {
  a.spec.member_dims.clear();
  for (auto d : parse_ways_list(a.dims)) a.spec.member_dims.push_back(static_cast<std::uint32_t>(d));
  a.spec.background = a.background == "constant" ? Background::Constant : Background::Noise;
  std::printf("%s\n", write_synthetic_dataset(a.spec, a.out).string().c_str());
  return 0;
}

void add_episode_options(CLI::App* app, EpisodeSpec& spec, bool queries) {
  app->add_option("--ways", spec.ways, "Classes per episode")->capture_default_str();
  app->add_option("--shots", spec.shots, "Support rows per class")->capture_default_str();
  if (queries) app->add_option("--queries", spec.queries, "Query rows per class")->capture_default_str();
  app->add_option("--episodes", spec.episodes, "Number of episodes")->capture_default_str();
  app->add_option("--seed", spec.base_seed, "Base seed of the episode stream")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot benchmark harness over libraries of frozen feature extractors"};
  app.require_subcommand(1);

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a dataset manifest and its embedding files");
  validate->add_option("manifest", validate_path, "Manifest JSON")->required();

  SampleArgs sample;
  auto* sample_cmd = app.add_subcommand("sample", "Dump sampled episodes as JSON lines");
  sample_cmd->add_option("--manifest", sample.manifest, "Manifest JSON")->required();
  add_episode_options(sample_cmd, sample.spec, true);
  sample_cmd->add_option("--dump", sample.dump, "Output file ('-' for stdout)")->capture_default_str();

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Evaluate a method over episodes and report mean and 95% CI");
  bench_cmd->add_option("--manifest", bench.manifest, "Manifest JSON")->required();
  bench_cmd->add_option("--method", bench.method, "full_library | hard | soft | soft_logits | single:<name>")
      ->capture_default_str();
  add_episode_options(bench_cmd, bench.spec, true);
  bench_cmd->add_option("--profile", bench.profile, "Tuned profile JSON from 'fsb tune'");
  bench_cmd->add_option("--out", bench.out, "Report file ('-' for stdout)")->capture_default_str();
  bench_cmd->add_option("--format", bench.format, "csv or markdown")
      ->check(CLI::IsMember({"csv", "markdown"}))
      ->capture_default_str();
  bench_cmd->add_option("--workers", bench.workers, "Worker threads")->capture_default_str();
  bench.flags.add(bench_cmd);

  TuneArgs tune;
  auto* tune_cmd = app.add_subcommand("tune", "Grid-search training settings on a validation library");
  tune_cmd->add_option("--validation", tune.validation, "Validation manifest JSON")->required();
  tune_cmd->add_option("--method", tune.method, "Method to tune")->capture_default_str();
  tune_cmd->add_option("--ways", tune.ways, "Comma-separated way counts")->capture_default_str();
  tune_cmd->add_option("--episodes", tune.episodes, "1-shot episodes per grid point")->capture_default_str();
  tune_cmd->add_option("--queries", tune.queries, "Query rows per class")->capture_default_str();
  tune_cmd->add_option("--seed", tune.seed, "Episode seed")->capture_default_str();
  tune_cmd->add_option("--out", tune.out, "Profile JSON")->capture_default_str();
  tune_cmd->add_option("--test-datasets", tune.test_datasets, "Datasets the profile will be tested on")
      ->delimiter(',');
  tune_cmd->add_option("--workers", tune.workers, "Worker threads")->capture_default_str();
  tune_cmd->add_option("--grid-lr", tune.grid.learning_rates, "Learning rates")->delimiter(',');
  tune_cmd->add_option("--grid-epochs", tune.grid.epoch_counts, "Epoch counts")->delimiter(',');
  tune_cmd->add_option("--grid-hidden", tune.grid.hidden_sizes, "Hidden sizes (0 drops the layer)")->delimiter(',');
  tune_cmd->add_option("--grid-l2", tune.grid.l2_lambdas, "L2 penalty weights")->delimiter(',');

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Feature-importance analyses written as CSV");
  analyze_cmd->add_option("kind", analyze.kind, "correlation | jaccard | shares")
      ->required()
      ->check(CLI::IsMember({"correlation", "jaccard", "shares"}));
  analyze_cmd->add_option("--manifests", analyze.manifests, "Manifest JSON files")->required();
  analyze_cmd->add_option("--ways", analyze.ways, "Classes per task")->capture_default_str();
  analyze_cmd->add_option("--tasks", analyze.tasks, "Tasks per dataset")->capture_default_str();
  analyze_cmd->add_option("--seed", analyze.seed, "Task seed")->capture_default_str();
  analyze_cmd->add_option("--out", analyze.out, "Output directory")->capture_default_str();
  analyze_cmd->add_option("--lr", analyze.options.learning_rate, "Learning rate of the linear heads")
      ->capture_default_str();
  analyze_cmd->add_option("--epochs", analyze.options.epochs, "Training epochs")->capture_default_str();
  analyze_cmd->add_option("--shots", analyze.options.shots, "Support rows per class in jaccard/shares tasks")
      ->capture_default_str();
  analyze_cmd->add_option("--reserve", analyze.options.reserve, "Rows per class kept out of the full-data head")
      ->capture_default_str();
  analyze.options.workers = default_workers();
  analyze_cmd->add_option("--workers", analyze.options.workers, "Worker threads")->capture_default_str();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic Gaussian-cluster dataset");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--dataset", synth.spec.dataset, "Dataset name")->capture_default_str();
  synth_cmd->add_option("--classes", synth.spec.classes, "Classes")->capture_default_str();
  synth_cmd->add_option("--rows-per-class", synth.spec.rows_per_class, "Rows per class")->capture_default_str();
  synth_cmd->add_option("--dims", synth.dims, "Comma-separated member dims")->capture_default_str();
  synth_cmd->add_option("--separation", synth.spec.separation, "Class-mean distance in noise units")
      ->capture_default_str();
  synth_cmd->add_option("--noise", synth.spec.noise, "Noise standard deviation")->capture_default_str();
  synth_cmd->add_option("--signal-fraction", synth.spec.signal_fraction, "Fraction of columns carrying signal")
      ->capture_default_str();
  synth_cmd->add_option("--background", synth.background, "noise or constant")
      ->check(CLI::IsMember({"noise", "constant"}))
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.spec.seed, "Generator seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return cmd_validate(validate_path);
    if (*sample_cmd) return cmd_sample(sample);
    if (*bench_cmd) return cmd_bench(bench);
    if (*tune_cmd) return cmd_tune(tune);
    if (*analyze_cmd) return cmd_analyze(analyze);
    if (*synth_cmd) return cmd_synth(synth);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
