#pragma once

// Ways of turning a feature library into a few-shot learner: one head on a
// single extractor, one head per extractor combined by hard or soft voting,
// or one head on the concatenation of every extractor.

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fsb/classifier.hpp"
#include "fsb/episodes.hpp"
#include "fsb/error.hpp"
#include "fsb/feature_store.hpp"
#include "fsb/rng.hpp"

namespace fsb {

enum class MethodKind { Single, HardEnsemble, SoftEnsemble, FullLibrary };

struct MethodSpec {
  MethodKind kind = MethodKind::FullLibrary;
  /// Member names. Empty for ensembles and full_library means "every member".
  std::vector<std::string> members;
  /// Soft ensemble only: average pre-softmax logits instead of probabilities.
  bool average_logits = false;

  static MethodSpec single(std::string member) { return {MethodKind::Single, {std::move(member)}, false}; }
  static MethodSpec hard(std::vector<std::string> members = {}) {
    return {MethodKind::HardEnsemble, std::move(members), false};
  }
  static MethodSpec soft(std::vector<std::string> members = {}, bool average_logits = false) {
    return {MethodKind::SoftEnsemble, std::move(members), average_logits};
  }
  static MethodSpec full_library(std::vector<std::string> members = {}) {
    return {MethodKind::FullLibrary, std::move(members), false};
  }

  /// Accepts "full_library", "hard", "soft", "hard_ensemble", "soft_ensemble",
  /// "single:<name>", and optionally ":<a>,<b>,..." member lists after the
  /// ensemble and full_library forms.
  static MethodSpec parse(std::string_view text) {
    const auto colon = text.find(':');
    const auto head = text.substr(0, colon);
    std::vector<std::string> members;
    if (colon != std::string_view::npos) {
      auto rest = text.substr(colon + 1);
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        members.emplace_back(rest.substr(0, comma));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      if (members.empty() || std::any_of(members.begin(), members.end(), [](auto& s) { return s.empty(); })) {
        fail(Errc::InvalidMethod, "empty member name in '" + std::string(text) + "'");
      }
    }
    MethodSpec spec;
    if (head == "single") {
      if (members.size() != 1) fail(Errc::InvalidMethod, "single:<name> takes exactly one member");
      spec = single(members.front());
    } else if (head == "hard" || head == "hard_ensemble") {
      spec = hard(members);
    } else if (head == "soft" || head == "soft_ensemble") {
      spec = soft(members);
    } else if (head == "soft_logits" || head == "soft_ensemble_logits") {
      spec = soft(members, true);
    } else if (head == "full_library") {
      spec = full_library(members);
    } else {
      fail(Errc::InvalidMethod, "unknown method '" + std::string(text) + "'");
    }
    if (spec.kind != MethodKind::Single && spec.kind != MethodKind::FullLibrary && !spec.members.empty() &&
        spec.members.size() < 2) {
      fail(Errc::InvalidMethod, "an ensemble needs at least two members");
    }
    return spec;
  }

  std::string name() const {
    std::string base;
    switch (kind) {
      case MethodKind::Single: return "single:" + members.front();
      case MethodKind::HardEnsemble: base = "hard_ensemble"; break;
      case MethodKind::SoftEnsemble: base = average_logits ? "soft_ensemble_logits" : "soft_ensemble"; break;
      case MethodKind::FullLibrary: base = "full_library"; break;
    }
    for (std::size_t i = 0; i < members.size(); ++i) base += (i == 0 ? ":" : ",") + members[i];
    return base;
  }

  /// Member indices in `lib`, in the order the method names them.
  std::vector<std::size_t> resolve(const FeatureLibrary& lib) const {
    std::vector<std::size_t> idx;
    if (members.empty()) {
      if (kind == MethodKind::Single) fail(Errc::InvalidMethod, "single needs a member name");
      idx = lib.all_members();
    } else {
      for (const auto& n : members) idx.push_back(lib.member_index(n));
    }
    const bool ensemble = kind == MethodKind::HardEnsemble || kind == MethodKind::SoftEnsemble;
    if (ensemble && idx.size() < 2) {
      fail(Errc::InvalidMethod, name() + " needs at least two members, library " + lib.dataset_name() +
                                    " provides " + std::to_string(idx.size()));
    }
    if (kind == MethodKind::Single && idx.size() != 1) fail(Errc::InvalidMethod, "single takes one member");
    return idx;
  }
};

/// Majority vote per query over [models][queries] label rows; ties go to the
/// smallest label.
inline std::vector<int> hard_vote(const std::vector<std::vector<int>>& predictions) {
  if (predictions.empty()) fail(Errc::ShapeMismatch, "hard_vote needs at least one model");
  const auto queries = predictions.front().size();
  int max_label = 0;
  for (const auto& row : predictions) {
    if (row.size() != queries) fail(Errc::ShapeMismatch, "models disagree on the number of queries");
    for (int l : row) {
      if (l < 0) fail(Errc::LabelOutOfRange, "negative label " + std::to_string(l));
      max_label = std::max(max_label, l);
    }
  }
  std::vector<int> out(queries);
  std::vector<int> votes(static_cast<std::size_t>(max_label) + 1);
  for (std::size_t q = 0; q < queries; ++q) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const auto& row : predictions) ++votes[static_cast<std::size_t>(row[q])];
    out[q] = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

namespace detail {

inline void check_same_shape(const std::vector<Eigen::MatrixXd>& mats) {
  if (mats.empty()) fail(Errc::ShapeMismatch, "need at least one model");
  for (const auto& p : mats) {
    if (p.rows() != mats.front().rows() || p.cols() != mats.front().cols()) {
      fail(Errc::ShapeMismatch, "models disagree on [queries x ways]");
    }
  }
}

inline Eigen::MatrixXd mean_of(const std::vector<Eigen::MatrixXd>& mats) {
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(mats.front().rows(), mats.front().cols());
  for (const auto& p : mats) sum += p;
  return sum / static_cast<double>(mats.size());
}

}  // namespace detail

/// Argmax of the unweighted mean probability vector per query, over
/// [models] matrices of shape [queries x ways].
inline std::vector<int> soft_vote(const std::vector<Eigen::MatrixXd>& probabilities, double tolerance = 1e-6) {
  detail::check_same_shape(probabilities);
  for (std::size_t k = 0; k < probabilities.size(); ++k) {
    const auto& p = probabilities[k];
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      if ((p.row(r).array() < 0.0).any() || !p.row(r).allFinite() || std::abs(p.row(r).sum() - 1.0) > tolerance) {
        fail(Errc::NotAProbability, "model " + std::to_string(k) + ", query " + std::to_string(r) +
                                        " is not a probability vector");
      }
    }
  }
  return argmax_rows(detail::mean_of(probabilities));
}

/// Argmax of the mean logit vector per query (ablation of soft_vote).
inline std::vector<int> logit_vote(const std::vector<Eigen::MatrixXd>& logits) {
  detail::check_same_shape(logits);
  return argmax_rows(detail::mean_of(logits));
}

// ---------------------------------------------------------------------------

struct EpisodeOutcome {
  std::vector<int> predicted;
  std::vector<int> truth;
  double accuracy = 0.0;
};

/// Seed used to initialize every head trained for an episode. All members of
/// an ensemble share it, so identical members yield identical heads.
inline std::uint64_t training_seed(const Episode& episode, const TrainConfig& config) {
  return mix_seed(episode.seed, config.seed);
}

inline EpisodeOutcome run_method(const FeatureLibrary& lib, const Episode& episode, const MethodSpec& method,
                                 const TrainConfig& config) {
  const auto members = method.resolve(lib);
  const auto y_support = episode.support_labels();
  EpisodeOutcome out;
  out.truth = episode.query_labels();

  TrainConfig cfg = config;
  cfg.seed = training_seed(episode, config);

  auto fit = [&](std::span<const std::size_t> cols) {
    const auto Xs = gather_rows(lib, episode.support_rows, cols);
    const auto Xq = gather_rows(lib, episode.query_rows, cols);
    auto model = train_head(Xs, y_support, episode.ways(), cfg).model;
    return predict_logits(model, Xq);
  };

  switch (method.kind) {
    case MethodKind::Single:
    case MethodKind::FullLibrary:
      out.predicted = argmax_rows(fit(members));
      break;
    case MethodKind::HardEnsemble: {
      std::vector<std::vector<int>> votes;
      for (auto m : members) votes.push_back(argmax_rows(fit(std::span(&m, 1))));
      out.predicted = hard_vote(votes);
      break;
    }
    case MethodKind::SoftEnsemble: {
      std::vector<Eigen::MatrixXd> scores;
      for (auto m : members) {
        auto z = fit(std::span(&m, 1));
        if (!method.average_logits) detail::softmax_rows_inplace(z);
        scores.push_back(std::move(z));
      }
      out.predicted = method.average_logits ? logit_vote(scores) : soft_vote(scores);
      break;
    }
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < out.truth.size(); ++i) correct += out.predicted[i] == out.truth[i];
  out.accuracy = out.truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(out.truth.size());
  return out;
}

/// Query accuracy of `method` on one episode.
inline double evaluate_method(const FeatureLibrary& lib, const Episode& episode, const MethodSpec& method,
                              const TrainConfig& config) {
  return run_method(lib, episode, method, config).accuracy;
}

}  // namespace fsb
