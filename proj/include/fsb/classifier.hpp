#pragma once

// MLP head on frozen features: optional ReLU hidden layer, softmax output,
// mean cross-entropy plus lambda * (|W1|_F^2 + |W2|_F^2), trained full-batch
// with Adam. All arithmetic is double precision.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fsb/error.hpp"
#include "fsb/feature_store.hpp"
#include "fsb/rng.hpp"

namespace fsb {

struct TrainConfig {
  double learning_rate = 5e-4;
  std::size_t epochs = 100;
  std::size_t hidden_size = 0;  // 0 drops the hidden layer
  double l2_lambda = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      fail(Errc::InvalidConfig, "learning_rate must be positive");
    }
    if (epochs < 1) fail(Errc::InvalidConfig, "epochs must be >= 1");
    if (!(l2_lambda >= 0.0) || !std::isfinite(l2_lambda)) {
      fail(Errc::InvalidConfig, "l2_lambda must be non-negative");
    }
  }

  bool operator==(const TrainConfig&) const = default;
};

/// W1: hidden x input (empty without a hidden layer), W2: ways x (hidden or input).
struct HeadModel {
  Eigen::MatrixXd W1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd W2;
  Eigen::VectorXd b2;

  bool has_hidden() const { return W1.size() > 0; }
  std::size_t hidden_size() const { return static_cast<std::size_t>(W1.rows()); }
  std::size_t input_dim() const {
    return static_cast<std::size_t>(has_hidden() ? W1.cols() : W2.cols());
  }
  std::size_t ways() const { return static_cast<std::size_t>(W2.rows()); }

  static HeadModel zeros(std::size_t input_dim, std::size_t hidden, std::size_t ways) {
    HeadModel h;
    const auto in = static_cast<Eigen::Index>(input_dim);
    const auto hid = static_cast<Eigen::Index>(hidden);
    const auto m = static_cast<Eigen::Index>(ways);
    if (hidden > 0) {
      h.W1 = Eigen::MatrixXd::Zero(hid, in);
      h.b1 = Eigen::VectorXd::Zero(hid);
      h.W2 = Eigen::MatrixXd::Zero(m, hid);
    } else {
      h.W2 = Eigen::MatrixXd::Zero(m, in);
    }
    h.b2 = Eigen::VectorXd::Zero(m);
    return h;
  }

  /// Same shapes, all zero.
  HeadModel zeros_like() const {
    HeadModel h;
    h.W1 = Eigen::MatrixXd::Zero(W1.rows(), W1.cols());
    h.b1 = Eigen::VectorXd::Zero(b1.size());
    h.W2 = Eigen::MatrixXd::Zero(W2.rows(), W2.cols());
    h.b2 = Eigen::VectorXd::Zero(b2.size());
    return h;
  }

  double weight_sq_norm() const { return W1.squaredNorm() + W2.squaredNorm(); }

  bool all_finite() const {
    return W1.allFinite() && b1.allFinite() && W2.allFinite() && b2.allFinite();
  }
};

// ---------------------------------------------------------------------------

/// Numerically stable softmax (max subtracted before exponentiation).
inline std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) fail(Errc::EmptyInput, "softmax of an empty vector");
  for (double v : logits) {
    if (!std::isfinite(v)) fail(Errc::NonFiniteInput, "softmax input is not finite");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

namespace detail {

inline void softmax_rows_inplace(Eigen::MatrixXd& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

inline void check_input(const HeadModel& model, const Eigen::MatrixXd& X) {
  if (static_cast<std::size_t>(X.cols()) != model.input_dim()) {
    fail(Errc::ShapeMismatch, "input has " + std::to_string(X.cols()) + " columns, model expects " +
                                  std::to_string(model.input_dim()));
  }
}

struct Forward {
  Eigen::MatrixXd hidden_pre;  // N x hidden
  Eigen::MatrixXd hidden;      // N x hidden, after ReLU
  Eigen::MatrixXd logits;      // N x ways
};

inline Forward forward(const HeadModel& model, const Eigen::MatrixXd& X) {
  Forward f;
  if (model.has_hidden()) {
    f.hidden_pre = X * model.W1.transpose();
    f.hidden_pre.rowwise() += model.b1.transpose();
    f.hidden = f.hidden_pre.cwiseMax(0.0);
    f.logits = f.hidden * model.W2.transpose();
  } else {
    f.logits = X * model.W2.transpose();
  }
  f.logits.rowwise() += model.b2.transpose();
  return f;
}

}  // namespace detail

inline Eigen::MatrixXd predict_logits(const HeadModel& model, const Eigen::MatrixXd& X) {
  detail::check_input(model, X);
  return detail::forward(model, X).logits;
}

/// One probability row per query row.
inline Eigen::MatrixXd predict_proba(const HeadModel& model, const Eigen::MatrixXd& X) {
  auto z = predict_logits(model, X);
  detail::softmax_rows_inplace(z);
  return z;
}

/// Row-wise argmax; ties go to the smallest column.
inline std::vector<int> argmax_rows(const Eigen::MatrixXd& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
      if (scores(r, c) > scores(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

inline std::vector<int> predict_labels(const HeadModel& model, const Eigen::MatrixXd& X) {
  return argmax_rows(predict_proba(model, X));
}

struct LossAndGrad {
  double loss = 0.0;
  HeadModel grad;
};

/// Mean cross-entropy over rows plus lambda * sum of squared weights (biases
/// unpenalized), with exact gradients by backpropagation.
inline LossAndGrad loss_and_grad(const HeadModel& model, const Eigen::MatrixXd& X,
                                 std::span<const int> y, double lambda) {
  detail::check_input(model, X);
  if (static_cast<std::size_t>(X.rows()) != y.size()) {
    fail(Errc::ShapeMismatch, std::to_string(X.rows()) + " rows but " + std::to_string(y.size()) + " labels");
  }
  if (y.empty()) fail(Errc::EmptyInput, "no training rows");
  const auto m = static_cast<int>(model.ways());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= m) {
      fail(Errc::LabelOutOfRange, "label " + std::to_string(y[i]) + " at row " + std::to_string(i) +
                                      " outside [0, " + std::to_string(m) + ")");
    }
  }

  auto f = detail::forward(model, X);
  const auto n = static_cast<double>(y.size());

  // Cross-entropy via log-sum-exp; f.logits becomes softmax probabilities.
  double ce = 0.0;
  for (Eigen::Index r = 0; r < f.logits.rows(); ++r) {
    auto row = f.logits.row(r);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    ce += lse - row(y[static_cast<std::size_t>(r)]);
  }
  detail::softmax_rows_inplace(f.logits);

  LossAndGrad out;
  out.loss = ce / n + lambda * model.weight_sq_norm();

  Eigen::MatrixXd dz = f.logits;
  for (Eigen::Index r = 0; r < dz.rows(); ++r) dz(r, y[static_cast<std::size_t>(r)]) -= 1.0;
  dz /= n;

  auto& g = out.grad;
  g.b2 = dz.colwise().sum().transpose();
  if (model.has_hidden()) {
    g.W2 = dz.transpose() * f.hidden + 2.0 * lambda * model.W2;
    Eigen::MatrixXd dh = (dz * model.W2).cwiseProduct((f.hidden_pre.array() > 0.0).cast<double>().matrix());
    g.W1 = dh.transpose() * X + 2.0 * lambda * model.W1;
    g.b1 = dh.colwise().sum().transpose();
  } else {
    g.W2 = dz.transpose() * X + 2.0 * lambda * model.W2;
    g.W1.resize(0, 0);
    g.b1.resize(0);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct AdamState {
  HeadModel first_moment;
  HeadModel second_moment;

  static AdamState for_model(const HeadModel& model) {
    return {model.zeros_like(), model.zeros_like()};
  }
};

/// Bias-corrected Adam: w -= lr * m_hat / (sqrt(v_hat) + eps), step t >= 1.
inline void adam_step(HeadModel& model, AdamState& state, const HeadModel& grad, const TrainConfig& cfg,
                      std::size_t t) {
  if (t < 1) fail(Errc::InvalidConfig, "Adam step index starts at 1");
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));

  auto update = [&](auto& w, auto& m, auto& v, const auto& g) {
    if (w.rows() != g.rows() || w.cols() != g.cols()) {
      fail(Errc::ShapeMismatch, "gradient shape differs from parameter shape");
    }
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    w.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps);
  };
  update(model.W1, state.first_moment.W1, state.second_moment.W1, grad.W1);
  update(model.b1, state.first_moment.b1, state.second_moment.b1, grad.b1);
  update(model.W2, state.first_moment.W2, state.second_moment.W2, grad.W2);
  update(model.b2, state.first_moment.b2, state.second_moment.b2, grad.b2);
}

/// Glorot-uniform weights drawn row-major (W1 first, then W2) from
/// SplitMix64(seed); biases zero.
inline HeadModel init_head(std::size_t input_dim, std::size_t hidden, std::size_t ways, std::uint64_t seed) {
  auto h = HeadModel::zeros(input_dim, hidden, ways);
  SplitMix64 rng(seed);
  auto fill = [&rng](Eigen::MatrixXd& w) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
    }
  };
  if (hidden > 0) fill(h.W1);
  fill(h.W2);
  return h;
}

struct TrainResult {
  HeadModel model;
  std::vector<double> trace;  // loss at the start of each epoch
};

inline TrainResult train_head(const Eigen::MatrixXd& X, std::span<const int> y, std::size_t ways,
                              const TrainConfig& config) {
  config.validate();
  if (X.rows() == 0 || X.cols() == 0) fail(Errc::EmptyInput, "empty support matrix");
  if (ways < 1) fail(Errc::InvalidSpec, "ways must be positive");
  if (!X.allFinite()) fail(Errc::NonFiniteInput, "support matrix has non-finite entries");
  std::vector<bool> seen(ways, false);
  for (int label : y) {
    if (label >= 0 && static_cast<std::size_t>(label) < ways) seen[static_cast<std::size_t>(label)] = true;
  }
  for (std::size_t c = 0; c < ways; ++c) {
    if (!seen[c]) fail(Errc::DegenerateInput, "class " + std::to_string(c) + " has no support rows");
  }

  TrainResult result;
  result.model = init_head(static_cast<std::size_t>(X.cols()), config.hidden_size, ways, config.seed);
  auto state = AdamState::for_model(result.model);
  result.trace.reserve(config.epochs);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    auto lg = loss_and_grad(result.model, X, y, config.l2_lambda);
    result.trace.push_back(lg.loss);
    adam_step(result.model, state, lg.grad, config, epoch);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Head files: "FSHD" | u32 version = 1 | u32 input_dim | u32 hidden | u32 ways |
// f64 W1 (row-major), b1, W2 (row-major), b2; little-endian.

inline constexpr std::array<char, 4> kHeadMagic{'F', 'S', 'H', 'D'};
inline constexpr std::uint32_t kHeadVersion = 1;

inline std::string encode_head(const HeadModel& model) {
  std::string out(kHeadMagic.data(), kHeadMagic.size());
  detail::put_le<std::uint32_t>(out, kHeadVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.input_dim()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.hidden_size()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.ways()));
  auto put_matrix = [&out](const auto& w) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(w(r, c)));
      }
    }
  };
  put_matrix(model.W1);
  put_matrix(model.b1);
  put_matrix(model.W2);
  put_matrix(model.b2);
  return out;
}

inline HeadModel decode_head(std::string_view bytes) {
  constexpr std::size_t header = 4 + 4 * 4;
  if (bytes.size() < header) fail(Errc::TruncatedFile, "head file shorter than its header");
  if (bytes.substr(0, 4) != std::string_view(kHeadMagic.data(), 4)) fail(Errc::BadMagic, "not an FSHD file");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (detail::get_le<std::uint32_t>(p + 4) != kHeadVersion) {
    fail(Errc::VersionUnsupported, "head version " + std::to_string(detail::get_le<std::uint32_t>(p + 4)));
  }
  const auto input = detail::get_le<std::uint32_t>(p + 8);
  const auto hidden = detail::get_le<std::uint32_t>(p + 12);
  const auto ways = detail::get_le<std::uint32_t>(p + 16);
  auto model = HeadModel::zeros(input, hidden, ways);
  const std::size_t count = static_cast<std::size_t>(model.W1.size() + model.b1.size() + model.W2.size() + model.b2.size());
  if (bytes.size() < header + 8 * count) fail(Errc::TruncatedFile, "head payload truncated");
  if (bytes.size() > header + 8 * count) fail(Errc::TrailingData, "bytes after head payload");
  std::size_t off = header;
  auto get_matrix = [&](auto& w) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        w(r, c) = std::bit_cast<double>(detail::get_le<std::uint64_t>(p + off));
        off += 8;
      }
    }
  };
  get_matrix(model.W1);
  get_matrix(model.b1);
  get_matrix(model.W2);
  get_matrix(model.b2);
  if (!model.all_finite()) fail(Errc::NonFiniteValue, "head contains non-finite weights");
  return model;
}

inline void save_head(const std::filesystem::path& path, const HeadModel& model) {
  detail::write_file(path, encode_head(model));
}

inline HeadModel load_head(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_head(bytes);
}

}  // namespace fsb
