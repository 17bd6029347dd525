#pragma once

// Temporal glimpse features and a logistic proposal classifier.
//
// For each proposal the last n+1 fused maps are sampled around the proposal
// cell. Slot k (oldest first) reads a (2r+1)^2 patch with stride
// dilations[k], so older maps are looked at with a wider, coarser window and
// the current map with the densest one.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmct/error.hpp"
#include "dmct/fusion.hpp"
#include "dmct/proposal.hpp"

namespace dmct {

struct GlimpseConfig {
  int history = 4;  // n: previous maps used besides the current one
  int patch_radius = 3;
  std::vector<int> dilations{4, 3, 2, 2, 1};  // one per slot, oldest first

  void validate() const {
    if (history < 0) throw ConfigError("glimpse history must be non-negative");
    if (patch_radius < 0) throw ConfigError("glimpse patch radius must be non-negative");
    if (dilations.size() != static_cast<std::size_t>(history) + 1)
      throw ConfigError("glimpse needs one dilation per history slot (n+1)");
    for (std::size_t k = 0; k < dilations.size(); ++k) {
      if (dilations[k] < 1) throw ConfigError("glimpse dilations must be positive");
      if (k > 0 && dilations[k] > dilations[k - 1])
        throw ConfigError("glimpse dilations must not increase toward the present");
    }
    if (dilations.back() != 1) throw ConfigError("the newest glimpse slot must use dilation 1");
  }

  int slots() const { return history + 1; }
  int patch_side() const { return 2 * patch_radius + 1; }
  std::size_t feature_length(int channels = 1) const {
    return static_cast<std::size_t>(slots()) * channels * patch_side() * patch_side() + 1;
  }

  /// Default schedule for a given history: wide (n+1 .. ) decreasing to 1.
  static GlimpseConfig with_history(int n, int patch_radius = 3) {
    GlimpseConfig c;
    c.history = n;
    c.patch_radius = patch_radius;
    if (n == 4) return c;
    c.dilations.clear();
    for (int k = 0; k <= n; ++k) c.dilations.push_back(std::max(1, (n - k + 2) / 2));
    c.dilations.back() = 1;
    return c;
  }

  friend bool operator==(const GlimpseConfig&, const GlimpseConfig&) = default;
};

enum class FeatureSource { mean, stack };

inline const char* to_string(FeatureSource s) { return s == FeatureSource::mean ? "mean" : "stack"; }
inline FeatureSource feature_source_from_string(const std::string& s) {
  if (s == "mean" || s == "avg" || s == "average") return FeatureSource::mean;
  if (s == "stack") return FeatureSource::stack;
  throw ConfigError("unknown feature source '" + s + "'");
}

/// `history` ordered oldest to newest; short histories are padded at the front
/// by repeating the oldest map. The trailing feature is the proposal score.
inline std::vector<double> extract_features(const Proposal& p, std::span<const FusedMap* const> history,
                                            const GlimpseConfig& config, FeatureSource source = FeatureSource::mean) {
  if (history.empty()) throw ConfigError("glimpse needs at least one map");
  const int slots = config.slots();
  const int channels = source == FeatureSource::mean ? 1 : history.back()->channels();
  if (channels == 0) throw ConfigError("stacked glimpse features need stack-fused maps");
  const int missing = std::max(0, slots - static_cast<int>(history.size()));
  const std::size_t first = history.size() > static_cast<std::size_t>(slots) ? history.size() - slots : 0;

  std::vector<double> x;
  x.reserve(config.feature_length(channels));
  const int r = config.patch_radius;
  for (int k = 0; k < slots; ++k) {
    const FusedMap& m = *history[k < missing ? first : first + (k - missing)];
    const int d = config.dilations[k];
    for (int c = 0; c < channels; ++c) {
      const OccupancyMap& plane = source == FeatureSource::mean ? m.mean : m.stacked.at(c);
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) x.push_back(plane.at_or(p.row + d * dy, p.col + d * dx, 0.0f));
    }
  }
  x.push_back(p.score);
  return x;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct GlimpseClassifier {
  std::vector<double> weights;
  double bias = 0.0;
};

inline double score(const GlimpseClassifier& clf, std::span<const double> features) {
  if (features.size() != clf.weights.size()) throw ConfigError("feature length does not match the classifier");
  return sigmoid(std::inner_product(features.begin(), features.end(), clf.weights.begin(), clf.bias));
}

struct LabeledFeatures {
  std::vector<double> x;
  bool positive = false;
  int frame = 0;
};

/// Class-weighted logistic cross-entropy plus (l2/2)|w|^2 over a design
/// matrix. Parameters are laid out as (w_0 .. w_{D-1}, b).
class LogisticObjective {
 public:
  LogisticObjective(Eigen::MatrixXd X, Eigen::VectorXd y, Eigen::VectorXd sample_weights, double l2)
      : X_(std::move(X)), y_(std::move(y)), s_(std::move(sample_weights)), l2_(l2) {
    s_ /= s_.sum();
  }

  Eigen::Index dimension() const { return X_.cols() + 1; }

  double value(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd z = (X_ * theta.head(X_.cols())).array() + theta(X_.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      // log(1 + e^z) - y z, evaluated stably.
      const double softplus = z(i) > 0 ? z(i) + std::log1p(std::exp(-z(i))) : std::log1p(std::exp(z(i)));
      loss += s_(i) * (softplus - y_(i) * z(i));
    }
    return loss + 0.5 * l2_ * theta.head(X_.cols()).squaredNorm();
  }

  double value_and_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
    const Eigen::VectorXd z = (X_ * theta.head(X_.cols())).array() + theta(X_.cols());
    Eigen::VectorXd r(z.size());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double softplus = z(i) > 0 ? z(i) + std::log1p(std::exp(-z(i))) : std::log1p(std::exp(z(i)));
      loss += s_(i) * (softplus - y_(i) * z(i));
      r(i) = s_(i) * (sigmoid(z(i)) - y_(i));
    }
    grad.resize(dimension());
    grad.head(X_.cols()) = X_.transpose() * r + l2_ * theta.head(X_.cols());
    grad(X_.cols()) = r.sum();
    return loss + 0.5 * l2_ * theta.head(X_.cols()).squaredNorm();
  }

 private:
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  Eigen::VectorXd s_;
  double l2_;
};

struct TrainOptions {
  int epochs = 400;
  double learning_rate = 1.0;  // initial step; adapted by backtracking
  double l2 = 1e-3;
  bool standardize = true;     // fit on z-scored features, fold the scaling back into w and b
};

struct TrainResult {
  GlimpseClassifier classifier;
  std::vector<double> loss_history;  // objective after each epoch, non-increasing
};

/// Full-batch gradient descent with Armijo backtracking. Samples are weighted
/// by inverse class frequency.
inline TrainResult train_with_history(std::span<const LabeledFeatures> data, const TrainOptions& opt = {}) {
  if (data.empty()) throw RuntimeError("training set is empty");
  const std::size_t pos = std::count_if(data.begin(), data.end(), [](const auto& s) { return s.positive; });
  if (pos == 0 || pos == data.size()) throw RuntimeError("training set needs both classes");
  const auto D = static_cast<Eigen::Index>(data.front().x.size());
  const auto N = static_cast<Eigen::Index>(data.size());

  Eigen::MatrixXd X(N, D);
  Eigen::VectorXd y(N), s(N);
  const double w_pos = 0.5 / static_cast<double>(pos);
  const double w_neg = 0.5 / static_cast<double>(data.size() - pos);
  for (Eigen::Index i = 0; i < N; ++i) {
    if (static_cast<Eigen::Index>(data[i].x.size()) != D) throw ConfigError("training features differ in length");
    X.row(i) = Eigen::Map<const Eigen::RowVectorXd>(data[i].x.data(), D);
    y(i) = data[i].positive ? 1.0 : 0.0;
    s(i) = data[i].positive ? w_pos : w_neg;
  }
  Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(D);
  Eigen::RowVectorXd sd = Eigen::RowVectorXd::Ones(D);
  if (opt.standardize) {
    mu = X.colwise().mean();
    sd = ((X.rowwise() - mu).array().square().colwise().mean()).sqrt();
    for (Eigen::Index j = 0; j < D; ++j)
      if (!(sd(j) > 1e-12)) sd(j) = 1.0;
    X = (X.rowwise() - mu).array().rowwise() / sd.array();
  }

  const LogisticObjective objective(std::move(X), std::move(y), std::move(s), opt.l2);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(objective.dimension());
  Eigen::VectorXd grad;
  double step = opt.learning_rate;
  TrainResult out;
  double f = objective.value_and_gradient(theta, grad);
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const double g2 = grad.squaredNorm();
    if (g2 < 1e-20) {
      out.loss_history.push_back(f);
      continue;
    }
    double t = step;
    Eigen::VectorXd candidate;
    double fc = f;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
      candidate = theta - t * grad;
      fc = objective.value(candidate);
      if (fc <= f - 1e-4 * t * g2) {
        accepted = true;
        break;
      }
    }
    if (accepted) {
      theta = std::move(candidate);
      f = objective.value_and_gradient(theta, grad);
      step = std::min(2.0 * t, 1e4);
    }
    out.loss_history.push_back(f);
  }

  out.classifier.weights.resize(static_cast<std::size_t>(D));
  double bias = theta(D);
  for (Eigen::Index j = 0; j < D; ++j) {
    out.classifier.weights[j] = theta(j) / sd(j);
    bias -= theta(j) * mu(j) / sd(j);
  }
  out.classifier.bias = bias;
  return out;
}

inline GlimpseClassifier train(std::span<const LabeledFeatures> data, const TrainOptions& opt = {}) {
  return train_with_history(data, opt).classifier;
}

/// Classifier plus the feature layout it was trained on.
struct GlimpseModel {
  GlimpseConfig config;
  FeatureSource source = FeatureSource::mean;
  int channels = 1;
  GlimpseClassifier classifier;
  double threshold = 0.5;

  std::size_t feature_length() const { return config.feature_length(source == FeatureSource::mean ? 1 : channels); }
};

inline double accuracy(const GlimpseModel& model, std::span<const LabeledFeatures> data) {
  if (data.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& s : data) ok += ((score(model.classifier, s.x) >= model.threshold) == s.positive);
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

inline nlohmann::json model_to_json(const GlimpseModel& m) {
  return {{"config", {{"history", m.config.history}, {"patch_radius", m.config.patch_radius}, {"dilations", m.config.dilations}}},
          {"source", to_string(m.source)},
          {"channels", m.channels},
          {"threshold", m.threshold},
          {"feature_length", m.feature_length()},
          {"weights", m.classifier.weights},
          {"bias", m.classifier.bias}};
}

inline GlimpseModel model_from_json(const nlohmann::json& j) {
  GlimpseModel m;
  try {
    const auto& c = j.at("config");
    m.config.history = c.at("history").get<int>();
    m.config.patch_radius = c.at("patch_radius").get<int>();
    m.config.dilations = c.at("dilations").get<std::vector<int>>();
    m.config.validate();
    m.source = feature_source_from_string(j.at("source").get<std::string>());
    m.channels = j.value("channels", 1);
    m.threshold = j.value("threshold", 0.5);
    m.classifier.weights = j.at("weights").get<std::vector<double>>();
    m.classifier.bias = j.at("bias").get<double>();
    const auto stored = j.at("feature_length").get<std::size_t>();
    if (stored != m.feature_length() || m.classifier.weights.size() != stored)
      throw ConfigError("classifier feature length does not match its configuration");
    for (double w : m.classifier.weights)
      if (!std::isfinite(w)) throw ConfigError("classifier weights must be finite");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed classifier: ") + e.what());
  }
  return m;
}

inline void save_model(const GlimpseModel& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << model_to_json(m).dump(2) << '\n';
}

inline GlimpseModel load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

}  // namespace dmct
