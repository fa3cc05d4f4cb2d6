#include "trustalign/reward/reward_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "trustalign/errors.hpp"
#include "trustalign/numerics/optim.hpp"

namespace trustalign::reward {

using numerics::Graph;
using numerics::Var;

RewardMode reward_mode_from_string(const std::string& name) {
  if (name == "regression") return RewardMode::regression;
  if (name == "classification") return RewardMode::classification;
  throw ValidationError("unknown reward mode '" + name + "'");
}

std::string to_string(RewardMode mode) { return mode == RewardMode::regression ? "regression" : "classification"; }

std::size_t RewardNetConfig::frozen_layers() const {
  return static_cast<std::size_t>(std::ceil(fix_rate * static_cast<double>(extractor_layers()) - 1e-9));
}

numerics::MlpSpec RewardNetConfig::extractor_spec() const {
  numerics::MlpSpec s;
  s.widths.push_back(input_channels() * height * width);
  for (auto h : hidden) s.widths.push_back(h);
  s.widths.push_back(feature_dim);
  s.hidden = numerics::Activation::tanh;
  s.output = numerics::Activation::tanh;
  return s;
}

numerics::MlpSpec RewardNetConfig::head_spec() const {
  numerics::MlpSpec s;
  s.widths = {feature_dim, mode == RewardMode::regression ? std::size_t{1} : bins};
  return s;
}

void RewardNetConfig::validate() const {
  require(fix_rate >= 0.0 && fix_rate <= 1.0, "fix_rate must lie in [0,1]");
  require(feature_dim >= 1, "feature_dim must be >= 1");
  require(bins >= 2, "classification needs >= 2 bins");
  require(lambda > 0.0, "lambda must be > 0");
  require(delta > 0.0 && delta <= 1.0, "delta must lie in (0,1]");
  require(batch_size >= 1, "batch_size must be >= 1");
}

nlohmann::json RewardNetConfig::to_json() const {
  nlohmann::json j = {{"height", height},
                      {"width", width},
                      {"hidden", hidden},
                      {"feature_dim", feature_dim},
                      {"fix_rate", fix_rate},
                      {"mode", to_string(mode)},
                      {"bins", bins},
                      {"gradient_stem", gradient_stem},
                      {"init_gain", init_gain},
                      {"lambda", lambda},
                      {"delta", delta},
                      {"norm_mode", to_string(norm_mode)},
                      {"iterations", iterations},
                      {"batch_size", batch_size},
                      {"learning_rate", learning_rate},
                      {"seed", seed}};
  if (b_override) j["b"] = *b_override;
  if (psi_norm_override) j["psi_norm"] = *psi_norm_override;
  return j;
}

RewardNetConfig RewardNetConfig::from_json(const nlohmann::json& j) {
  RewardNetConfig c;
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.hidden = j.value("hidden", c.hidden);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.fix_rate = j.value("fix_rate", c.fix_rate);
  c.mode = reward_mode_from_string(j.value("mode", to_string(c.mode)));
  c.bins = j.value("bins", c.bins);
  c.gradient_stem = j.value("gradient_stem", c.gradient_stem);
  c.init_gain = j.value("init_gain", c.init_gain);
  c.lambda = j.value("lambda", c.lambda);
  c.delta = j.value("delta", c.delta);
  c.norm_mode = norm_mode_from_string(j.value("norm_mode", to_string(c.norm_mode)));
  c.iterations = j.value("iterations", c.iterations);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  if (j.contains("b")) c.b_override = j.at("b").get<double>();
  if (j.contains("psi_norm")) c.psi_norm_override = j.at("psi_norm").get<double>();
  c.validate();
  return c;
}

RewardNet::RewardNet(RewardNetConfig config) : config_(std::move(config)) {
  config_.validate();
  params_ = numerics::init_mlp(config_.extractor_spec(), kExtractor, config_.seed, config_.init_gain);
  const auto head = numerics::init_mlp(config_.head_spec(), kHead, config_.seed ^ 0x68656164ULL);
  for (const auto& e : head.entries()) params_.add(e.name, e.value);
}

Tensor RewardNet::input_rows(const std::vector<const Tensor*>& images, const std::vector<const Mask*>& masks) const {
  require(images.size() == masks.size() && !images.empty(), "input_rows: images/masks mismatch");
  const std::size_t h = config_.height, w = config_.width, d = h * w;
  const std::size_t width = config_.input_channels() * d;
  Tensor rows({images.size(), width});
  for (std::size_t r = 0; r < images.size(); ++r) {
    const Tensor& x = *images[r];
    require(x.size() == d && masks[r]->size() == d,
            "reward net expects " + std::to_string(d) + " pixels, got " + std::to_string(x.size()));
    double* row = rows.data().data() + r * width;
    for (std::size_t i = 0; i < d; ++i) {
      row[i] = x[i] - 0.5;
      row[d + i] = masks[r]->known(i) ? 1.0 : -1.0;
    }
    if (!config_.gradient_stem) continue;
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t k = i * w + j;
        row[2 * d + k] = j + 1 < w ? std::abs(x[k + 1] - x[k]) : 0.0;
        row[3 * d + k] = i + 1 < h ? std::abs(x[k + w] - x[k]) : 0.0;
      }
    }
  }
  return rows;
}

Tensor RewardNet::features(const Tensor& rows) const {
  return numerics::forward_mlp(params_, rows, config_.extractor_spec(), kExtractor);
}

Eigen::VectorXd RewardNet::feature(const Tensor& image, const Mask& mask) const {
  const Tensor z = features(input_rows({&image}, {&mask}));
  return to_eigen_vector(z.values());
}

double RewardNet::reward(const Tensor& image, const Mask& mask) const {
  require(fitted_, "reward net head is not fitted");
  return ridge_.predict(feature(image, mask));
}

double RewardNet::confidence(const Tensor& image, const Mask& mask) const {
  require(fitted_, "reward net head is not fitted");
  return ridge_.confidence_norm(feature(image, mask), config_.norm_mode);
}

std::vector<double> RewardNet::native_scores(const Tensor& rows) const {
  const Tensor out = numerics::forward_mlp(params_, features(rows), config_.head_spec(), kHead);
  std::vector<double> scores(out.rows());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    if (config_.mode == RewardMode::regression) {
      scores[r] = out.at(r, 0);
      continue;
    }
    double top = out.at(r, 0);
    for (std::size_t k = 1; k < out.cols(); ++k) top = std::max(top, out.at(r, k));
    double total = 0.0, expect = 0.0;
    for (std::size_t k = 0; k < out.cols(); ++k) {
      const double p = std::exp(out.at(r, k) - top);
      total += p;
      expect += p * static_cast<double>(k + 1);
    }
    scores[r] = expect / total;
  }
  return scores;
}

void RewardNet::fit_head(const Tensor& rows, const std::vector<double>& targets) {
  require(rows.rows() == targets.size(), "fit_head: rows/targets mismatch");
  const Eigen::MatrixXd z = to_eigen(features(rows));
  const Eigen::VectorXd y = to_eigen_vector(targets);
  ridge_ = fit_ridge(z, y, config_.lambda);
  const Eigen::VectorXd resid = y - z * ridge_.psi_hat();
  const double mean = resid.mean();
  const double b = config_.b_override.value_or(
      std::sqrt((resid.array() - mean).square().sum() / static_cast<double>(resid.size())));
  const double psi_norm = config_.psi_norm_override.value_or(ridge_.psi_hat().norm());
  bound_ = bound_constant(ridge_, b, config_.delta, psi_norm);
  fitted_ = true;
}

numerics::Checkpoint RewardNet::to_checkpoint() const {
  require(fitted_, "reward net head is not fitted");
  numerics::Checkpoint ck;
  ck.tensors = params_;
  const std::size_t d = ridge_.dim();
  Tensor v({d, d}), psi({d});
  for (std::size_t r = 0; r < d; ++r) {
    psi[r] = ridge_.psi_hat()(static_cast<Eigen::Index>(r));
    for (std::size_t c = 0; c < d; ++c) v.at(r, c) = ridge_.v()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  ck.tensors.add("ridge.V", v, false);
  ck.tensors.add("ridge.psi", psi, false);
  ck.meta = {{"kind", "reward_net"},
             {"config", config_.to_json()},
             {"n_samples", ridge_.n_samples()},
             {"bound", {{"B", bound_.b}, {"delta", bound_.delta}, {"psi_norm", bound_.psi_norm}, {"c_bound", bound_.c_bound}}},
             {"norm_mode", to_string(config_.norm_mode)}};
  return ck;
}

RewardNet RewardNet::from_checkpoint(const numerics::Checkpoint& checkpoint) {
  require(checkpoint.meta.value("kind", "") == "reward_net", "checkpoint does not hold a reward net");
  RewardNet net(RewardNetConfig::from_json(checkpoint.meta.at("config")));
  for (auto& e : net.params_.entries()) {
    const Tensor& stored = checkpoint.tensors.get(e.name);
    require(stored.shape() == e.value.shape(), "reward net tensor '" + e.name + "' has the wrong shape");
    e.value = stored;
  }
  numerics::freeze_layers(net.params_, kExtractor, net.config_.frozen_layers());
  for (const auto& e : checkpoint.tensors.entries()) {
    if (!net.params_.contains(e.name) && e.name.rfind("ridge.", 0) != 0) {
      throw ValidationError("unexpected reward net tensor '" + e.name + "'");
    }
  }
  const Tensor& v = checkpoint.tensors.get("ridge.V");
  const Tensor& psi = checkpoint.tensors.get("ridge.psi");
  net.ridge_ = GramState(to_eigen(v), to_eigen_vector(psi.values()), net.config_.lambda,
                         checkpoint.meta.at("n_samples").get<std::size_t>());
  const auto& b = checkpoint.meta.at("bound");
  net.bound_ = bound_constant(net.ridge_, b.at("B").get<double>(), b.at("delta").get<double>(),
                              b.at("psi_norm").get<double>());
  net.fitted_ = true;
  return net;
}

namespace {

/// Mean softmax cross-entropy of n x K logits against integer labels.
Var cross_entropy(Graph& g, Var logits, const std::vector<std::size_t>& labels) {
  const Tensor& x = g.value(logits);
  const std::size_t n = x.rows(), k = x.cols();
  Tensor probs({n, k});
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double top = x.at(r, 0);
    for (std::size_t c = 1; c < k; ++c) top = std::max(top, x.at(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) total += std::exp(x.at(r, c) - top);
    const double log_total = std::log(total) + top;
    for (std::size_t c = 0; c < k; ++c) probs.at(r, c) = std::exp(x.at(r, c) - log_total);
    loss += log_total - x.at(r, labels[r]);
  }
  return g.record({logits}, Tensor::scalar(loss / static_cast<double>(n)),
                  [probs, labels, n, k](const numerics::BackwardContext& c) {
                    const double scale = c.out_grad.item() / static_cast<double>(n);
                    for (std::size_t r = 0; r < n; ++r) {
                      for (std::size_t j = 0; j < k; ++j) {
                        const double target = j == labels[r] ? 1.0 : 0.0;
                        (*c.grads[0])[r * k + j] += scale * (probs.at(r, j) - target);
                      }
                    }
                  });
}

std::size_t score_bin(double aggregate, std::size_t bins) {
  const double b = std::round(aggregate);
  return static_cast<std::size_t>(std::clamp(b, 1.0, static_cast<double>(bins))) - 1;
}

}  // namespace

Tensor record_rows(const RewardNet& net, const std::vector<dataset::AnnotationRecord>& data) {
  std::vector<const Tensor*> images;
  std::vector<const Mask*> masks;
  for (const auto& r : data) {
    images.push_back(&r.image);
    masks.push_back(&r.mask);
  }
  return net.input_rows(images, masks);
}

RewardNet train_extractor(const std::vector<dataset::AnnotationRecord>& data, const RewardNetConfig& config,
                          ExtractorReport* report) {
  require(!data.empty(), "train_extractor needs a nonempty dataset");
  RewardNet net(config);
  const std::size_t frozen = config.frozen_layers();
  numerics::freeze_layers(net.params(), RewardNet::kExtractor, frozen);

  const Tensor rows = record_rows(net, data);
  std::vector<double> targets;
  std::vector<std::size_t> labels;
  for (const auto& r : data) {
    targets.push_back(r.normalized);
    labels.push_back(score_bin(r.aggregate, config.bins));
  }

  std::mt19937_64 rng(config.seed ^ 0x7265776172ULL);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  numerics::Adam opt(config.learning_rate);
  const std::size_t width = rows.cols();
  const auto ext_spec = config.extractor_spec();
  const auto head_spec = config.head_spec();
  ExtractorReport local;
  local.frozen_layers = frozen;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    Tensor batch({config.batch_size, width});
    Tensor batch_targets({config.batch_size, 1});
    std::vector<std::size_t> batch_labels(config.batch_size);
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const std::size_t i = pick(rng);
      std::copy_n(rows.data().begin() + static_cast<long>(i * width), width,
                  batch.data().begin() + static_cast<long>(b * width));
      batch_targets[b] = targets[i];
      batch_labels[b] = labels[i];
    }
    Graph g;
    const auto vars = g.bind(net.params());
    const Var z = numerics::forward_mlp(g, vars, g.constant(batch), ext_spec, RewardNet::kExtractor);
    const Var out = numerics::forward_mlp(g, vars, z, head_spec, RewardNet::kHead);
    const Var loss = config.mode == RewardMode::regression
                         ? numerics::mean(g, numerics::square(g, numerics::sub(g, out, g.constant(batch_targets))))
                         : cross_entropy(g, out, batch_labels);
    const double value = g.value(loss).item();
    if (!std::isfinite(value)) throw NumericError("train_extractor: non-finite loss at iteration " + std::to_string(it));
    local.losses.push_back(value);
    opt.step(net.params(), g.backward(loss));
  }
  net.fit_head(rows, targets);
  if (report) *report = std::move(local);
  return net;
}

double ranking_accuracy(const std::vector<double>& predicted, const std::vector<double>& truth) {
  require(predicted.size() == truth.size(), "ranking_accuracy: size mismatch");
  double correct = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (std::size_t j = i + 1; j < truth.size(); ++j) {
      if (truth[i] == truth[j]) continue;
      ++pairs;
      const double dp = predicted[i] - predicted[j];
      if (dp == 0.0) correct += 0.5;
      else if ((dp > 0.0) == (truth[i] > truth[j])) correct += 1.0;
    }
  }
  return pairs ? correct / static_cast<double>(pairs) : 0.0;
}

RankingReport heldout_ranking(const RewardNet& net, const std::vector<dataset::AnnotationRecord>& heldout,
                              const dataset::NormalizationTable& table, dataset::NormalizationMode mode) {
  require(!heldout.empty(), "heldout_ranking needs records");
  const Tensor rows = record_rows(net, heldout);
  std::vector<double> native = net.native_scores(rows);
  std::vector<double> ridge, truth;
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    const auto& r = heldout[i];
    if (net.config().mode == RewardMode::classification) {
      native[i] = dataset::normalize_score(native[i], table, r.split_tag, mode);
    }
    ridge.push_back(net.reward(r.image, r.mask));
    truth.push_back(dataset::normalize_score(r.oracle_clean, table, r.split_tag, mode));
  }
  return {ranking_accuracy(native, truth), ranking_accuracy(ridge, truth)};
}

}  // namespace trustalign::reward
