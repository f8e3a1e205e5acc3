#include "ctxattack/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ctxattack {

using nlohmann::json;

void save_model(const std::string& path, const TrueSuccessModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  json probs = json::array();
  for (int i = 0; i < model.n(); ++i) {
    json row = json::array();
    for (int j = 0; j < model.n(); ++j) row.push_back(model.probs.at(i, j));
    probs.push_back(std::move(row));
  }
  json j = {{"model_id", model.model_id},
            {"probs", std::move(probs)},
            {"vanish_prob", model.vanish_prob},
            {"mislabel_prob", model.mislabel_prob}};
  if (model.transfer_coeff != 1.0) j["transfer_coeff"] = model.transfer_coeff;
  out << j.dump(2) << '\n';
}

TrueSuccessModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": JSON parse error: " + e.what());
  }
  TrueSuccessModel model;
  model.model_id = j.at("model_id").get<std::string>();
  const auto& rows = j.at("probs");
  const int n = static_cast<int>(rows.size());
  model.probs = SquareMatrix<double>(n);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i].size()) != n)
      throw std::runtime_error(path + ": probs matrix is not square");
    for (int k = 0; k < n; ++k) {
      const double p = rows[i][k].get<double>();
      if (p < 0 || p > 1) throw std::runtime_error(path + ": probability outside [0,1]");
      model.probs.at(i, k) = p;
    }
  }
  model.vanish_prob = j.value("vanish_prob", 0.05);
  model.mislabel_prob = j.value("mislabel_prob", 0.05);
  model.transfer_coeff = j.value("transfer_coeff", 1.0);
  if (model.vanish_prob < 0 || model.mislabel_prob < 0 ||
      model.vanish_prob + model.mislabel_prob > 1.0)
    throw std::runtime_error(path + ": vanish_prob + mislabel_prob must stay within [0,1]");
  return model;
}

PerturbedDetection oracle_execute(const AttackPlan& plan, const Scene& scene,
                                  const TrueSuccessModel& model, Rng& rng) {
  if (static_cast<int>(plan.directives.size()) != scene.size())
    throw std::invalid_argument("oracle_execute: plan does not match scene");
  const int n = model.n();

  PerturbedDetection det;
  det.outcomes.reserve(scene.objects.size());
  for (int i = 0; i < scene.size(); ++i) {
    const Directive& d = plan.directives[i];
    const int original = scene.objects[i].label;
    if (original < 0 || original >= n)
      throw std::out_of_range("oracle_execute: scene label out of range");
    if (!d.perturb) {
      det.outcomes.push_back(DetectionOutcome::as(original));
      continue;
    }
    if (d.target_label < 0 || d.target_label >= n)
      throw std::out_of_range("oracle_execute: directive label out of range");

    if (rng.uniform() < model.probs.at(original, d.target_label)) {
      det.outcomes.push_back(DetectionOutcome::as(d.target_label));
      continue;
    }
    const double v = rng.uniform();
    if (v < model.vanish_prob) {
      det.outcomes.push_back(DetectionOutcome::vanished());
    } else if (v < model.vanish_prob + model.mislabel_prob) {
      // stray label: neither the intended target nor the original, so the
      // empirical success rate stays exactly probs(a,b)
      int excluded = (original == d.target_label) ? 1 : 2;
      if (n <= excluded) {
        det.outcomes.push_back(DetectionOutcome::as(original));
      } else {
        int draw = static_cast<int>(rng.index(static_cast<std::size_t>(n - excluded)));
        const int lo = std::min(original, d.target_label);
        const int hi = std::max(original, d.target_label);
        if (draw >= lo) ++draw;
        if (excluded == 2 && draw >= hi) ++draw;
        det.outcomes.push_back(DetectionOutcome::as(draw));
      }
    } else {
      det.outcomes.push_back(DetectionOutcome::as(original));
    }
  }
  return det;
}

TrueSuccessModel derive_blackbox(const TrueSuccessModel& model, double tau, Rng& rng,
                                 const BlackboxOptions& opts,
                                 const std::string& model_id) {
  if (tau <= 0 || tau > 1)
    throw std::invalid_argument("derive_blackbox: tau must lie in (0, 1]");
  TrueSuccessModel bb = model;
  bb.model_id = model_id.empty() ? model.model_id + "-bb" : model_id;
  bb.transfer_coeff = tau;
  const int n = model.n();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double p = tau * model.probs.at(i, j);
      if (opts.noise_amplitude > 0)
        p += rng.uniform(-opts.noise_amplitude, opts.noise_amplitude);
      bb.probs.at(i, j) = std::clamp(p, 0.0, 1.0);
    }
  bb.vanish_prob = std::min(model.vanish_prob + opts.vanish_increase,
                            1.0 - model.mislabel_prob);
  return bb;
}

std::span<const double> ToyClassifier::anchor(int cls) const {
  if (cls < 0 || cls >= num_classes_)
    throw std::out_of_range("ToyClassifier: class index out of range");
  return {anchors_.data() + static_cast<std::size_t>(cls) * input_dim_,
          static_cast<std::size_t>(input_dim_)};
}

std::vector<double> ToyClassifier::logits(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != input_dim_)
    throw std::invalid_argument("ToyClassifier: input dimension mismatch");
  if (hidden_dim_ == 0) {
    std::vector<double> z(num_classes_);
    for (int i = 0; i < num_classes_; ++i) {
      double acc = b1_[i];
      const double* row = w1_.data() + static_cast<std::size_t>(i) * input_dim_;
      for (int j = 0; j < input_dim_; ++j) acc += row[j] * x[j];
      z[i] = acc;
    }
    return z;
  }
  std::vector<double> h(hidden_dim_);
  for (int i = 0; i < hidden_dim_; ++i) {
    double acc = b1_[i];
    const double* row = w1_.data() + static_cast<std::size_t>(i) * input_dim_;
    for (int j = 0; j < input_dim_; ++j) acc += row[j] * x[j];
    h[i] = acc > 0 ? acc : 0;
  }
  std::vector<double> z(num_classes_);
  for (int i = 0; i < num_classes_; ++i) {
    double acc = b2_[i];
    const double* row = w2_.data() + static_cast<std::size_t>(i) * hidden_dim_;
    for (int j = 0; j < hidden_dim_; ++j) acc += row[j] * h[j];
    z[i] = acc;
  }
  return z;
}

int ToyClassifier::predict(std::span<const double> x) const {
  const std::vector<double> z = logits(x);
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

namespace {

// softmax probabilities, computed stably in place
std::vector<double> softmax(std::vector<double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return z;
}

}  // namespace

double ToyClassifier::loss(std::span<const double> x, int y_target) const {
  if (y_target < 0 || y_target >= num_classes_)
    throw std::out_of_range("ToyClassifier: target class out of range");
  std::vector<double> z = logits(x);
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0;
  for (double v : z) sum += std::exp(v - zmax);
  return std::log(sum) + zmax - z[y_target];
}

std::vector<double> ToyClassifier::loss_gradient(std::span<const double> x,
                                                 int y_target) const {
  if (y_target < 0 || y_target >= num_classes_)
    throw std::out_of_range("ToyClassifier: target class out of range");
  std::vector<double> p = softmax(logits(x));
  p[y_target] -= 1.0;  // dL/dz

  std::vector<double> grad(input_dim_, 0.0);
  if (hidden_dim_ == 0) {
    for (int i = 0; i < num_classes_; ++i) {
      const double* row = w1_.data() + static_cast<std::size_t>(i) * input_dim_;
      for (int j = 0; j < input_dim_; ++j) grad[j] += p[i] * row[j];
    }
    return grad;
  }
  std::vector<double> dh(hidden_dim_, 0.0);
  for (int i = 0; i < num_classes_; ++i) {
    const double* row = w2_.data() + static_cast<std::size_t>(i) * hidden_dim_;
    for (int j = 0; j < hidden_dim_; ++j) dh[j] += p[i] * row[j];
  }
  for (int j = 0; j < hidden_dim_; ++j) {
    double acc = b1_[j];
    const double* row = w1_.data() + static_cast<std::size_t>(j) * input_dim_;
    for (int k = 0; k < input_dim_; ++k) acc += row[k] * x[k];
    if (acc <= 0) dh[j] = 0;  // ReLU gate
  }
  for (int j = 0; j < hidden_dim_; ++j) {
    const double* row = w1_.data() + static_cast<std::size_t>(j) * input_dim_;
    for (int k = 0; k < input_dim_; ++k) grad[k] += dh[j] * row[k];
  }
  return grad;
}

ToyClassifier make_toy_classifier(int num_classes, const ToyModelConfig& cfg,
                                  std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("make_toy_classifier: need >= 2 classes");
  if (cfg.input_dim < 1) throw std::invalid_argument("make_toy_classifier: bad input_dim");
  if (cfg.logit_scale <= 0)
    throw std::invalid_argument("make_toy_classifier: logit_scale must be positive");

  Rng rng(derive_seed(seed, {"toy-classifier"}));
  const int d = cfg.input_dim;

  for (int attempt = 0; attempt < 64; ++attempt) {
    ToyClassifier clf;
    clf.num_classes_ = num_classes;
    clf.input_dim_ = d;
    clf.hidden_dim_ = cfg.hidden_dim;

    clf.anchors_.resize(static_cast<std::size_t>(num_classes) * d);
    for (double& a : clf.anchors_) {
      a = std::clamp(cfg.anchor_center + rng.uniform(-cfg.anchor_spread, cfg.anchor_spread),
                     0.0, 255.0);
    }

    if (cfg.hidden_dim == 0) {
      // nearest-anchor as a linear head: w_i = a_i/s, b_i = -|a_i|^2/(2s),
      // so anchor i wins class i whenever anchors are distinct
      clf.w1_.resize(static_cast<std::size_t>(num_classes) * d);
      clf.b1_.resize(num_classes);
      for (int i = 0; i < num_classes; ++i) {
        double sq = 0;
        for (int j = 0; j < d; ++j) {
          const double a = clf.anchors_[static_cast<std::size_t>(i) * d + j];
          clf.w1_[static_cast<std::size_t>(i) * d + j] = a / cfg.logit_scale;
          sq += a * a;
        }
        clf.b1_[i] = -sq / (2.0 * cfg.logit_scale);
      }
    } else {
      const int h = cfg.hidden_dim;
      clf.w1_.resize(static_cast<std::size_t>(h) * d);
      clf.b1_.resize(h);
      const double w_scale = 1.0 / std::sqrt(static_cast<double>(d));
      for (double& w : clf.w1_) w = rng.uniform(-w_scale, w_scale);
      for (double& b : clf.b1_) b = rng.uniform(-8.0, 8.0);

      // nearest-anchor in feature space
      std::vector<double> feats(static_cast<std::size_t>(num_classes) * h);
      double mean_sq = 0;
      for (int i = 0; i < num_classes; ++i) {
        for (int j = 0; j < h; ++j) {
          double acc = clf.b1_[j];
          const double* row = clf.w1_.data() + static_cast<std::size_t>(j) * d;
          for (int k = 0; k < d; ++k)
            acc += row[k] * clf.anchors_[static_cast<std::size_t>(i) * d + k];
          feats[static_cast<std::size_t>(i) * h + j] = acc > 0 ? acc : 0;
        }
        for (int j = 0; j < h; ++j) {
          const double f = feats[static_cast<std::size_t>(i) * h + j];
          mean_sq += f * f;
        }
      }
      mean_sq /= num_classes;
      const double s2 = std::max(mean_sq / 8.0, 1e-9);
      clf.w2_.resize(static_cast<std::size_t>(num_classes) * h);
      clf.b2_.resize(num_classes);
      for (int i = 0; i < num_classes; ++i) {
        double sq = 0;
        for (int j = 0; j < h; ++j) {
          const double f = feats[static_cast<std::size_t>(i) * h + j];
          clf.w2_[static_cast<std::size_t>(i) * h + j] = f / s2;
          sq += f * f;
        }
        clf.b2_[i] = -sq / (2.0 * s2);
      }
    }

    bool anchors_ok = true;
    for (int i = 0; i < num_classes && anchors_ok; ++i)
      anchors_ok = clf.predict(clf.anchor(i)) == i;
    if (anchors_ok) return clf;
  }
  throw std::runtime_error("make_toy_classifier: could not place anchors after 64 tries");
}

std::vector<ToyClassifier> make_toy_ensemble(int num_classes, const ToyModelConfig& cfg,
                                             std::uint64_t seed, int size) {
  if (size < 1) throw std::invalid_argument("make_toy_ensemble: need >= 1 member");
  std::vector<ToyClassifier> ensemble;
  ensemble.reserve(size);
  for (int m = 0; m < size; ++m)
    ensemble.push_back(
        make_toy_classifier(num_classes, cfg, derive_seed(seed, {"member", std::to_string(m)})));
  return ensemble;
}

PgdResult pgd_attack(const ToyClassifier& clf, std::span<const double> x, int y_target,
                     const PgdConfig& cfg) {
  if (cfg.epsilon < 0) throw std::invalid_argument("pgd_attack: negative epsilon");
  if (cfg.max_iter < 0) throw std::invalid_argument("pgd_attack: negative max_iter");
  const int d = clf.input_dim();
  if (static_cast<int>(x.size()) != d)
    throw std::invalid_argument("pgd_attack: input dimension mismatch");
  for (double v : x)
    if (v < 0 || v > 255)
      throw std::invalid_argument("pgd_attack: clean input outside [0,255]");

  std::vector<double> delta(d, 0.0);
  std::vector<double> x_adv(x.begin(), x.end());

  PgdResult result;
  if (clf.predict(x_adv) == y_target) {
    result.x_adv = std::move(x_adv);
    result.success = true;
    result.iterations_used = 0;
    return result;
  }

  for (int it = 0; it < cfg.max_iter; ++it) {
    const std::vector<double> grad = clf.loss_gradient(x_adv, y_target);
    for (int j = 0; j < d; ++j) {
      const double g = grad[j];
      const double step = (g > 0) - (g < 0);
      double v = delta[j] - cfg.step * step;
      v = std::clamp(v, -cfg.epsilon, cfg.epsilon);
      v = std::clamp(v, -x[j], 255.0 - x[j]);  // keep x + delta inside [0,255]
      delta[j] = v;
      x_adv[j] = x[j] + v;
    }
    result.iterations_used = it + 1;
    if (clf.predict(x_adv) == y_target) {
      result.success = true;
      break;
    }
  }
  result.x_adv = std::move(x_adv);
  return result;
}

Pspm build_pspm_from_toy(const std::vector<ToyClassifier>& ensemble,
                         const LabelSet& labels, const PgdConfig& cfg,
                         int trials_per_pair, Rng& rng, double anchor_jitter,
                         const std::string& ensemble_id,
                         const std::string& algorithm_id) {
  if (ensemble.empty())
    throw std::invalid_argument("build_pspm_from_toy: empty ensemble");
  if (trials_per_pair < 1)
    throw std::invalid_argument("build_pspm_from_toy: need >= 1 trial per pair");
  const int n = labels.size();
  for (const ToyClassifier& clf : ensemble)
    if (clf.num_classes() != n)
      throw std::invalid_argument("build_pspm_from_toy: ensemble class count != labels");

  TrialLog log;
  log.records.reserve(static_cast<std::size_t>(n) * (n - 1) * trials_per_pair);
  std::vector<double> start(ensemble.front().input_dim());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      for (int t = 0; t < trials_per_pair; ++t) {
        const ToyClassifier& clf = ensemble[t % ensemble.size()];
        const auto anchor = clf.anchor(i);
        start.resize(anchor.size());
        for (std::size_t k = 0; k < anchor.size(); ++k)
          start[k] = std::clamp(anchor[k] + rng.uniform(-anchor_jitter, anchor_jitter),
                                0.0, 255.0);
        const PgdResult res = pgd_attack(clf, start, j, cfg);
        log.records.push_back({i, j, res.success});
      }
    }
  }
  return estimate_pspm(log, labels, ensemble_id, cfg.epsilon, algorithm_id);
}

TrueSuccessModel make_white_box(const Pspm& pspm, double vanish_prob,
                                double mislabel_prob, const std::string& model_id) {
  if (vanish_prob < 0 || mislabel_prob < 0 || vanish_prob + mislabel_prob > 1.0)
    throw std::invalid_argument("make_white_box: vanish + mislabel must stay within [0,1]");
  TrueSuccessModel model;
  model.model_id = model_id;
  model.probs = pspm.probs;
  for (int i = 0; i < model.n(); ++i) model.probs.at(i, i) = 1.0;
  model.vanish_prob = vanish_prob;
  model.mislabel_prob = mislabel_prob;
  model.transfer_coeff = 1.0;
  return model;
}

}  // namespace ctxattack
