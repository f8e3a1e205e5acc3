#pragma once

#include <span>
#include <string>
#include <vector>

#include "ctxattack/corpus.hpp"
#include "ctxattack/planner.hpp"
#include "ctxattack/pspm.hpp"
#include "ctxattack/rng.hpp"
#include "ctxattack/square_matrix.hpp"

namespace ctxattack {

// Ground-truth response of one simulated victim detector: probs(a,b) is
// the chance a perturbation of an `a` object toward label `b` lands.
// Failed perturbations can vanish the object or mislabel it instead of
// leaving it untouched. vanish_prob + mislabel_prob <= 1.
struct TrueSuccessModel {
  std::string model_id;
  SquareMatrix<double> probs;
  double vanish_prob = 0.05;
  double mislabel_prob = 0.05;
  double transfer_coeff = 1.0;

  int n() const { return probs.n(); }
};

// {"model_id": "...", "probs": [[...]], "vanish_prob": p, "mislabel_prob": q}
void save_model(const std::string& path, const TrueSuccessModel& model);
TrueSuccessModel load_model(const std::string& path);

struct DetectionOutcome {
  bool detected = true;
  int label = -1;  // meaningful only when detected

  static DetectionOutcome vanished() { return {false, -1}; }
  static DetectionOutcome as(int label) { return {true, label}; }

  bool operator==(const DetectionOutcome&) const = default;
};

struct PerturbedDetection {
  std::vector<DetectionOutcome> outcomes;  // one per scene object
};

// Runs a plan against a victim model. Unchanged objects pass through with
// their original label. A perturbed object succeeds with probs(a,b); on
// failure a second draw picks Vanished (vanish_prob), a detected label
// outside {a,b} (mislabel_prob), else the original label.
PerturbedDetection oracle_execute(const AttackPlan& plan, const Scene& scene,
                                  const TrueSuccessModel& model, Rng& rng);

struct BlackboxOptions {
  double noise_amplitude = 0.05;
  double vanish_increase = 0.05;
};

// Weaker-transfer variant: probs scaled by tau with bounded uniform noise,
// clamped to [0,1]; vanish_prob raised by vanish_increase.
TrueSuccessModel derive_blackbox(const TrueSuccessModel& model, double tau, Rng& rng,
                                 const BlackboxOptions& opts = {},
                                 const std::string& model_id = "");

// Softmax classifier over flat inputs in [0,255]^d; with hidden_dim > 0 a
// ReLU layer sits in front. Weights are set so that anchor(i) scores
// highest for class i, giving each class a canonical clean input.
class ToyClassifier {
 public:
  int num_classes() const { return num_classes_; }
  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }

  std::span<const double> anchor(int cls) const;
  std::vector<double> logits(std::span<const double> x) const;
  int predict(std::span<const double> x) const;

  // Softmax cross-entropy toward y_target; gradient is with respect to x.
  double loss(std::span<const double> x, int y_target) const;
  std::vector<double> loss_gradient(std::span<const double> x, int y_target) const;

  friend ToyClassifier make_toy_classifier(int, const struct ToyModelConfig&,
                                           std::uint64_t);

 private:
  int num_classes_ = 0, input_dim_ = 0, hidden_dim_ = 0;
  std::vector<double> w1_, b1_;  // hidden x d when hidden_dim > 0, else N x d
  std::vector<double> w2_, b2_;  // N x hidden, unused when linear
  std::vector<double> anchors_;  // N x d
};

struct ToyModelConfig {
  int input_dim = 16;
  int hidden_dim = 0;  // 0 = linear
  double anchor_center = 128.0;
  double anchor_spread = 18.0;  // anchors drawn from center +- spread
  double logit_scale = 450.0;
};

ToyClassifier make_toy_classifier(int num_classes, const ToyModelConfig& cfg,
                                  std::uint64_t seed);
std::vector<ToyClassifier> make_toy_ensemble(int num_classes, const ToyModelConfig& cfg,
                                             std::uint64_t seed, int size);

struct PgdConfig {
  double epsilon = 10.0;  // max-norm budget, pixel units
  double step = 2.0;
  int max_iter = 50;
};

struct PgdResult {
  std::vector<double> x_adv;
  bool success = false;
  int iterations_used = 0;
};

// Targeted sign-gradient descent under the max-norm ball, every iterate
// re-clipped into [0,255]^d; stops as soon as argmax hits y_target.
PgdResult pgd_attack(const ToyClassifier& clf, std::span<const double> x,
                     int y_target, const PgdConfig& cfg);

// Success table for the ensemble: for every ordered pair (i,j), i != j,
// runs pgd_attack from jittered class-i anchors toward j, trials split
// round-robin across members, outcomes pooled into one estimate.
Pspm build_pspm_from_toy(const std::vector<ToyClassifier>& ensemble,
                         const LabelSet& labels, const PgdConfig& cfg,
                         int trials_per_pair, Rng& rng,
                         double anchor_jitter = 14.0,
                         const std::string& ensemble_id = "toy-linear-v1",
                         const std::string& algorithm_id = "pgd");

// Victim model matching a success table exactly; the diagonal is 1 since
// re-labeling an object as itself needs no perturbation at all.
TrueSuccessModel make_white_box(const Pspm& pspm, double vanish_prob = 0.05,
                                double mislabel_prob = 0.05,
                                const std::string& model_id = "wb");

}  // namespace ctxattack
