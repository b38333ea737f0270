#pragma once

#include <variant>

#include "rad/core.hpp"

namespace rad {

enum class Learner { LogisticRegression, LinearSVM, KernelSVM, NaiveBayes, Mlp };
enum class KernelKind { Linear, Polynomial, Rbf };
enum class Activation { Sigmoid, Relu };

struct KernelSpec {
  KernelKind kind = KernelKind::Linear;
  double coef = 1.0;   // polynomial offset c
  int degree = 2;      // polynomial degree d, >= 1
  double sigma = 1.0;  // RBF width, > 0
};

double kernel_value(const KernelSpec& k, const FeatureVector& a,
                    const FeatureVector& b);

/// What to train: the learner family plus its architecture knobs.
struct LearnerSpec {
  Learner kind = Learner::LogisticRegression;
  KernelSpec kernel{};                   // KernelSVM only
  std::vector<int> hidden{16, 16, 16};   // Mlp only
  Activation activation = Activation::Sigmoid;

  static LearnerSpec logistic_regression();
  static LearnerSpec linear_svm();
  static LearnerSpec kernel_svm(KernelSpec k);
  static LearnerSpec naive_bayes();
  static LearnerSpec mlp(std::vector<int> hidden, Activation act);
};

struct TrainConfig {
  double alpha = 0.0;   // regularization weight in sum-form risk
  int p_norm = 2;       // regularization norm, 1 or 2
  double eta0 = 0.1;    // initial learning rate
  double decay = 0.01;  // eta_t = eta0 / (1 + decay * t)
  int epochs = 20;      // 0 is allowed and leaves the zero model untouched
  int batch = 1;
  std::uint64_t seed = 1;
};

struct LinearParams {
  std::vector<double> w;
  double b = 0.0;
};

struct KernelSvmParams {
  std::vector<double> alpha;         // dual coefficients a_i >= 0
  std::vector<int> sv_y;             // support labels, +/-1
  std::vector<FeatureVector> sv_x;   // support vectors
};

struct NaiveBayesParams {
  // Bernoulli counts; log terms rebuilt from them (Laplace pseudo-count 1)
  long n_pos = 0, n_neg = 0;
  std::vector<long> ones_pos, ones_neg;
  double log_prior_odds = 0.0;
  std::vector<double> llr_one, llr_zero;  // log-odds contribution of x_j=1 / x_j=0
  void rebuild();
};

struct MlpParams {
  Activation activation = Activation::Sigmoid;
  // weights[l] is row-major (out rows, in cols); final layer is one linear output
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::vector<int> in_dims, out_dims;
};

struct Model {
  Learner tag = Learner::LogisticRegression;
  FeatureSpace space;
  LearnerSpec spec;
  std::variant<LinearParams, KernelSvmParams, NaiveBayesParams, MlpParams> params;

  /// Pre-sign decision value f(x); predictions are sign(f) with sign(0)=+1.
  double score(const FeatureVector& x) const;
  /// The score the evasion objective attacks. Sign-compatible with score();
  /// sigmoid-output learners (logistic regression, sigmoid MLP) expose
  /// sigmoid(raw) - 1/2 here so their gradients match the probability form.
  double attack_score(const FeatureVector& x) const;
  double attack_score_gradient(const FeatureVector& x, int j) const;
  int predict(const FeatureVector& x) const;
  /// ||beta||_p^p over the regularized parameters (biases excluded;
  /// NaiveBayes has none and contributes 0).
  double param_norm(int p) const;

  LossKind native_loss() const;
};

Model train(const LearnerSpec& spec, const Dataset& data, const TrainConfig& cfg);

/// One stochastic gradient step on the regularized per-instance loss.
/// NaiveBayes re-counts the instance instead of taking a gradient step.
Model train_online_step(const Model& m, const LabeledInstance& inst, double eta,
                        double alpha = 0.0, int p_norm = 2);

// free functions matching the operation surface
double score(const Model& m, const FeatureVector& x);
double score_gradient(const Model& m, const FeatureVector& x, int j);
int predict(const Model& m, const FeatureVector& x);

struct MulticlassModel {
  std::vector<int> labels;    // sorted
  std::vector<Model> models;  // one-vs-all, aligned with labels

  double score(const FeatureVector& x, int label) const;
  int predict(const FeatureVector& x) const;  // argmax, ties -> lowest label
  int label_index(int label) const;
};

MulticlassModel train_multiclass(const LearnerSpec& spec, const Dataset& data,
                                 const TrainConfig& cfg);
double multiclass_score(const MulticlassModel& ms, const FeatureVector& x,
                        int label);

// versioned JSON model documents; reals carry 17 significant digits and
// round-trip bit-exactly
std::string serialize_model(const Model& m);
Model deserialize_model(const std::string& text);
void save_model(const std::string& path, const Model& m);
Model load_model(const std::string& path);

const char* learner_name(Learner tag);
Learner learner_from_name(std::string_view name);
const char* activation_name(Activation a);
Activation activation_from_name(std::string_view name);
const char* kernel_name(KernelKind k);
KernelKind kernel_from_name(std::string_view name);

}  // namespace rad
