#include "rad/learners.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace rad {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double dot(const std::vector<double>& a, const FeatureVector& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void require_binary_labels(const Dataset& data) {
  bool has_pos = false, has_neg = false;
  for (const auto& inst : data.instances) {
    if (inst.y == +1)
      has_pos = true;
    else if (inst.y == -1)
      has_neg = true;
    else
      throw UsageError("binary training requires labels in {-1,+1}");
  }
  if (!has_pos || !has_neg)
    throw UsageError("training set must contain both classes");
}

}  // namespace

double kernel_value(const KernelSpec& k, const FeatureVector& a,
                    const FeatureVector& b) {
  switch (k.kind) {
    case KernelKind::Linear: {
      double s = 0;
      for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
      return s;
    }
    case KernelKind::Polynomial: {
      double s = 0;
      for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
      return std::pow(k.coef + s, k.degree);
    }
    case KernelKind::Rbf: {
      double s = 0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
      }
      return std::exp(-s / (2.0 * k.sigma * k.sigma));
    }
  }
  throw ContractError("unknown kernel kind");
}

LearnerSpec LearnerSpec::logistic_regression() {
  LearnerSpec s;
  s.kind = Learner::LogisticRegression;
  return s;
}
LearnerSpec LearnerSpec::linear_svm() {
  LearnerSpec s;
  s.kind = Learner::LinearSVM;
  return s;
}
LearnerSpec LearnerSpec::kernel_svm(KernelSpec k) {
  LearnerSpec s;
  s.kind = Learner::KernelSVM;
  s.kernel = k;
  return s;
}
LearnerSpec LearnerSpec::naive_bayes() {
  LearnerSpec s;
  s.kind = Learner::NaiveBayes;
  return s;
}
LearnerSpec LearnerSpec::mlp(std::vector<int> hidden, Activation act) {
  LearnerSpec s;
  s.kind = Learner::Mlp;
  s.hidden = std::move(hidden);
  s.activation = act;
  return s;
}

void NaiveBayesParams::rebuild() {
  const std::size_t n = ones_pos.size();
  llr_one.assign(n, 0.0);
  llr_zero.assign(n, 0.0);
  if (n_pos <= 0 || n_neg <= 0)
    throw ContractError("naive bayes rebuild with an empty class");
  log_prior_odds = std::log(double(n_pos)) - std::log(double(n_neg));
  for (std::size_t j = 0; j < n; ++j) {
    const double tp = (ones_pos[j] + 1.0) / (n_pos + 2.0);
    const double tn = (ones_neg[j] + 1.0) / (n_neg + 2.0);
    llr_one[j] = std::log(tp) - std::log(tn);
    llr_zero[j] = std::log1p(-tp) - std::log1p(-tn);
  }
}

// ---------------------------------------------------------------------------
// MLP forward / backward
// ---------------------------------------------------------------------------

namespace {

double activate(Activation a, double z) {
  return a == Activation::Sigmoid ? sigmoid(z) : std::max(0.0, z);
}

// derivative through the activation given pre-activation z;
// ReLU takes subgradient 0 exactly at the kink
double activate_deriv(Activation a, double z) {
  if (a == Activation::Sigmoid) {
    const double s = sigmoid(z);
    return s * (1.0 - s);
  }
  return z > 0 ? 1.0 : 0.0;
}

struct MlpForward {
  std::vector<std::vector<double>> pre;   // z per layer
  std::vector<std::vector<double>> post;  // activations per layer (last = raw)
  double out = 0;
};

MlpForward mlp_forward(const MlpParams& p, const FeatureVector& x) {
  MlpForward f;
  const std::size_t layers = p.weights.size();
  f.pre.resize(layers);
  f.post.resize(layers);
  const std::vector<double>* in = nullptr;
  FeatureVector input = x;
  in = &input;
  for (std::size_t l = 0; l < layers; ++l) {
    const int rows = p.out_dims[l], cols = p.in_dims[l];
    f.pre[l].assign(rows, 0.0);
    for (int r = 0; r < rows; ++r) {
      double z = p.biases[l][r];
      const double* wrow = p.weights[l].data() + std::size_t(r) * cols;
      for (int c = 0; c < cols; ++c) z += wrow[c] * (*in)[c];
      f.pre[l][r] = z;
    }
    if (l + 1 < layers) {
      f.post[l].resize(rows);
      for (int r = 0; r < rows; ++r) f.post[l][r] = activate(p.activation, f.pre[l][r]);
      in = &f.post[l];
    } else {
      f.post[l] = f.pre[l];  // linear output unit
    }
  }
  f.out = f.pre.back()[0];
  return f;
}

// gradient of the raw output with respect to the input coordinate j
double mlp_input_gradient(const MlpParams& p, const MlpForward& f, int j) {
  const std::size_t layers = p.weights.size();
  // delta at the output layer
  std::vector<double> delta{1.0};
  for (std::size_t l = layers; l-- > 0;) {
    const int rows = p.out_dims[l], cols = p.in_dims[l];
    std::vector<double> next(cols, 0.0);
    for (int r = 0; r < rows; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      const double* wrow = p.weights[l].data() + std::size_t(r) * cols;
      for (int c = 0; c < cols; ++c) next[c] += d * wrow[c];
    }
    if (l == 0) return next[j];
    for (int c = 0; c < cols; ++c)
      next[c] *= activate_deriv(p.activation, f.pre[l - 1][c]);
    delta = std::move(next);
  }
  throw ContractError("mlp gradient: empty network");
}

}  // namespace

// ---------------------------------------------------------------------------
// Model surface
// ---------------------------------------------------------------------------

double Model::score(const FeatureVector& x) const {
  space.require_member(x, "score");
  switch (tag) {
    case Learner::LogisticRegression:
    case Learner::LinearSVM: {
      const auto& p = std::get<LinearParams>(params);
      return dot(p.w, x) + p.b;
    }
    case Learner::KernelSVM: {
      const auto& p = std::get<KernelSvmParams>(params);
      double s = 0;
      for (std::size_t i = 0; i < p.alpha.size(); ++i)
        s += p.alpha[i] * p.sv_y[i] * kernel_value(spec.kernel, p.sv_x[i], x);
      return s;
    }
    case Learner::NaiveBayes: {
      const auto& p = std::get<NaiveBayesParams>(params);
      double s = p.log_prior_odds;
      for (std::size_t j = 0; j < x.size(); ++j)
        s += x[j] == 1.0 ? p.llr_one[j] : p.llr_zero[j];
      return s;
    }
    case Learner::Mlp:
      return mlp_forward(std::get<MlpParams>(params), x).out;
  }
  throw ContractError("score: unknown learner");
}

double Model::attack_score(const FeatureVector& x) const {
  const double raw = score(x);
  if (tag == Learner::LogisticRegression ||
      (tag == Learner::Mlp && spec.activation == Activation::Sigmoid))
    return sigmoid(raw) - 0.5;
  return raw;
}

double Model::attack_score_gradient(const FeatureVector& x, int j) const {
  if (space.kind == SpaceKind::Binary)
    throw UsageError("score gradient unsupported on a binary space; use discrete search");
  if (tag == Learner::NaiveBayes)
    throw UsageError("naive bayes has no input gradient; use discrete search");
  space.require_member(x, "score_gradient");
  if (j < 0 || j >= space.dim)
    throw UsageError("score_gradient: coordinate out of range");
  switch (tag) {
    case Learner::LogisticRegression: {
      const auto& p = std::get<LinearParams>(params);
      const double z = dot(p.w, x) + p.b;
      const double s = sigmoid(z);
      return p.w[j] * s * (1.0 - s);
    }
    case Learner::LinearSVM:
      return std::get<LinearParams>(params).w[j];
    case Learner::KernelSVM: {
      const auto& p = std::get<KernelSvmParams>(params);
      const KernelSpec& k = spec.kernel;
      double g = 0;
      for (std::size_t i = 0; i < p.alpha.size(); ++i) {
        const double ay = p.alpha[i] * p.sv_y[i];
        if (ay == 0.0) continue;
        switch (k.kind) {
          case KernelKind::Linear:
            g += ay * p.sv_x[i][j];
            break;
          case KernelKind::Polynomial: {
            double d = 0;
            for (std::size_t c = 0; c < x.size(); ++c) d += p.sv_x[i][c] * x[c];
            g += ay * k.degree * std::pow(k.coef + d, k.degree - 1) * p.sv_x[i][j];
            break;
          }
          case KernelKind::Rbf: {
            const double kv = kernel_value(k, p.sv_x[i], x);
            g += ay * kv * (p.sv_x[i][j] - x[j]) / (k.sigma * k.sigma);
            break;
          }
        }
      }
      return g;
    }
    case Learner::Mlp: {
      const auto& p = std::get<MlpParams>(params);
      const MlpForward f = mlp_forward(p, x);
      double g = mlp_input_gradient(p, f, j);
      if (spec.activation == Activation::Sigmoid) {
        const double s = sigmoid(f.out);
        g *= s * (1.0 - s);
      }
      return g;
    }
    default:
      throw ContractError("score_gradient: unhandled learner");
  }
}

int Model::predict(const FeatureVector& x) const { return sign_label(score(x)); }

double Model::param_norm(int p) const {
  if (p != 1 && p != 2) throw UsageError("param_norm: p must be 1 or 2");
  auto accum = [p](double s, double v) {
    return s + (p == 1 ? std::abs(v) : v * v);
  };
  switch (tag) {
    case Learner::LogisticRegression:
    case Learner::LinearSVM: {
      const auto& prm = std::get<LinearParams>(params);
      return std::accumulate(prm.w.begin(), prm.w.end(), 0.0, accum);
    }
    case Learner::KernelSVM: {
      const auto& prm = std::get<KernelSvmParams>(params);
      return std::accumulate(prm.alpha.begin(), prm.alpha.end(), 0.0, accum);
    }
    case Learner::NaiveBayes:
      return 0.0;
    case Learner::Mlp: {
      const auto& prm = std::get<MlpParams>(params);
      double s = 0;
      for (const auto& layer : prm.weights)
        s = std::accumulate(layer.begin(), layer.end(), s, accum);
      return s;
    }
  }
  throw ContractError("param_norm: unknown learner");
}

LossKind Model::native_loss() const {
  switch (tag) {
    case Learner::LogisticRegression: return LossKind::Logistic;
    case Learner::LinearSVM:
    case Learner::KernelSVM: return LossKind::Hinge;
    case Learner::NaiveBayes: return LossKind::ZeroOne;
    case Learner::Mlp: return LossKind::CrossEntropy;
  }
  throw ContractError("native_loss: unknown learner");
}

double score(const Model& m, const FeatureVector& x) { return m.score(x); }
double score_gradient(const Model& m, const FeatureVector& x, int j) {
  return m.attack_score_gradient(x, j);
}
int predict(const Model& m, const FeatureVector& x) { return m.predict(x); }

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

// regularized empirical risk in sum form under the learner's native loss
double training_risk(const Model& m, const Dataset& data, double alpha,
                     int p_norm) {
  double s = 0;
  const LossKind loss = m.native_loss();
  for (const auto& inst : data.instances)
    s += pointwise_loss(loss, m.score(inst.x), inst.y);
  return s + alpha * m.param_norm(p_norm);
}

Model make_zero_linear(Learner tag, const LearnerSpec& spec,
                       const FeatureSpace& space) {
  Model m;
  m.tag = tag;
  m.space = space;
  m.spec = spec;
  m.params = LinearParams{std::vector<double>(space.dim, 0.0), 0.0};
  return m;
}

void apply_regularizer_step(std::vector<double>& w, double eta, double alpha,
                            int p_norm) {
  if (alpha == 0.0) return;
  if (p_norm == 2) {
    const double shrink = std::max(0.0, 1.0 - eta * 2.0 * alpha);
    for (auto& v : w) v *= shrink;
  } else {
    for (auto& v : w) {
      if (v > 0)
        v = std::max(0.0, v - eta * alpha);
      else if (v < 0)
        v = std::min(0.0, v + eta * alpha);
    }
  }
}

// dl/dscore for the per-instance surrogate loss
double loss_score_grad(LossKind loss, double score, int y) {
  switch (loss) {
    case LossKind::Hinge:
      return y * score < 1.0 ? -double(y) : 0.0;
    case LossKind::Logistic:
    case LossKind::CrossEntropy:
      return -double(y) * sigmoid(-double(y) * score);
    case LossKind::ZeroOne:
      throw UsageError("0/1 loss has no usable gradient");
  }
  throw ContractError("loss_score_grad: unknown loss");
}

Model train_linear(Learner tag, const LearnerSpec& spec, const Dataset& data,
                   const TrainConfig& cfg) {
  const std::size_t m = data.instances.size();
  const LossKind loss =
      tag == Learner::LogisticRegression ? LossKind::Logistic : LossKind::Hinge;
  // Pegasos-style hinge training keeps the bias at zero, matching the
  // bias-free kernel dual form; logistic regression keeps its intercept
  const bool train_bias = tag == Learner::LogisticRegression;
  Model model = make_zero_linear(tag, spec, data.space);
  Model best = model;
  double best_risk = training_risk(best, data, cfg.alpha, cfg.p_norm);
  const double alpha_step = cfg.alpha / double(m);
  const SeedStream seeds(cfg.seed);

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  long t = 0;
  auto& prm = std::get<LinearParams>(model.params);
  const int batch = std::max(1, cfg.batch);
  std::vector<double> gw(data.space.dim);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto rng = seeds.substream("epoch", epoch);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t pos = 0; pos < m; pos += batch) {
      const std::size_t take = std::min<std::size_t>(batch, m - pos);
      std::fill(gw.begin(), gw.end(), 0.0);
      double gb = 0;
      for (std::size_t k = 0; k < take; ++k) {
        const auto& inst = data.instances[order[pos + k]];
        const double g = loss_score_grad(loss, dot(prm.w, inst.x) + prm.b, inst.y);
        if (g == 0.0) continue;
        for (int j = 0; j < data.space.dim; ++j) gw[j] += g * inst.x[j];
        gb += g;
      }
      const double eta = cfg.eta0 / (1.0 + cfg.decay * double(t++));
      const double scale = eta / double(take);
      apply_regularizer_step(prm.w, eta, alpha_step, cfg.p_norm);
      for (int j = 0; j < data.space.dim; ++j) prm.w[j] -= scale * gw[j];
      if (train_bias) prm.b -= scale * gb;
    }
    const double risk = training_risk(model, data, cfg.alpha, cfg.p_norm);
    if (risk <= best_risk) {
      best_risk = risk;
      best = model;
    }
  }
  return best;
}

Model train_kernel_svm(const LearnerSpec& spec, const Dataset& data,
                       const TrainConfig& cfg) {
  const std::size_t m = data.instances.size();
  // Gram matrix; desk-scale datasets keep this affordable
  std::vector<std::vector<double>> gram(m, std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j)
      gram[i][j] = gram[j][i] =
          kernel_value(spec.kernel, data.instances[i].x, data.instances[j].x);

  std::vector<double> coef(m, 0.0);  // c_i with sign(c_i) = y_i
  auto build_model = [&](const std::vector<double>& c) {
    Model model;
    model.tag = Learner::KernelSVM;
    model.space = data.space;
    model.spec = spec;
    KernelSvmParams p;
    for (std::size_t i = 0; i < m; ++i) {
      if (c[i] == 0.0) continue;
      p.alpha.push_back(c[i] * data.instances[i].y);
      p.sv_y.push_back(data.instances[i].y);
      p.sv_x.push_back(data.instances[i].x);
    }
    if (p.alpha.empty()) {
      // keep the stored-support-vector invariant even for the zero function
      p.alpha.push_back(0.0);
      p.sv_y.push_back(data.instances[0].y);
      p.sv_x.push_back(data.instances[0].x);
    }
    model.params = std::move(p);
    return model;
  };

  Model best = build_model(coef);
  double best_risk = training_risk(best, data, cfg.alpha, cfg.p_norm);
  const double alpha_step = cfg.alpha / double(m);
  const SeedStream seeds(cfg.seed);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  long t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto rng = seeds.substream("epoch", epoch);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t pos = 0; pos < m; ++pos) {
      const std::size_t i = order[pos];
      double f = 0;
      for (std::size_t k = 0; k < m; ++k)
        if (coef[k] != 0.0) f += coef[k] * gram[k][i];
      const double eta = cfg.eta0 / (1.0 + cfg.decay * double(t++));
      if (alpha_step > 0 && cfg.p_norm == 2) {
        const double shrink = std::max(0.0, 1.0 - eta * 2.0 * alpha_step);
        for (auto& c : coef) c *= shrink;
      } else if (alpha_step > 0) {
        for (auto& c : coef) {
          if (c > 0)
            c = std::max(0.0, c - eta * alpha_step);
          else if (c < 0)
            c = std::min(0.0, c + eta * alpha_step);
        }
      }
      if (data.instances[i].y * f < 1.0) coef[i] += eta * data.instances[i].y;
    }
    Model snapshot = build_model(coef);
    const double risk = training_risk(snapshot, data, cfg.alpha, cfg.p_norm);
    if (risk <= best_risk) {
      best_risk = risk;
      best = std::move(snapshot);
    }
  }
  return best;
}

Model train_naive_bayes(const Dataset& data) {
  if (data.space.kind != SpaceKind::Binary)
    throw UsageError("naive bayes requires a binary feature space");
  Model model;
  model.tag = Learner::NaiveBayes;
  model.space = data.space;
  model.spec = LearnerSpec::naive_bayes();
  NaiveBayesParams p;
  p.ones_pos.assign(data.space.dim, 0);
  p.ones_neg.assign(data.space.dim, 0);
  for (const auto& inst : data.instances) {
    auto& ones = inst.y == +1 ? p.ones_pos : p.ones_neg;
    (inst.y == +1 ? p.n_pos : p.n_neg)++;
    for (int j = 0; j < data.space.dim; ++j)
      if (inst.x[j] == 1.0) ones[j]++;
  }
  p.rebuild();
  model.params = std::move(p);
  return model;
}

MlpParams make_mlp_params(const LearnerSpec& spec, int input_dim,
                          std::mt19937_64* rng) {
  MlpParams p;
  p.activation = spec.activation;
  std::vector<int> dims;
  dims.push_back(input_dim);
  for (int h : spec.hidden) {
    if (h < 1) throw UsageError("mlp hidden sizes must be >= 1");
    dims.push_back(h);
  }
  dims.push_back(1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    p.in_dims.push_back(dims[l]);
    p.out_dims.push_back(dims[l + 1]);
    std::vector<double> w(std::size_t(dims[l]) * dims[l + 1], 0.0);
    if (rng) {
      const double limit = 1.0 / std::sqrt(double(dims[l]));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (auto& v : w) v = u(*rng);
    }
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(dims[l + 1], 0.0);
  }
  return p;
}

// one backward pass; returns gradients shaped like the parameters
void mlp_backprop(const MlpParams& p, const FeatureVector& x,
                  const MlpForward& f, double out_grad,
                  std::vector<std::vector<double>>& gw,
                  std::vector<std::vector<double>>& gb) {
  const std::size_t layers = p.weights.size();
  std::vector<double> delta{out_grad};
  for (std::size_t l = layers; l-- > 0;) {
    const int rows = p.out_dims[l], cols = p.in_dims[l];
    const std::vector<double>& input = l == 0 ? x : f.post[l - 1];
    for (int r = 0; r < rows; ++r) {
      const double d = delta[r];
      gb[l][r] += d;
      if (d == 0.0) continue;
      double* grow = gw[l].data() + std::size_t(r) * cols;
      for (int c = 0; c < cols; ++c) grow[c] += d * input[c];
    }
    if (l == 0) break;
    std::vector<double> next(cols, 0.0);
    for (int r = 0; r < rows; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      const double* wrow = p.weights[l].data() + std::size_t(r) * cols;
      for (int c = 0; c < cols; ++c) next[c] += d * wrow[c];
    }
    for (int c = 0; c < cols; ++c)
      next[c] *= activate_deriv(p.activation, f.pre[l - 1][c]);
    delta = std::move(next);
  }
}

Model train_mlp(const LearnerSpec& spec, const Dataset& data,
                const TrainConfig& cfg) {
  const std::size_t m = data.instances.size();
  const SeedStream seeds(cfg.seed);

  Model model;
  model.tag = Learner::Mlp;
  model.space = data.space;
  model.spec = spec;
  {
    auto rng = seeds.substream("init");
    model.params = make_mlp_params(spec, data.space.dim, &rng);
  }
  // the all-zero network is the f == 0 reference the contract compares against
  Model zero = model;
  zero.params = make_mlp_params(spec, data.space.dim, nullptr);
  Model best = zero;
  double best_risk = training_risk(zero, data, cfg.alpha, cfg.p_norm);

  auto& prm = std::get<MlpParams>(model.params);
  const double alpha_step = cfg.alpha / double(m);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  const int batch = std::max(1, cfg.batch);
  std::vector<std::vector<double>> gw, gb;
  for (const auto& w : prm.weights) gw.emplace_back(w.size(), 0.0);
  for (const auto& b : prm.biases) gb.emplace_back(b.size(), 0.0);
  long t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto rng = seeds.substream("epoch", epoch);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t pos = 0; pos < m; pos += batch) {
      const std::size_t take = std::min<std::size_t>(batch, m - pos);
      for (auto& g : gw) std::fill(g.begin(), g.end(), 0.0);
      for (auto& g : gb) std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t k = 0; k < take; ++k) {
        const auto& inst = data.instances[order[pos + k]];
        const MlpForward f = mlp_forward(prm, inst.x);
        const double g = loss_score_grad(LossKind::CrossEntropy, f.out, inst.y);
        if (g != 0.0) mlp_backprop(prm, inst.x, f, g, gw, gb);
      }
      const double eta = cfg.eta0 / (1.0 + cfg.decay * double(t++));
      const double scale = eta / double(take);
      for (std::size_t l = 0; l < prm.weights.size(); ++l) {
        apply_regularizer_step(prm.weights[l], eta, alpha_step, cfg.p_norm);
        for (std::size_t i = 0; i < prm.weights[l].size(); ++i)
          prm.weights[l][i] -= scale * gw[l][i];
        for (std::size_t i = 0; i < prm.biases[l].size(); ++i)
          prm.biases[l][i] -= scale * gb[l][i];
      }
    }
    const double risk = training_risk(model, data, cfg.alpha, cfg.p_norm);
    if (risk <= best_risk) {
      best_risk = risk;
      best = model;
    }
  }
  return best;
}

}  // namespace

Model train(const LearnerSpec& spec, const Dataset& data,
            const TrainConfig& cfg) {
  if (data.instances.empty()) throw UsageError("train: empty dataset");
  for (const auto& inst : data.instances)
    data.space.require_member(inst.x, "train");
  if (cfg.epochs < 0) throw UsageError("train: epochs must be >= 0");
  if (!(cfg.eta0 > 0)) throw UsageError("train: eta0 must be > 0");
  if (cfg.alpha < 0) throw UsageError("train: alpha must be >= 0");
  if (spec.kind != Learner::NaiveBayes) require_binary_labels(data);

  switch (spec.kind) {
    case Learner::LogisticRegression:
    case Learner::LinearSVM:
      return train_linear(spec.kind, spec, data, cfg);
    case Learner::KernelSVM:
      return train_kernel_svm(spec, data, cfg);
    case Learner::NaiveBayes:
      require_binary_labels(data);
      return train_naive_bayes(data);
    case Learner::Mlp:
      return train_mlp(spec, data, cfg);
  }
  throw ContractError("train: unknown learner");
}

Model train_online_step(const Model& m, const LabeledInstance& inst, double eta,
                        double alpha, int p_norm) {
  m.space.require_member(inst.x, "train_online_step");
  if (eta == 0.0) return m;
  Model out = m;
  switch (m.tag) {
    case Learner::LogisticRegression:
    case Learner::LinearSVM: {
      auto& p = std::get<LinearParams>(out.params);
      const double g = loss_score_grad(m.native_loss(), dot(p.w, inst.x) + p.b,
                                       inst.y);
      apply_regularizer_step(p.w, eta, alpha, p_norm);
      if (g != 0.0) {
        for (std::size_t j = 0; j < p.w.size(); ++j) p.w[j] -= eta * g * inst.x[j];
        if (m.tag == Learner::LogisticRegression) p.b -= eta * g;
      }
      return out;
    }
    case Learner::KernelSVM: {
      auto& p = std::get<KernelSvmParams>(out.params);
      const double f = m.score(inst.x);
      if (alpha > 0) {
        // duals are non-negative; both norms shrink toward zero
        for (auto& a : p.alpha)
          a = p_norm == 2 ? a * std::max(0.0, 1.0 - eta * 2.0 * alpha)
                          : std::max(0.0, a - eta * alpha);
      }
      if (inst.y * f < 1.0) {
        p.alpha.push_back(eta);
        p.sv_y.push_back(inst.y);
        p.sv_x.push_back(inst.x);
      }
      return out;
    }
    case Learner::NaiveBayes: {
      auto& p = std::get<NaiveBayesParams>(out.params);
      (inst.y == +1 ? p.n_pos : p.n_neg)++;
      auto& ones = inst.y == +1 ? p.ones_pos : p.ones_neg;
      for (std::size_t j = 0; j < inst.x.size(); ++j)
        if (inst.x[j] == 1.0) ones[j]++;
      p.rebuild();
      return out;
    }
    case Learner::Mlp: {
      auto& p = std::get<MlpParams>(out.params);
      const MlpForward f = mlp_forward(p, inst.x);
      const double g = loss_score_grad(LossKind::CrossEntropy, f.out, inst.y);
      std::vector<std::vector<double>> gw, gb;
      for (const auto& w : p.weights) gw.emplace_back(w.size(), 0.0);
      for (const auto& b : p.biases) gb.emplace_back(b.size(), 0.0);
      if (g != 0.0) mlp_backprop(p, inst.x, f, g, gw, gb);
      for (std::size_t l = 0; l < p.weights.size(); ++l) {
        apply_regularizer_step(p.weights[l], eta, alpha, p_norm);
        for (std::size_t i = 0; i < p.weights[l].size(); ++i)
          p.weights[l][i] -= eta * gw[l][i];
        for (std::size_t i = 0; i < p.biases[l].size(); ++i)
          p.biases[l][i] -= eta * gb[l][i];
      }
      return out;
    }
  }
  throw ContractError("train_online_step: unknown learner");
}

// ---------------------------------------------------------------------------
// Multi-class (one-vs-all)
// ---------------------------------------------------------------------------

int MulticlassModel::label_index(int label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end())
    throw UsageError("unknown label " + std::to_string(label));
  return int(it - labels.begin());
}

double MulticlassModel::score(const FeatureVector& x, int label) const {
  return models[label_index(label)].score(x);
}

int MulticlassModel::predict(const FeatureVector& x) const {
  int best = labels.at(0);
  double best_score = models.at(0).score(x);
  for (std::size_t i = 1; i < labels.size(); ++i) {
    const double s = models[i].score(x);
    if (s > best_score) {
      best_score = s;
      best = labels[i];
    }
  }
  return best;
}

MulticlassModel train_multiclass(const LearnerSpec& spec, const Dataset& data,
                                 const TrainConfig& cfg) {
  const std::vector<int> labels = data.label_set();
  if (labels.size() < 2)
    throw UsageError("multi-class training needs at least two labels");
  MulticlassModel ms;
  ms.labels = labels;
  const SeedStream seeds(cfg.seed);
  for (int label : labels) {
    Dataset view;
    view.space = data.space;
    view.instances.reserve(data.instances.size());
    for (const auto& inst : data.instances)
      view.instances.push_back({inst.x, inst.y == label ? +1 : -1});
    TrainConfig sub = cfg;
    sub.seed = seeds.derive("ova", std::uint64_t(label));
    ms.models.push_back(train(spec, view, sub));
  }
  return ms;
}

double multiclass_score(const MulticlassModel& ms, const FeatureVector& x,
                        int label) {
  return ms.score(x, label);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

using Json = nlohmann::ordered_json;

Json reals_to_json(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(format_real(x));
  return a;
}

std::vector<double> reals_from_json(const Json& a) {
  std::vector<double> v;
  v.reserve(a.size());
  for (const auto& s : a) v.push_back(parse_real(s.get<std::string>()));
  return v;
}

Json space_to_json(const FeatureSpace& s) {
  Json j;
  j["kind"] = s.kind == SpaceKind::Binary ? "binary" : "continuous";
  j["dim"] = s.dim;
  if (s.kind == SpaceKind::Continuous) {
    j["lo"] = reals_to_json(s.lo);
    j["hi"] = reals_to_json(s.hi);
  }
  return j;
}

FeatureSpace space_from_json(const Json& j) {
  const std::string kind = j.at("kind");
  if (kind == "binary") return FeatureSpace::binary(j.at("dim").get<int>());
  return FeatureSpace::continuous(reals_from_json(j.at("lo")),
                                  reals_from_json(j.at("hi")));
}

}  // namespace

const char* learner_name(Learner tag) {
  switch (tag) {
    case Learner::LogisticRegression: return "logistic_regression";
    case Learner::LinearSVM: return "linear_svm";
    case Learner::KernelSVM: return "kernel_svm";
    case Learner::NaiveBayes: return "naive_bayes";
    case Learner::Mlp: return "mlp";
  }
  return "?";
}

Learner learner_from_name(std::string_view name) {
  if (name == "logistic_regression") return Learner::LogisticRegression;
  if (name == "linear_svm") return Learner::LinearSVM;
  if (name == "kernel_svm") return Learner::KernelSVM;
  if (name == "naive_bayes") return Learner::NaiveBayes;
  if (name == "mlp") return Learner::Mlp;
  throw UsageError("unknown learner: " + std::string(name));
}

const char* activation_name(Activation a) {
  return a == Activation::Sigmoid ? "sigmoid" : "relu";
}

Activation activation_from_name(std::string_view name) {
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "relu") return Activation::Relu;
  throw UsageError("unknown activation: " + std::string(name));
}

const char* kernel_name(KernelKind k) {
  switch (k) {
    case KernelKind::Linear: return "linear";
    case KernelKind::Polynomial: return "polynomial";
    case KernelKind::Rbf: return "rbf";
  }
  return "?";
}

KernelKind kernel_from_name(std::string_view name) {
  if (name == "linear") return KernelKind::Linear;
  if (name == "polynomial") return KernelKind::Polynomial;
  if (name == "rbf") return KernelKind::Rbf;
  throw UsageError("unknown kernel: " + std::string(name));
}

std::string serialize_model(const Model& m) {
  Json j;
  j["format_version"] = 1;
  j["learner"] = learner_name(m.tag);
  j["space"] = space_to_json(m.space);
  Json spec;
  if (m.tag == Learner::KernelSVM) {
    Json k;
    k["kind"] = kernel_name(m.spec.kernel.kind);
    k["coef"] = format_real(m.spec.kernel.coef);
    k["degree"] = m.spec.kernel.degree;
    k["sigma"] = format_real(m.spec.kernel.sigma);
    spec["kernel"] = k;
  }
  if (m.tag == Learner::Mlp) {
    spec["hidden"] = m.spec.hidden;
    spec["activation"] = activation_name(m.spec.activation);
  }
  j["spec"] = spec;

  Json p;
  switch (m.tag) {
    case Learner::LogisticRegression:
    case Learner::LinearSVM: {
      const auto& prm = std::get<LinearParams>(m.params);
      p["w"] = reals_to_json(prm.w);
      p["b"] = format_real(prm.b);
      break;
    }
    case Learner::KernelSVM: {
      const auto& prm = std::get<KernelSvmParams>(m.params);
      p["alpha"] = reals_to_json(prm.alpha);
      p["sv_y"] = prm.sv_y;
      Json xs = Json::array();
      for (const auto& x : prm.sv_x) xs.push_back(reals_to_json(x));
      p["sv_x"] = xs;
      break;
    }
    case Learner::NaiveBayes: {
      const auto& prm = std::get<NaiveBayesParams>(m.params);
      p["n_pos"] = prm.n_pos;
      p["n_neg"] = prm.n_neg;
      p["ones_pos"] = prm.ones_pos;
      p["ones_neg"] = prm.ones_neg;
      break;
    }
    case Learner::Mlp: {
      const auto& prm = std::get<MlpParams>(m.params);
      Json ws = Json::array(), bs = Json::array();
      for (const auto& w : prm.weights) ws.push_back(reals_to_json(w));
      for (const auto& b : prm.biases) bs.push_back(reals_to_json(b));
      p["weights"] = ws;
      p["biases"] = bs;
      break;
    }
  }
  j["parameters"] = p;
  return j.dump(2) + "\n";
}

Model deserialize_model(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const std::exception& e) {
    throw DataError(std::string("model parse failure: ") + e.what());
  }
  if (j.at("format_version").get<int>() != 1)
    throw DataError("unsupported model format version");
  Model m;
  m.tag = learner_from_name(j.at("learner").get<std::string>());
  m.space = space_from_json(j.at("space"));
  m.spec.kind = m.tag;
  const Json& spec = j.at("spec");
  if (m.tag == Learner::KernelSVM) {
    const Json& k = spec.at("kernel");
    m.spec.kernel.kind = kernel_from_name(k.at("kind").get<std::string>());
    m.spec.kernel.coef = parse_real(k.at("coef").get<std::string>());
    m.spec.kernel.degree = k.at("degree").get<int>();
    m.spec.kernel.sigma = parse_real(k.at("sigma").get<std::string>());
  }
  if (m.tag == Learner::Mlp) {
    m.spec.hidden = spec.at("hidden").get<std::vector<int>>();
    m.spec.activation =
        activation_from_name(spec.at("activation").get<std::string>());
  }
  const Json& p = j.at("parameters");
  switch (m.tag) {
    case Learner::LogisticRegression:
    case Learner::LinearSVM: {
      LinearParams prm;
      prm.w = reals_from_json(p.at("w"));
      prm.b = parse_real(p.at("b").get<std::string>());
      if (int(prm.w.size()) != m.space.dim)
        throw DataError("model weight shape does not match space dim");
      m.params = std::move(prm);
      break;
    }
    case Learner::KernelSVM: {
      KernelSvmParams prm;
      prm.alpha = reals_from_json(p.at("alpha"));
      prm.sv_y = p.at("sv_y").get<std::vector<int>>();
      for (const auto& x : p.at("sv_x")) prm.sv_x.push_back(reals_from_json(x));
      if (prm.alpha.empty() || prm.alpha.size() != prm.sv_y.size() ||
          prm.alpha.size() != prm.sv_x.size())
        throw DataError("kernel svm parameter shapes inconsistent");
      for (const auto& x : prm.sv_x)
        if (int(x.size()) != m.space.dim)
          throw DataError("support vector dim mismatch");
      m.params = std::move(prm);
      break;
    }
    case Learner::NaiveBayes: {
      NaiveBayesParams prm;
      prm.n_pos = p.at("n_pos").get<long>();
      prm.n_neg = p.at("n_neg").get<long>();
      prm.ones_pos = p.at("ones_pos").get<std::vector<long>>();
      prm.ones_neg = p.at("ones_neg").get<std::vector<long>>();
      if (int(prm.ones_pos.size()) != m.space.dim ||
          int(prm.ones_neg.size()) != m.space.dim)
        throw DataError("naive bayes count shapes inconsistent");
      prm.rebuild();
      m.params = std::move(prm);
      break;
    }
    case Learner::Mlp: {
      MlpParams prm = make_mlp_params(m.spec, m.space.dim, nullptr);
      const Json& ws = p.at("weights");
      const Json& bs = p.at("biases");
      if (ws.size() != prm.weights.size() || bs.size() != prm.biases.size())
        throw DataError("mlp layer count mismatch");
      for (std::size_t l = 0; l < prm.weights.size(); ++l) {
        auto w = reals_from_json(ws[l]);
        auto b = reals_from_json(bs[l]);
        if (w.size() != prm.weights[l].size() || b.size() != prm.biases[l].size())
          throw DataError("mlp layer shape mismatch");
        prm.weights[l] = std::move(w);
        prm.biases[l] = std::move(b);
      }
      m.params = std::move(prm);
      break;
    }
  }
  return m;
}

void save_model(const std::string& path, const Model& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open model file for writing: " + path);
  out << serialize_model(m);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace rad
