#include "rad/evasion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace rad {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

bool sigmoid_output(const Model& m) {
  return m.tag == Learner::LogisticRegression ||
         (m.tag == Learner::Mlp && m.spec.activation == Activation::Sigmoid);
}

double attack_transform(const Model& m, double raw) {
  return sigmoid_output(m) ? sigmoid(raw) - 0.5 : raw;
}

double mlp_forward_rest(const MlpParams& p, const std::vector<double>& h0) {
  const std::size_t layers = p.weights.size();
  if (layers == 1) return h0[0];
  std::vector<double> a(h0.size());
  for (std::size_t r = 0; r < h0.size(); ++r)
    a[r] = p.activation == Activation::Sigmoid ? sigmoid(h0[r])
                                               : std::max(0.0, h0[r]);
  std::vector<double> z;
  for (std::size_t l = 1; l < layers; ++l) {
    const int rows = p.out_dims[l], cols = p.in_dims[l];
    z.assign(rows, 0.0);
    for (int r = 0; r < rows; ++r) {
      double s = p.biases[l][r];
      const double* wrow = p.weights[l].data() + std::size_t(r) * cols;
      for (int c = 0; c < cols; ++c) s += wrow[c] * a[c];
      z[r] = s;
    }
    if (l + 1 == layers) return z[0];
    a.resize(rows);
    for (int r = 0; r < rows; ++r)
      a[r] = p.activation == Activation::Sigmoid ? sigmoid(z[r])
                                                 : std::max(0.0, z[r]);
  }
  throw ContractError("mlp forward: empty network");
}

// Incremental evaluator of the (optionally negated) attack score under
// single-coordinate changes. value_if and commit share the same delta
// arithmetic so an accepted trial reproduces its trial value bit-exactly.
class ScoreProbe {
 public:
  ScoreProbe(const Model& m, FeatureVector x, bool negate)
      : model_(m), negate_(negate) {
    reset(std::move(x));
  }

  void reset(FeatureVector x) {
    x_ = std::move(x);
    switch (model_.tag) {
      case Learner::LogisticRegression:
      case Learner::LinearSVM: {
        const auto& p = std::get<LinearParams>(model_.params);
        linear_z_ = p.b;
        for (std::size_t j = 0; j < x_.size(); ++j) linear_z_ += p.w[j] * x_[j];
        raw_ = linear_z_;
        break;
      }
      case Learner::KernelSVM: {
        const auto& p = std::get<KernelSvmParams>(model_.params);
        stats_.assign(p.alpha.size(), 0.0);
        for (std::size_t s = 0; s < p.alpha.size(); ++s)
          stats_[s] = sv_stat(p.sv_x[s]);
        raw_ = kernel_score();
        break;
      }
      case Learner::NaiveBayes: {
        const auto& p = std::get<NaiveBayesParams>(model_.params);
        double t = p.log_prior_odds;
        for (std::size_t j = 0; j < x_.size(); ++j)
          t += x_[j] == 1.0 ? p.llr_one[j] : p.llr_zero[j];
        raw_ = t;
        break;
      }
      case Learner::Mlp: {
        const auto& p = std::get<MlpParams>(model_.params);
        const int rows = p.out_dims[0], cols = p.in_dims[0];
        h0_.assign(rows, 0.0);
        for (int r = 0; r < rows; ++r) {
          double s = p.biases[0][r];
          const double* wrow = p.weights[0].data() + std::size_t(r) * cols;
          for (int c = 0; c < cols; ++c) s += wrow[c] * x_[c];
          h0_[r] = s;
        }
        raw_ = mlp_forward_rest(p, h0_);
        break;
      }
    }
  }

  const FeatureVector& point() const { return x_; }

  double value() const {
    const double v = attack_transform(model_, raw_);
    return negate_ ? -v : v;
  }

  double value_if(int j, double v) const {
    double raw = raw_;
    switch (model_.tag) {
      case Learner::LogisticRegression:
      case Learner::LinearSVM: {
        const auto& p = std::get<LinearParams>(model_.params);
        raw = linear_z_ + p.w[j] * (v - x_[j]);
        break;
      }
      case Learner::KernelSVM: {
        const auto& p = std::get<KernelSvmParams>(model_.params);
        double s = 0;
        for (std::size_t i = 0; i < p.alpha.size(); ++i) {
          const double ay = p.alpha[i] * p.sv_y[i];
          if (ay == 0.0) continue;
          s += ay * kernel_from_stat(stat_delta(i, j, v));
        }
        raw = s;
        break;
      }
      case Learner::NaiveBayes: {
        const auto& p = std::get<NaiveBayesParams>(model_.params);
        raw = raw_ - (x_[j] == 1.0 ? p.llr_one[j] : p.llr_zero[j]) +
              (v == 1.0 ? p.llr_one[j] : p.llr_zero[j]);
        break;
      }
      case Learner::Mlp: {
        const auto& p = std::get<MlpParams>(model_.params);
        scratch_ = h0_;
        const int rows = p.out_dims[0], cols = p.in_dims[0];
        const double d = v - x_[j];
        for (int r = 0; r < rows; ++r)
          scratch_[r] += p.weights[0][std::size_t(r) * cols + j] * d;
        raw = mlp_forward_rest(p, scratch_);
        break;
      }
    }
    const double out = attack_transform(model_, raw);
    return negate_ ? -out : out;
  }

  void commit(int j, double v) {
    switch (model_.tag) {
      case Learner::LogisticRegression:
      case Learner::LinearSVM: {
        const auto& p = std::get<LinearParams>(model_.params);
        linear_z_ += p.w[j] * (v - x_[j]);
        raw_ = linear_z_;
        break;
      }
      case Learner::KernelSVM: {
        const auto& p = std::get<KernelSvmParams>(model_.params);
        for (std::size_t i = 0; i < p.alpha.size(); ++i)
          stats_[i] = stat_delta(i, j, v);
        x_[j] = v;
        raw_ = kernel_score();
        return;
      }
      case Learner::NaiveBayes: {
        const auto& p = std::get<NaiveBayesParams>(model_.params);
        raw_ = raw_ - (x_[j] == 1.0 ? p.llr_one[j] : p.llr_zero[j]) +
               (v == 1.0 ? p.llr_one[j] : p.llr_zero[j]);
        break;
      }
      case Learner::Mlp: {
        const auto& p = std::get<MlpParams>(model_.params);
        const int rows = p.out_dims[0], cols = p.in_dims[0];
        const double d = v - x_[j];
        for (int r = 0; r < rows; ++r)
          h0_[r] += p.weights[0][std::size_t(r) * cols + j] * d;
        raw_ = mlp_forward_rest(p, h0_);
        break;
      }
    }
    x_[j] = v;
  }

  double gradient(int j) const {
    const double g = model_.attack_score_gradient(x_, j);
    return negate_ ? -g : g;
  }

 private:
  double sv_stat(const FeatureVector& sv) const {
    if (model_.spec.kernel.kind == KernelKind::Rbf) {
      double s = 0;
      for (std::size_t c = 0; c < x_.size(); ++c) {
        const double d = x_[c] - sv[c];
        s += d * d;
      }
      return s;  // squared distance
    }
    double s = 0;
    for (std::size_t c = 0; c < x_.size(); ++c) s += x_[c] * sv[c];
    return s;  // dot product
  }

  double stat_delta(std::size_t sv_index, int j, double v) const {
    const auto& p = std::get<KernelSvmParams>(model_.params);
    const FeatureVector& sv = p.sv_x[sv_index];
    if (model_.spec.kernel.kind == KernelKind::Rbf) {
      const double dn = v - sv[j], dc = x_[j] - sv[j];
      return stats_[sv_index] + dn * dn - dc * dc;
    }
    return stats_[sv_index] + sv[j] * (v - x_[j]);
  }

  double kernel_from_stat(double stat) const {
    const KernelSpec& k = model_.spec.kernel;
    switch (k.kind) {
      case KernelKind::Linear: return stat;
      case KernelKind::Polynomial: return std::pow(k.coef + stat, k.degree);
      case KernelKind::Rbf: return std::exp(-stat / (2.0 * k.sigma * k.sigma));
    }
    throw ContractError("unknown kernel kind");
  }

  double kernel_score() const {
    const auto& p = std::get<KernelSvmParams>(model_.params);
    double s = 0;
    for (std::size_t i = 0; i < p.alpha.size(); ++i) {
      const double ay = p.alpha[i] * p.sv_y[i];
      if (ay == 0.0) continue;
      s += ay * kernel_from_stat(stats_[i]);
    }
    return s;
  }

  const Model& model_;
  bool negate_;
  FeatureVector x_;
  double raw_ = 0;       // raw (pre-transform) score at x_
  double linear_z_ = 0;  // linear family
  std::vector<double> stats_;  // kernel SVM per-SV dot/sqdist
  std::vector<double> h0_;     // MLP first-layer pre-activations
  mutable std::vector<double> scratch_;
};

class CostProbe {
 public:
  CostProbe(const CostModel& cost, FeatureVector x) : cost_(cost) {
    reset(std::move(x));
  }

  void reset(FeatureVector x) {
    x_ = std::move(x);
    sumsq_ = 0;
    suml1_ = 0;
    const auto& a = cost_.anchor();
    for (std::size_t j = 0; j < x_.size(); ++j) {
      const double d = x_[j] - a[j];
      sumsq_ += d * d;
      suml1_ += std::abs(d);
    }
  }

  double value() const { return from_sums(sumsq_, suml1_); }

  double value_if(int j, double v) const {
    const double dn = v - cost_.anchor()[j], dc = x_[j] - cost_.anchor()[j];
    return from_sums(sumsq_ + dn * dn - dc * dc,
                     suml1_ + std::abs(dn) - std::abs(dc));
  }

  void commit(int j, double v) {
    const double dn = v - cost_.anchor()[j], dc = x_[j] - cost_.anchor()[j];
    sumsq_ += dn * dn - dc * dc;
    suml1_ += std::abs(dn) - std::abs(dc);
    x_[j] = v;
  }

  double gradient(int j) const { return cost_.gradient(x_, j); }

 private:
  double from_sums(double sumsq, double suml1) const {
    switch (cost_.spec().kind) {
      case CostKind::Quadratic: return 0.5 * cost_.spec().lambda * sumsq;
      case CostKind::L1: return cost_.spec().lambda * suml1;
      case CostKind::Exponential:
        return std::exp(cost_.spec().lambda * std::sqrt(sumsq + 1.0));
    }
    throw ContractError("unknown cost kind");
  }

  const CostModel& cost_;
  FeatureVector x_;
  double sumsq_ = 0, suml1_ = 0;
};

struct Objective {
  ScoreProbe score;
  CostProbe cost;

  double q() const { return score.value() + cost.value(); }
  double q_if(int j, double v) const {
    return score.value_if(j, v) + cost.value_if(j, v);
  }
  void commit(int j, double v) {
    score.commit(j, v);
    cost.commit(j, v);
  }
  double grad(int j) const { return score.gradient(j) + cost.gradient(j); }
  const FeatureVector& x() const { return score.point(); }
};

bool improve_discrete_step(Objective& obj, int j) {
  const double cur = obj.x()[j];
  const double other = cur == 0.0 ? 1.0 : 0.0;
  if (obj.q_if(j, other) < obj.q()) {
    obj.commit(j, other);
    return true;
  }
  return false;
}

// backtracking halving from tau0 = 1; first strict decrease wins
bool improve_continuous_step(Objective& obj, const FeatureSpace& space, int j) {
  const double g = obj.grad(j);
  if (g == 0.0) return false;
  const double cur = obj.x()[j];
  const double q_cur = obj.q();
  double tau = 1.0;
  for (int t = 0; t < 30; ++t, tau *= 0.5) {
    const double v = space.clamp(j, cur - tau * g);
    if (v == cur) continue;
    if (obj.q_if(j, v) < q_cur) {
      obj.commit(j, v);
      return true;
    }
  }
  return false;
}

// rng == nullptr selects deterministic round-robin sweeps
CgResult run_cg(const Model& model, bool negate, const CostModel& cost,
                const FeatureVector& x_start, double epsilon, long max_updates,
                std::mt19937_64* rng) {
  model.space.require_member(x_start, "coordinate_greedy");
  if (!(epsilon > 0)) throw UsageError("coordinate_greedy: epsilon must be > 0");
  const int n = model.space.dim;
  if (max_updates <= 0) max_updates = 100L * n;
  Objective obj{ScoreProbe(model, x_start, negate), CostProbe(cost, x_start)};
  CgResult out;
  double q_cur = obj.q();
  out.q_trace.push_back(q_cur);
  double q_window = q_cur;
  const bool discrete = model.space.is_binary();
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<char> touched(n, 0);
  int touched_count = 0;
  for (long k = 1; k <= max_updates; ++k) {
    const int j = rng ? pick(*rng) : int((k - 1) % n);
    if (!touched[j]) {
      touched[j] = 1;
      ++touched_count;
    }
    if (discrete)
      improve_discrete_step(obj, j);
    else
      improve_continuous_step(obj, model.space, j);
    q_cur = obj.q();
    out.q_trace.push_back(q_cur);
    if (k % n == 0 && touched_count == n) {
      // stop on diminishing improvement, measured only across stretches
      // that updated every coordinate at least once; the ln-ratio test
      // from the source algorithm applies only where it is well defined
      // (both Q values above 1)
      const double drop = q_window - q_cur;
      if (drop <= epsilon * std::max(1.0, std::abs(q_window))) break;
      if (q_cur > 1.0 && q_window > 1.0 &&
          std::log(q_cur) / std::log(q_window) <= epsilon)
        break;
      q_window = q_cur;
      std::fill(touched.begin(), touched.end(), 0);
      touched_count = 0;
    }
  }
  out.x = obj.x();
  return out;
}

double objective_value(const Model& model, bool negate, const CostModel& cost,
                       const FeatureVector& x) {
  const double f = model.attack_score(x);
  return (negate ? -f : f) + cost.value(x);
}

FeatureVector random_start(const FeatureSpace& space, std::mt19937_64 rng) {
  FeatureVector x(space.dim);
  if (space.is_binary()) {
    std::uniform_int_distribution<int> bit(0, 1);
    for (auto& v : x) v = double(bit(rng));
  } else {
    for (int j = 0; j < space.dim; ++j) {
      std::uniform_real_distribution<double> u(space.lo[j], space.hi[j]);
      x[j] = u(rng);
    }
  }
  return x;
}

using FeasibleFn = std::function<bool(const FeatureVector&)>;

SolveOutcome solve_impl(const Model& model, bool negate, const CostModel& cost,
                        const FeatureVector& x_i, int restarts, double epsilon,
                        long max_updates, const SeedStream& seeds,
                        std::uint64_t instance_index, bool sweep,
                        const FeasibleFn& feasible) {
  if (restarts < 0) throw UsageError("restart count must be >= 0");
  SolveOutcome o;
  for (int r = 0; r <= restarts; ++r) {
    FeatureVector start =
        r == 0 ? x_i
               : random_start(model.space,
                              seeds.substream("restart", instance_index,
                                              std::uint64_t(r)));
    CgResult cg;
    if (sweep) {
      cg = run_cg(model, negate, cost, start, epsilon, max_updates, nullptr);
    } else {
      auto rng = seeds.substream("cg", instance_index, std::uint64_t(r));
      cg = run_cg(model, negate, cost, start, epsilon, max_updates, &rng);
    }
    o.iterations += long(cg.q_trace.size()) - 1;
    const double q = objective_value(model, negate, cost, cg.x);
    if (r == 0 || q < o.best_q) {
      o.best_q = q;
      o.best_x = cg.x;
      o.best_index = r;
    }
    if (feasible(cg.x) && (!o.has_feasible || q < o.feasible_q)) {
      o.has_feasible = true;
      o.feasible_q = q;
      o.feasible_x = cg.x;
      o.feasible_index = r;
    }
  }
  return o;
}

}  // namespace

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::CoordinateGreedy: return "coordinate_greedy";
    case Strategy::ConvexDescent: return "convex_descent";
    case Strategy::Constrained: return "constrained";
    case Strategy::MultiTarget: return "multi_target";
    case Strategy::Identity: return "identity";
    case Strategy::PlugIn: return "plug_in";
  }
  return "?";
}

Strategy strategy_from_name(std::string_view name) {
  if (name == "coordinate_greedy") return Strategy::CoordinateGreedy;
  if (name == "convex_descent") return Strategy::ConvexDescent;
  if (name == "constrained") return Strategy::Constrained;
  if (name == "multi_target") return Strategy::MultiTarget;
  if (name == "identity") return Strategy::Identity;
  if (name == "plug_in") return Strategy::PlugIn;
  throw UsageError("unknown oracle strategy: " + std::string(name));
}

double attack_objective(const Model& model, const CostModel& cost,
                        const FeatureVector& x) {
  model.space.require_member(x, "attack_objective");
  return model.attack_score(x) + cost.value(x);
}

CgResult coordinate_greedy(const Model& model, const CostModel& cost,
                           const FeatureVector& x_start, double epsilon,
                           long max_updates, std::mt19937_64& rng) {
  return run_cg(model, false, cost, x_start, epsilon, max_updates, &rng);
}

CgResult convex_descent(const Model& model, const CostModel& cost,
                        const FeatureVector& x_start, double epsilon,
                        long max_updates) {
  return run_cg(model, false, cost, x_start, epsilon, max_updates, nullptr);
}

FeatureVector greedy_improve_continuous(const Model& model,
                                        const CostModel& cost,
                                        const FeatureVector& x, int j) {
  model.space.require_member(x, "greedy_improve_continuous");
  if (model.space.is_binary())
    throw UsageError("greedy_improve_continuous needs a continuous space");
  Objective obj{ScoreProbe(model, x, false), CostProbe(cost, x)};
  improve_continuous_step(obj, model.space, j);
  return obj.x();
}

FeatureVector greedy_improve_discrete(const Model& model, const CostModel& cost,
                                      const FeatureVector& x, int j) {
  model.space.require_member(x, "greedy_improve_discrete");
  if (!model.space.is_binary())
    throw UsageError("greedy_improve_discrete needs a binary space");
  Objective obj{ScoreProbe(model, x, false), CostProbe(cost, x)};
  improve_discrete_step(obj, j);
  return obj.x();
}

SolveOutcome solve_with_restarts(const Model& model, const CostModel& cost,
                                 const FeatureVector& x_i, int restarts,
                                 double epsilon, long max_updates,
                                 const SeedStream& seeds,
                                 std::uint64_t instance_index,
                                 bool deterministic_sweep) {
  model.space.require_member(x_i, "solve_with_restarts");
  return solve_impl(model, false, cost, x_i, restarts, epsilon, max_updates,
                    seeds, instance_index, deterministic_sweep,
                    [&](const FeatureVector& x) {
                      return model.attack_score(x) < 0;
                    });
}

AttackResult evade_with_restarts(const Model& model, const CostModel& cost,
                                 const FeatureVector& x_i, int restarts,
                                 double epsilon, long max_updates,
                                 const SeedStream& seeds,
                                 std::uint64_t instance_index,
                                 bool deterministic_sweep) {
  model.space.require_member(x_i, "evade");
  const double q0 = attack_objective(model, cost, x_i);
  if (model.attack_score(x_i) < 0) return {x_i, true, q0, 0, 0};
  const SolveOutcome o =
      solve_with_restarts(model, cost, x_i, restarts, epsilon, max_updates,
                          seeds, instance_index, deterministic_sweep);
  // an evasion is only worth returning if it costs no more than staying put
  if (o.has_feasible && o.feasible_q <= q0)
    return {o.feasible_x, true, o.feasible_q, o.iterations, o.feasible_index};
  return {x_i, false, q0, o.iterations, 0};
}

namespace {

AttackResult constrained_binary(const Model& model, const CostModel& cost,
                                const FeatureVector& x_i, double budget,
                                long max_updates) {
  FeatureVector x = x_i;
  double f_cur = model.attack_score(x);
  double c_cur = cost.value(x);
  const int n = model.space.dim;
  long iters = 0;
  for (long step = 0; step < max_updates; ++step) {
    int best_j = -1;
    double best_rank = 0.0;
    bool best_free = false;
    for (int j = 0; j < n; ++j) {
      x[j] = 1.0 - x[j];
      const double c_new = cost.value(x);
      if (c_new <= budget) {
        const double df = f_cur - model.attack_score(x);
        if (df > 0) {
          const double dc = c_new - c_cur;
          const bool free_move = dc <= 0;
          // free (cost-reducing) improvements outrank paid ones; paid ones
          // compete on improvement per unit cost
          const double rank = free_move ? df : df / std::max(dc, 1e-12);
          if (best_j < 0 || (free_move && !best_free) ||
              (free_move == best_free && rank > best_rank)) {
            best_j = j;
            best_rank = rank;
            best_free = free_move;
          }
        }
      }
      x[j] = 1.0 - x[j];
    }
    if (best_j < 0) break;
    x[best_j] = 1.0 - x[best_j];
    f_cur = model.attack_score(x);
    c_cur = cost.value(x);
    ++iters;
  }
  if (f_cur < 0) return {x, true, model.attack_score(x) + cost.value(x), iters, 0};
  return {x_i, false, attack_objective(model, cost, x_i), iters, 0};
}

AttackResult constrained_continuous(const Model& model, const CostModel& cost,
                                    const FeatureVector& x_i, double budget,
                                    double epsilon, long max_updates) {
  if (cost.value(x_i) > budget)  // no feasible point at all
    return {x_i, false, attack_objective(model, cost, x_i), 0, 0};
  const int n = model.space.dim;
  FeatureVector x = x_i;
  double f_cur = model.attack_score(x);
  long iters = 0;
  std::vector<double> g(n);
  for (long step = 0; step < max_updates; ++step) {
    for (int j = 0; j < n; ++j) g[j] = model.attack_score_gradient(x, j);
    double tau = 1.0;
    bool accepted = false;
    for (int t = 0; t < 30 && !accepted; ++t, tau *= 0.5) {
      FeatureVector cand(n);
      for (int j = 0; j < n; ++j) cand[j] = model.space.clamp(j, x[j] - tau * g[j]);
      if (cost.value(cand) > budget) {
        // pull back toward x_i along the segment; cost is monotone on it
        double lo = 0.0, hi = 1.0;
        for (int b = 0; b < 50; ++b) {
          const double mid = 0.5 * (lo + hi);
          FeatureVector probe(n);
          for (int j = 0; j < n; ++j)
            probe[j] = x_i[j] + mid * (cand[j] - x_i[j]);
          if (cost.value(probe) <= budget)
            lo = mid;
          else
            hi = mid;
        }
        for (int j = 0; j < n; ++j) cand[j] = x_i[j] + lo * (cand[j] - x_i[j]);
      }
      const double f_new = model.attack_score(cand);
      if (f_new < f_cur) {
        const double gain = f_cur - f_new;
        x = std::move(cand);
        f_cur = f_new;
        accepted = true;
        ++iters;
        if (gain <= epsilon * std::max(1.0, std::abs(f_new))) step = max_updates;
      }
    }
    if (!accepted) break;
  }
  if (f_cur < 0) return {x, true, model.attack_score(x) + cost.value(x), iters, 0};
  return {x_i, false, attack_objective(model, cost, x_i), iters, 0};
}

}  // namespace

AttackResult evade_constrained(const Model& model, const CostModel& cost,
                               const FeatureVector& x_i, double budget,
                               double epsilon, long max_updates) {
  model.space.require_member(x_i, "evade_constrained");
  if (budget < 0) throw UsageError("evade_constrained: budget must be >= 0");
  const double q0 = attack_objective(model, cost, x_i);
  if (model.attack_score(x_i) < 0) return {x_i, true, q0, 0, 0};
  if (max_updates <= 0) max_updates = 100L * model.space.dim;
  if (budget == 0.0) return {x_i, false, q0, 0, 0};
  if (model.space.is_binary())
    return constrained_binary(model, cost, x_i, budget, max_updates);
  return constrained_continuous(model, cost, x_i, budget, epsilon, max_updates);
}

AttackResult evade_to_target(const MulticlassModel& models, const CostSpec& cost,
                             const FeatureVector& x_i, int target,
                             const std::vector<int>& targets, int restarts,
                             double epsilon, long max_updates,
                             const SeedStream& seeds,
                             std::uint64_t instance_index) {
  const Model& target_model = models.models[models.label_index(target)];
  target_model.space.require_member(x_i, "evade_to_target");
  const CostModel cost_model(cost, x_i, target_model.space.kind);
  auto in_targets = [&](int label) {
    return std::find(targets.begin(), targets.end(), label) != targets.end();
  };
  const double q0 = objective_value(target_model, true, cost_model, x_i);
  if (in_targets(models.predict(x_i))) return {x_i, true, q0, 0, 0};

  const SeedStream target_seeds(seeds.derive("target", std::uint64_t(target)));
  const SolveOutcome o = solve_impl(
      target_model, true, cost_model, x_i, restarts, epsilon, max_updates,
      target_seeds, instance_index, false,
      [&](const FeatureVector& x) { return in_targets(models.predict(x)); });
  if (o.has_feasible)
    return {o.feasible_x, true, o.feasible_q, o.iterations, o.feasible_index};
  return {x_i, false, q0, o.iterations, 0};
}

AttackResult evade_multiclass(const MulticlassModel& models,
                              const CostSpec& cost, const FeatureVector& x_i,
                              const std::vector<int>& targets, int restarts,
                              double epsilon, long max_updates,
                              const SeedStream& seeds,
                              std::uint64_t instance_index) {
  if (targets.empty()) throw UsageError("evade_multiclass: empty target set");
  std::vector<int> sorted_targets = targets;
  std::sort(sorted_targets.begin(), sorted_targets.end());
  bool have = false;
  AttackResult best;
  long iterations = 0;
  for (int y : sorted_targets) {
    AttackResult r = evade_to_target(models, cost, x_i, y, sorted_targets,
                                     restarts, epsilon, max_updates, seeds,
                                     instance_index);
    iterations += r.iterations;
    if (!have || (r.evaded && !best.evaded) ||
        (r.evaded == best.evaded && r.q_value < best.q_value)) {
      best = std::move(r);
      have = true;
    }
  }
  best.iterations = iterations;
  return best;
}

EvasionOracle::EvasionOracle(OracleConfig cfg, PlugInFn plug_in)
    : cfg_(std::move(cfg)), plug_in_(std::move(plug_in)) {
  if (cfg_.restarts < 0) throw UsageError("oracle restarts must be >= 0");
  if (!(cfg_.epsilon > 0)) throw UsageError("oracle epsilon must be > 0");
  if (cfg_.budget < 0) throw UsageError("oracle budget must be >= 0");
  if (cfg_.strategy == Strategy::PlugIn && !plug_in_)
    throw UsageError("plug-in strategy requires a callable");
}

AttackResult EvasionOracle::evade(const Model& model,
                                  const FeatureVector& x_i) const {
  const CostModel cost(cfg_.cost, x_i, model.space.kind);
  const SeedStream seeds(cfg_.seed);
  const std::uint64_t instance_index = content_key(x_i);
  switch (cfg_.strategy) {
    case Strategy::Identity: {
      const double q0 = attack_objective(model, cost, x_i);
      return {x_i, model.attack_score(x_i) < 0, q0, 0, 0};
    }
    case Strategy::CoordinateGreedy:
      return evade_with_restarts(model, cost, x_i, cfg_.restarts, cfg_.epsilon,
                                 cfg_.max_updates, seeds, instance_index, false);
    case Strategy::ConvexDescent:
      return evade_with_restarts(model, cost, x_i, cfg_.restarts, cfg_.epsilon,
                                 cfg_.max_updates, seeds, instance_index, true);
    case Strategy::Constrained:
      return evade_constrained(model, cost, x_i, cfg_.budget, cfg_.epsilon,
                               cfg_.max_updates);
    case Strategy::PlugIn: {
      const double q0 = attack_objective(model, cost, x_i);
      if (model.attack_score(x_i) < 0) return {x_i, true, q0, 0, 0};
      FeatureVector resp = plug_in_(model, x_i);
      if (!model.space.contains(resp))
        throw ContractError(
            "plug-in oracle returned a vector outside the feature space");
      if (model.attack_score(resp) < 0)
        return {resp, true, attack_objective(model, cost, resp), 0, 0};
      return {x_i, false, q0, 0, 0};
    }
    case Strategy::MultiTarget:
      throw UsageError("multi-target strategy requires a multi-class model");
  }
  throw ContractError("evade: unknown strategy");
}

AttackResult EvasionOracle::evade_multiclass(const MulticlassModel& models,
                                             const FeatureVector& x_i) const {
  const SeedStream seeds(cfg_.seed);
  const std::uint64_t instance_index = content_key(x_i);
  if (cfg_.strategy == Strategy::Identity) {
    const Model& first = models.models.at(0);
    const CostModel cost(cfg_.cost, x_i, first.space.kind);
    const int label = models.predict(x_i);
    const bool in_t = std::find(cfg_.targets.begin(), cfg_.targets.end(),
                                label) != cfg_.targets.end();
    return {x_i, in_t, cost.value(x_i), 0, 0};
  }
  if (cfg_.strategy != Strategy::MultiTarget)
    throw UsageError("multi-class attacks use the multi_target strategy");
  return rad::evade_multiclass(models, cfg_.cost, x_i, cfg_.targets,
                               cfg_.restarts, cfg_.epsilon, cfg_.max_updates,
                               seeds, instance_index);
}

PlugInFn make_process_oracle(std::string command, std::string scratch_dir) {
  return [command = std::move(command), scratch_dir = std::move(scratch_dir)](
             const Model& model, const FeatureVector& x) -> FeatureVector {
    const std::string model_path = scratch_dir + "/oracle_model.json";
    const std::string request_path = scratch_dir + "/oracle_request.txt";
    const std::string response_path = scratch_dir + "/oracle_response.txt";
    save_model(model_path, model);
    {
      std::ofstream req(request_path);
      if (!req) throw DataError("cannot write oracle request file");
      req << model_path << "\n";
      for (double v : x) req << format_real(v) << "\n";
    }
    const std::string cmd = command + " " + request_path + " " + response_path;
    const int rc = std::system(cmd.c_str());
    if (rc != 0)
      throw DataError("plug-in oracle command failed with status " +
                      std::to_string(rc));
    std::ifstream resp(response_path);
    if (!resp) throw DataError("plug-in oracle produced no response file");
    FeatureVector out;
    std::string line;
    while (std::getline(resp, line)) {
      if (line.empty()) continue;
      out.push_back(parse_real(line));
    }
    return out;
  };
}

}  // namespace rad
