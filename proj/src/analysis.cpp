#include "rad/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rad/retraining.hpp"

namespace rad {

RiskReport standard_risk(const Model& model, const Dataset& data, LossKind loss,
                         double alpha, int p_norm) {
  RiskReport r;
  r.loss = loss;
  for (const auto& inst : data.instances) {
    const double l = pointwise_loss(loss, model.score(inst.x), inst.y);
    (data.is_malicious(inst.y) ? r.malicious_loss : r.benign_loss) += l;
  }
  r.regularizer = alpha * model.param_norm(p_norm);
  return r;
}

RiskReport adversarial_risk(const Model& model, const Dataset& data,
                            const EvasionOracle& oracle, LossKind loss,
                            double alpha, int p_norm) {
  RiskReport r;
  r.loss = loss;
  const auto bad = data.malicious_indices();
  std::vector<double> mal_losses(bad.size(), 0.0);
  parallel_for(bad.size(), [&](std::size_t k) {
    const auto& inst = data.instances[bad[k]];
    const AttackResult a = oracle.evade(model, inst.x);
    mal_losses[k] = pointwise_loss(loss, model.score(a.x_out), inst.y);
  });
  for (double l : mal_losses) r.malicious_loss += l;
  for (const auto& inst : data.instances)
    if (!data.is_malicious(inst.y))
      r.benign_loss += pointwise_loss(loss, model.score(inst.x), inst.y);
  r.regularizer = alpha * model.param_norm(p_norm);
  return r;
}

RiskReport retrained_risk(const Model& model, const Dataset& data,
                          const std::vector<FeatureVector>& anchors,
                          const std::vector<std::vector<FeatureVector>>& n_sets,
                          LossKind loss, double alpha, int p_norm,
                          int dedup_digits) {
  if (anchors.size() != n_sets.size())
    throw UsageError("retrained_risk: anchors and N sets must align");
  for (std::size_t i = 0; i < n_sets.size(); ++i) {
    std::set<std::vector<long long>> seen;
    seen.insert(dedup_key(anchors[i], dedup_digits));
    for (const auto& x : n_sets[i])
      if (!seen.insert(dedup_key(x, dedup_digits)).second)
        throw UsageError(
            "retrained_risk: added set contains a duplicate of its anchor or "
            "of another added vector");
  }
  RiskReport r = standard_risk(model, data, loss, alpha, p_norm);
  for (const auto& set : n_sets)
    for (const auto& x : set)
      r.malicious_loss += pointwise_loss(loss, model.score(x), +1);
  return r;
}

Prop31Report check_prop31(const Model& model, const Dataset& data,
                          const std::vector<FeatureVector>& anchors,
                          const std::vector<std::vector<FeatureVector>>& n_sets,
                          const EvasionOracle& oracle, LossKind loss,
                          double alpha, int p_norm, bool clean_termination) {
  Prop31Report rep;
  if (!clean_termination) {
    rep.status = BoundStatus::Inconclusive;
    return rep;
  }
  rep.adversarial =
      adversarial_risk(model, data, oracle, loss, alpha, p_norm).total();
  rep.retrained =
      retrained_risk(model, data, anchors, n_sets, loss, alpha, p_norm).total();
  rep.margin = rep.retrained - rep.adversarial;
  rep.status =
      rep.adversarial <= rep.retrained ? BoundStatus::Certified : BoundStatus::Violated;
  return rep;
}

double delta_bound(long malicious_count, double p_l, double p) {
  if (!(p > 0.0 && p < 1.0)) throw UsageError("delta_bound: p must lie in (0,1)");
  if (p_l < 0.0 || p_l > 1.0)
    throw UsageError("delta_bound: p_L must lie in [0,1]");
  if (malicious_count < 0)
    throw UsageError("delta_bound: malicious count must be >= 0");
  const double lp = std::log(p);
  const double b = double(malicious_count);
  return b * p_l + (std::sqrt(lp * lp - 8.0 * b * p_l * lp) - lp) / 2.0;
}

const char* reference_name(ReferenceKind k) {
  switch (k) {
    case ReferenceKind::ExhaustiveBinary: return "exhaustive_binary";
    case ReferenceKind::GridContinuous: return "grid_continuous";
    case ReferenceKind::ConvexClosedForm: return "convex_closed_form";
  }
  return "?";
}

ReferenceKind reference_from_name(std::string_view name) {
  if (name == "exhaustive_binary") return ReferenceKind::ExhaustiveBinary;
  if (name == "grid_continuous") return ReferenceKind::GridContinuous;
  if (name == "convex_closed_form") return ReferenceKind::ConvexClosedForm;
  throw UsageError("unknown reference kind: " + std::string(name));
}

namespace {

BruteForceResult exhaustive_binary(const Model& model, const CostModel& cost) {
  const int n = model.space.dim;
  if (n > 20)
    throw UsageError("exhaustive reference limited to binary spaces with n <= 20");
  BruteForceResult best;
  FeatureVector x(n, 0.0);
  const std::uint64_t total = 1ULL << n;
  for (std::uint64_t bits = 0; bits < total; ++bits) {
    for (int j = 0; j < n; ++j) x[j] = (bits >> j) & 1ULL ? 1.0 : 0.0;
    const double q = model.attack_score(x) + cost.value(x);
    if (bits == 0 || q < best.q) {
      best.q = q;
      best.x = x;
    }
  }
  return best;
}

BruteForceResult grid_continuous(const Model& model, const CostModel& cost,
                                 const FeatureVector& x_i,
                                 const ReferenceSpec& ref) {
  const int n = model.space.dim;
  if (n > 3) throw UsageError("grid reference limited to dim <= 3");
  if (ref.grid_points < 2) throw UsageError("grid needs at least 2 points per axis");
  std::vector<std::vector<double>> axes(n);
  for (int j = 0; j < n; ++j) {
    const double lo = std::max(model.space.lo[j], x_i[j] - ref.grid_radius);
    const double hi = std::min(model.space.hi[j], x_i[j] + ref.grid_radius);
    for (int t = 0; t < ref.grid_points; ++t)
      axes[j].push_back(lo + (hi - lo) * t / double(ref.grid_points - 1));
  }
  BruteForceResult best;
  FeatureVector x(n, 0.0);
  std::vector<int> idx(n, 0);
  bool first = true;
  while (true) {
    for (int j = 0; j < n; ++j) x[j] = axes[j][idx[j]];
    const double q = model.attack_score(x) + cost.value(x);
    if (first || q < best.q) {
      best.q = q;
      best.x = x;
      first = false;
    }
    int j = 0;
    while (j < n && ++idx[j] == ref.grid_points) idx[j++] = 0;
    if (j == n) break;
  }
  return best;
}

BruteForceResult convex_closed_form(const Model& model, const CostModel& cost,
                                    const FeatureVector& x_i) {
  if (cost.spec().kind != CostKind::Quadratic)
    throw UsageError("closed-form reference needs the quadratic cost");
  const LinearParams* lin = nullptr;
  std::vector<double> w;
  if (model.tag == Learner::LinearSVM) {
    lin = &std::get<LinearParams>(model.params);
    w = lin->w;
  } else if (model.tag == Learner::KernelSVM &&
             model.spec.kernel.kind == KernelKind::Linear) {
    const auto& p = std::get<KernelSvmParams>(model.params);
    w.assign(model.space.dim, 0.0);
    for (std::size_t s = 0; s < p.alpha.size(); ++s)
      for (int j = 0; j < model.space.dim; ++j)
        w[j] += p.alpha[s] * p.sv_y[s] * p.sv_x[s][j];
  } else {
    throw UsageError("closed-form reference needs a linear decision function");
  }
  // grad Q = w + lambda (x - x_i) = 0  =>  x* = x_i - w / lambda
  BruteForceResult best;
  best.x.resize(model.space.dim);
  for (int j = 0; j < model.space.dim; ++j)
    best.x[j] = model.space.clamp(j, x_i[j] - w[j] / cost.spec().lambda);
  best.q = model.attack_score(best.x) + cost.value(best.x);
  return best;
}

}  // namespace

BruteForceResult brute_force_evade(const Model& model, const CostModel& cost,
                                   const FeatureVector& x_i,
                                   const ReferenceSpec& reference) {
  model.space.require_member(x_i, "brute_force_evade");
  switch (reference.kind) {
    case ReferenceKind::ExhaustiveBinary:
      if (!model.space.is_binary())
        throw UsageError("exhaustive reference requires a binary space");
      return exhaustive_binary(model, cost);
    case ReferenceKind::GridContinuous:
      if (model.space.is_binary())
        throw UsageError("grid reference requires a continuous space");
      return grid_continuous(model, cost, x_i, reference);
    case ReferenceKind::ConvexClosedForm:
      return convex_closed_form(model, cost, x_i);
  }
  throw ContractError("brute_force_evade: unknown reference kind");
}

PlEstimate estimate_pl(const std::vector<FeatureVector>& instances,
                       const Model& model, const CostSpec& cost, int restarts,
                       const ReferenceSpec& reference, long trials,
                       std::uint64_t seed, double epsilon, long max_updates) {
  if (instances.empty()) throw UsageError("estimate_pl: no instances");
  if (trials <= 0) throw UsageError("estimate_pl: trials must be > 0");
  PlEstimate est;
  est.restarts = restarts;
  est.trials = trials;
  est.reference = reference.kind;
  est.tolerance = 1e-6;

  // one reference optimum per distinct instance, reused across trials
  std::vector<double> ref_q(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const CostModel cm(cost, instances[i], model.space.kind);
    ref_q[i] = brute_force_evade(model, cm, instances[i], reference).q;
  }

  const SeedStream seeds(seed);
  std::vector<char> failed(trials, 0);
  parallel_for(std::size_t(trials), [&](std::size_t t) {
    const std::size_t i = t % instances.size();
    const CostModel cm(cost, instances[i], model.space.kind);
    const SeedStream trial_seeds(seeds.derive("pl-trial", t));
    const SolveOutcome o = solve_with_restarts(model, cm, instances[i], restarts,
                                               epsilon, max_updates, trial_seeds,
                                               t, false);
    failed[t] = o.best_q > ref_q[i] + est.tolerance ? 1 : 0;
  });
  for (char f : failed) est.failures += f;
  est.p_l = double(est.failures) / double(est.trials);
  return est;
}

}  // namespace rad
