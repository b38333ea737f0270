#include "rad/retraining.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace rad {

const char* retrain_mode_name(RetrainMode m) {
  return m == RetrainMode::FullRetrain ? "full" : "online";
}

RetrainMode retrain_mode_from_name(std::string_view name) {
  if (name == "full") return RetrainMode::FullRetrain;
  if (name == "online") return RetrainMode::OnlineSgd;
  throw UsageError("unknown retrain mode: " + std::string(name));
}

long RadTrace::total_added() const {
  long t = 0;
  for (const auto& r : records) t += r.added;
  return t;
}

std::vector<long long> dedup_key(const FeatureVector& x, int digits) {
  if (digits < 0 || digits > 15) throw UsageError("dedup digits must be in [0,15]");
  const double scale = std::pow(10.0, digits);
  std::vector<long long> key;
  key.reserve(x.size());
  for (double v : x) {
    const double scaled = v * scale;
    if (!(std::abs(scaled) < 9.0e18))
      throw DataError("feature value too large for the duplicate predicate");
    key.push_back(std::llround(scaled));
  }
  return key;
}

// ---------------------------------------------------------------------------
// k-means over malicious instances
// ---------------------------------------------------------------------------

namespace {

double sq_dist(const FeatureVector& a, const FeatureVector& b) {
  double s = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

}  // namespace

std::vector<FeatureVector> cluster_malicious(const Dataset& data, int k,
                                             std::uint64_t seed) {
  const auto idx = data.malicious_indices();
  if (k < 1) throw UsageError("cluster count must be >= 1");
  if (std::size_t(k) > idx.size())
    throw UsageError("cluster count exceeds the number of malicious instances");
  std::vector<FeatureVector> points;
  points.reserve(idx.size());
  for (auto i : idx) points.push_back(data.instances[i].x);
  const std::size_t m = points.size();
  const int n = data.space.dim;

  // k-means++ seeding
  SeedStream seeds(seed);
  auto rng = seeds.substream("kmeans");
  std::vector<FeatureVector> centers;
  std::vector<bool> chosen(m, false);
  {
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    const std::size_t first = pick(rng);
    centers.push_back(points[first]);
    chosen[first] = true;
  }
  std::vector<double> dist(m);
  while (centers.size() < std::size_t(k)) {
    double total = 0;
    for (std::size_t i = 0; i < m; ++i) {
      double d = sq_dist(points[i], centers[0]);
      for (std::size_t c = 1; c < centers.size(); ++c)
        d = std::min(d, sq_dist(points[i], centers[c]));
      dist[i] = d;
      total += d;
    }
    std::size_t next = m;
    if (total > 0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng), acc = 0;
      for (std::size_t i = 0; i < m; ++i) {
        acc += dist[i];
        if (r <= acc) {
          next = i;
          break;
        }
      }
      if (next == m) next = m - 1;
    } else {
      // all remaining mass is on duplicates; take the first unchosen point
      for (std::size_t i = 0; i < m; ++i)
        if (!chosen[i]) {
          next = i;
          break;
        }
      if (next == m) next = 0;
    }
    chosen[next] = true;
    centers.push_back(points[next]);
  }

  // Lloyd iterations
  std::vector<int> assign(m, -1);
  for (int round = 0; round < 100; ++round) {
    bool changed = false;
    for (std::size_t i = 0; i < m; ++i) {
      int best = 0;
      double best_d = sq_dist(points[i], centers[0]);
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(points[i], centers[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed && round > 0) break;
    std::vector<FeatureVector> sums(k, FeatureVector(n, 0.0));
    std::vector<long> counts(k, 0);
    for (std::size_t i = 0; i < m; ++i) {
      counts[assign[i]]++;
      for (int j = 0; j < n; ++j) sums[assign[i]][j] += points[i][j];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // reseed an empty cluster with the point farthest from its center
        std::size_t far = 0;
        double far_d = -1;
        for (std::size_t i = 0; i < m; ++i) {
          const double d = sq_dist(points[i], centers[assign[i]]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers[c] = points[far];
        assign[far] = c;
        continue;
      }
      for (int j = 0; j < n; ++j) centers[c][j] = sums[c][j] / double(counts[c]);
    }
  }

  if (data.space.is_binary())
    for (auto& c : centers)
      for (auto& v : c) v = v < 0.5 ? 0.0 : 1.0;
  return centers;
}

// ---------------------------------------------------------------------------
// risks under the 0/1 loss, recorded in the trace
// ---------------------------------------------------------------------------

namespace {

double zero_one_risk_binary(const Model& model, const Dataset& data,
                            double alpha, int p_norm) {
  double s = 0;
  for (const auto& inst : data.instances)
    s += pointwise_loss(LossKind::ZeroOne, model.score(inst.x), inst.y);
  return s + alpha * model.param_norm(p_norm);
}

double adversarial_risk_from_results(const Model& model, const Dataset& data,
                                     const std::vector<FeatureVector>& anchors,
                                     const std::vector<AttackResult>& results,
                                     double alpha, int p_norm) {
  double s = 0;
  for (const auto& inst : data.instances)
    if (!data.is_malicious(inst.y))
      s += pointwise_loss(LossKind::ZeroOne, model.score(inst.x), inst.y);
  (void)anchors;
  for (const auto& r : results)
    s += pointwise_loss(LossKind::ZeroOne, model.score(r.x_out), +1);
  return s + alpha * model.param_norm(p_norm);
}

double multiclass_param_norm(const MulticlassModel& ms, int p) {
  double s = 0;
  for (const auto& m : ms.models) s += m.param_norm(p);
  return s;
}

double zero_one_risk_multiclass(const MulticlassModel& ms, const Dataset& data,
                                double alpha, int p_norm) {
  double s = 0;
  for (const auto& inst : data.instances)
    s += ms.predict(inst.x) == inst.y ? 0.0 : 1.0;
  return s + alpha * multiclass_param_norm(ms, p_norm);
}

}  // namespace

// ---------------------------------------------------------------------------
// RAD (binary)
// ---------------------------------------------------------------------------

RadResult rad_train(const LearnerSpec& spec, const TrainConfig& train_cfg,
                    const EvasionOracle& oracle, const Dataset& data,
                    const RadConfig& rad_cfg) {
  if (rad_cfg.max_iterations < 1)
    throw UsageError("rad: max_iterations must be >= 1");
  RadResult res;
  res.augmented = data;

  if (rad_cfg.clusters > 0) {
    res.trace.clustered = true;
    res.anchors = cluster_malicious(
        data, rad_cfg.clusters, SeedStream(rad_cfg.seed).derive("cluster"));
  } else {
    for (auto i : data.malicious_indices())
      res.anchors.push_back(data.instances[i].x);
  }
  res.n_sets.assign(res.anchors.size(), {});

  if (res.anchors.empty()) {
    // nothing to attack; plain training
    res.model = train(spec, data, train_cfg);
    res.trace.terminated_clean = true;
    res.trace.records.push_back(
        {1, 0, "iter-1",
         zero_one_risk_binary(res.model, data, train_cfg.alpha, train_cfg.p_norm),
         zero_one_risk_binary(res.model, data, train_cfg.alpha, train_cfg.p_norm)});
    return res;
  }

  std::vector<std::vector<long long>> anchor_keys;
  for (const auto& a : res.anchors)
    anchor_keys.push_back(dedup_key(a, rad_cfg.dedup_digits));
  std::vector<std::set<std::vector<long long>>> n_keys(res.anchors.size());

  const SeedStream seeds(rad_cfg.seed);
  long online_t = 0;
  std::vector<LabeledInstance> last_new;

  for (int iter = 1; iter <= rad_cfg.max_iterations; ++iter) {
    if (iter == 1 || rad_cfg.mode == RetrainMode::FullRetrain) {
      res.model = train(spec, res.augmented, train_cfg);
    } else {
      // warm start: absorb the newly added instances, then one rebalancing
      // pass over the full augmented set (NaiveBayes counts D already)
      const double alpha_step =
          train_cfg.alpha / double(res.augmented.instances.size());
      if (spec.kind == Learner::NaiveBayes) {
        for (const auto& inst : last_new)
          res.model = train_online_step(res.model, inst, 1.0, 0.0, 2);
      } else {
        auto rng = seeds.substream("online", std::uint64_t(iter));
        for (int pass = 0; pass < std::max(1, train_cfg.epochs); ++pass) {
          std::vector<std::size_t> order(last_new.size());
          std::iota(order.begin(), order.end(), 0);
          std::shuffle(order.begin(), order.end(), rng);
          for (auto oi : order) {
            const double eta =
                train_cfg.eta0 / (1.0 + train_cfg.decay * double(online_t++));
            res.model = train_online_step(res.model, last_new[oi], eta,
                                          alpha_step, train_cfg.p_norm);
          }
        }
        std::vector<std::size_t> order(res.augmented.instances.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (auto oi : order) {
          const double eta =
              train_cfg.eta0 / (1.0 + train_cfg.decay * double(online_t++));
          res.model = train_online_step(res.model, res.augmented.instances[oi],
                                        eta, alpha_step, train_cfg.p_norm);
        }
      }
    }

    std::vector<AttackResult> results(res.anchors.size());
    const Model& model_ref = res.model;
    parallel_for(res.anchors.size(), [&](std::size_t i) {
      results[i] = oracle.evade(model_ref, res.anchors[i]);
    });

    last_new.clear();
    long added = 0;
    for (std::size_t i = 0; i < res.anchors.size(); ++i) {
      const FeatureVector& x_new = results[i].x_out;
      auto key = dedup_key(x_new, rad_cfg.dedup_digits);
      if (key == anchor_keys[i]) continue;  // the anchor itself is already in D
      if (n_keys[i].count(key)) continue;
      n_keys[i].insert(std::move(key));
      res.n_sets[i].push_back(x_new);
      res.augmented.instances.push_back({x_new, +1});
      last_new.push_back({x_new, +1});
      ++added;
    }

    RadIterationRecord rec;
    rec.iteration = iter;
    rec.added = added;
    rec.model_ref = "iter-" + std::to_string(iter);
    rec.retrained_risk = zero_one_risk_binary(res.model, res.augmented,
                                              train_cfg.alpha, train_cfg.p_norm);
    rec.adversarial_risk = adversarial_risk_from_results(
        res.model, data, res.anchors, results, train_cfg.alpha, train_cfg.p_norm);
    res.trace.records.push_back(std::move(rec));

    if (added == 0) {
      res.trace.terminated_clean = true;
      break;
    }
  }
  if (!res.trace.terminated_clean)
    res.trace.warning =
        "iteration cap reached before clean termination; the retrained-risk "
        "bound is not certified";
  return res;
}

// ---------------------------------------------------------------------------
// RAD (multi-class, one-vs-all)
// ---------------------------------------------------------------------------

RadMulticlassResult rad_train_multiclass(const LearnerSpec& spec,
                                         const TrainConfig& train_cfg,
                                         const EvasionOracle& oracle,
                                         const Dataset& data,
                                         const RadConfig& rad_cfg) {
  if (rad_cfg.max_iterations < 1)
    throw UsageError("rad: max_iterations must be >= 1");
  if (rad_cfg.clusters > 0)
    throw UsageError("clustering is not supported for multi-class runs");
  if (data.malicious_labels.empty() || oracle.config().targets.empty())
    throw UsageError("multi-class rad needs non-empty malicious and target sets");
  for (int m : data.malicious_labels)
    for (int t : oracle.config().targets)
      if (m == t)
        throw UsageError("malicious and target label sets must be disjoint");

  RadMulticlassResult res;
  res.augmented = data;
  for (auto i : data.malicious_indices()) {
    res.anchors.push_back(data.instances[i].x);
    res.anchor_labels.push_back(data.instances[i].y);
  }
  res.n_sets.assign(res.anchors.size(), {});

  if (res.anchors.empty()) {
    res.model = train_multiclass(spec, data, train_cfg);
    res.trace.terminated_clean = true;
    const double risk = zero_one_risk_multiclass(res.model, data,
                                                 train_cfg.alpha, train_cfg.p_norm);
    res.trace.records.push_back({1, 0, "iter-1", risk, risk});
    return res;
  }

  std::vector<std::vector<long long>> anchor_keys;
  for (const auto& a : res.anchors)
    anchor_keys.push_back(dedup_key(a, rad_cfg.dedup_digits));
  std::vector<std::set<std::vector<long long>>> n_keys(res.anchors.size());

  for (int iter = 1; iter <= rad_cfg.max_iterations; ++iter) {
    res.model = train_multiclass(spec, res.augmented, train_cfg);

    std::vector<AttackResult> results(res.anchors.size());
    const MulticlassModel& model_ref = res.model;
    parallel_for(res.anchors.size(), [&](std::size_t i) {
      results[i] = oracle.evade_multiclass(model_ref, res.anchors[i]);
    });

    long added = 0;
    for (std::size_t i = 0; i < res.anchors.size(); ++i) {
      const FeatureVector& x_new = results[i].x_out;
      auto key = dedup_key(x_new, rad_cfg.dedup_digits);
      if (key == anchor_keys[i]) continue;
      if (n_keys[i].count(key)) continue;
      n_keys[i].insert(std::move(key));
      res.n_sets[i].push_back(x_new);
      res.augmented.instances.push_back({x_new, res.anchor_labels[i]});
      ++added;
    }

    RadIterationRecord rec;
    rec.iteration = iter;
    rec.added = added;
    rec.model_ref = "iter-" + std::to_string(iter);
    rec.retrained_risk = zero_one_risk_multiclass(res.model, res.augmented,
                                                  train_cfg.alpha, train_cfg.p_norm);
    double adv = 0;
    for (const auto& inst : data.instances)
      if (!data.is_malicious(inst.y))
        adv += res.model.predict(inst.x) == inst.y ? 0.0 : 1.0;
    for (std::size_t i = 0; i < res.anchors.size(); ++i)
      adv += res.model.predict(results[i].x_out) == res.anchor_labels[i] ? 0.0 : 1.0;
    rec.adversarial_risk =
        adv + train_cfg.alpha * multiclass_param_norm(res.model, train_cfg.p_norm);
    res.trace.records.push_back(std::move(rec));

    if (added == 0) {
      res.trace.terminated_clean = true;
      break;
    }
  }
  if (!res.trace.terminated_clean)
    res.trace.warning =
        "iteration cap reached before clean termination; the retrained-risk "
        "bound is not certified";
  return res;
}

// ---------------------------------------------------------------------------
// trace persistence
// ---------------------------------------------------------------------------

std::string serialize_trace(const RadTrace& trace) {
  std::ostringstream out;
  out << "# rad trace v1\n";
  out << "clean=" << (trace.terminated_clean ? 1 : 0) << "\n";
  out << "clustered=" << (trace.clustered ? 1 : 0) << "\n";
  for (const auto& r : trace.records)
    out << "iter=" << r.iteration << " added=" << r.added << " model="
        << r.model_ref << " retrained_risk=" << format_real(r.retrained_risk)
        << " adversarial_risk=" << format_real(r.adversarial_risk) << "\n";
  if (!trace.warning.empty()) out << "warning=" << trace.warning << "\n";
  return out.str();
}

RadTrace deserialize_trace(const std::string& text) {
  RadTrace trace;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("clean=", 0) == 0) {
      trace.terminated_clean = line.substr(6) == "1";
    } else if (line.rfind("clustered=", 0) == 0) {
      trace.clustered = line.substr(10) == "1";
    } else if (line.rfind("warning=", 0) == 0) {
      trace.warning = line.substr(8);
    } else if (line.rfind("iter=", 0) == 0) {
      RadIterationRecord r;
      std::istringstream ls(line);
      std::string tok;
      while (ls >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw DataError("bad trace line: " + line);
        const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
        if (k == "iter")
          r.iteration = std::stoi(v);
        else if (k == "added")
          r.added = std::stol(v);
        else if (k == "model")
          r.model_ref = v;
        else if (k == "retrained_risk")
          r.retrained_risk = parse_real(v);
        else if (k == "adversarial_risk")
          r.adversarial_risk = parse_real(v);
        else
          throw DataError("unknown trace field: " + k);
      }
      trace.records.push_back(std::move(r));
    } else {
      throw DataError("unrecognized trace line: " + line);
    }
  }
  return trace;
}

}  // namespace rad
