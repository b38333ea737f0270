#pragma once

#include <functional>

#include "rad/core.hpp"
#include "rad/costs.hpp"
#include "rad/learners.hpp"

namespace rad {

enum class Strategy {
  CoordinateGreedy,
  ConvexDescent,
  Constrained,
  MultiTarget,
  Identity,
  PlugIn
};

const char* strategy_name(Strategy s);
Strategy strategy_from_name(std::string_view name);

struct AttackResult {
  FeatureVector x_out;
  bool evaded = false;   // equivalent to f(x_out) < 0
  double q_value = 0.0;  // Q(x_out)
  long iterations = 0;   // coordinate updates spent across all starts
  int winner_restart = 0;  // 0 is the start from x_i itself
};

/// External oracle hook: maps (model, malicious instance) to the vector the
/// attacker submits. Must return a member of the model's feature space.
using PlugInFn =
    std::function<FeatureVector(const Model&, const FeatureVector&)>;

struct OracleConfig {
  Strategy strategy = Strategy::CoordinateGreedy;
  CostSpec cost{};
  int restarts = 0;      // L random starts in addition to x_i
  double epsilon = 1e-6;
  long max_updates = 0;  // 0 means 100 * dim
  double budget = 0.0;   // Constrained only
  std::vector<int> targets{};  // MultiTarget only
  std::uint64_t seed = 1;
};

/// Q(x) = f(x) + c(x, x_i), the relaxed attack objective.
double attack_objective(const Model& model, const CostModel& cost,
                        const FeatureVector& x);

struct CgResult {
  FeatureVector x;
  std::vector<double> q_trace;  // Q at the start, then after every update
};

/// CoordinateGreedy local search: uniformly random coordinate choice,
/// greedy per-coordinate improvement, windowed diminishing-improvement stop.
CgResult coordinate_greedy(const Model& model, const CostModel& cost,
                           const FeatureVector& x_start, double epsilon,
                           long max_updates, std::mt19937_64& rng);

/// Deterministic round-robin coordinate descent; converges to the unique
/// minimizer when the objective is convex on a continuous space.
CgResult convex_descent(const Model& model, const CostModel& cost,
                        const FeatureVector& x_start, double epsilon,
                        long max_updates);

/// Single backtracking descent step on coordinate j, clipped to bounds.
/// Never increases Q; returns x unchanged when no improving step exists.
FeatureVector greedy_improve_continuous(const Model& model,
                                        const CostModel& cost,
                                        const FeatureVector& x, int j);

/// Sets coordinate j to whichever of {0,1} minimizes Q; ties keep the
/// current value.
FeatureVector greedy_improve_discrete(const Model& model, const CostModel& cost,
                                      const FeatureVector& x, int j);

/// Raw multi-start solver outcome, before the keep-or-return wrapper.
struct SolveOutcome {
  FeatureVector best_x;  // least-Q candidate over all starts
  double best_q = 0.0;
  int best_index = 0;
  bool has_feasible = false;  // any candidate with f < 0
  FeatureVector feasible_x;   // least-Q candidate among those
  double feasible_q = 0.0;
  int feasible_index = 0;
  long iterations = 0;
};

SolveOutcome solve_with_restarts(const Model& model, const CostModel& cost,
                                 const FeatureVector& x_i, int restarts,
                                 double epsilon, long max_updates,
                                 const SeedStream& seeds,
                                 std::uint64_t instance_index,
                                 bool deterministic_sweep = false);

/// CG from x_i plus L seeded random starts, wrapped in the oracle semantics:
/// return x_i when it already evades or when no found point both evades and
/// costs no more than staying put; otherwise the least-Q evading candidate.
AttackResult evade_with_restarts(const Model& model, const CostModel& cost,
                                 const FeatureVector& x_i, int restarts,
                                 double epsilon, long max_updates,
                                 const SeedStream& seeds,
                                 std::uint64_t instance_index,
                                 bool deterministic_sweep = false);

/// Budgeted attack: minimize f subject to c(x, x_i) <= B. Binary spaces use
/// greedy best-improvement-per-unit-cost flips; continuous spaces use
/// projected gradient descent with bisection onto the cost ball.
AttackResult evade_constrained(const Model& model, const CostModel& cost,
                               const FeatureVector& x_i, double budget,
                               double epsilon, long max_updates);

/// One per-target run of the multi-class attack (objective -f(x,y) + c).
AttackResult evade_to_target(const MulticlassModel& models, const CostSpec& cost,
                             const FeatureVector& x_i, int target,
                             const std::vector<int>& targets, int restarts,
                             double epsilon, long max_updates,
                             const SeedStream& seeds,
                             std::uint64_t instance_index);

/// Best of the per-target runs whose result lands (argmax) inside T.
AttackResult evade_multiclass(const MulticlassModel& models,
                              const CostSpec& cost, const FeatureVector& x_i,
                              const std::vector<int>& targets, int restarts,
                              double epsilon, long max_updates,
                              const SeedStream& seeds,
                              std::uint64_t instance_index);

/// Configured attacker strategy. Substreams derive from the seed and the
/// instance's content, so evade() is a pure function of (model, x_i): any
/// caller, any ordering, and any concurrency yield the same answer.
class EvasionOracle {
 public:
  EvasionOracle() = default;
  explicit EvasionOracle(OracleConfig cfg, PlugInFn plug_in = nullptr);

  AttackResult evade(const Model& model, const FeatureVector& x_i) const;
  AttackResult evade_multiclass(const MulticlassModel& models,
                                const FeatureVector& x_i) const;

  const OracleConfig& config() const { return cfg_; }

 private:
  OracleConfig cfg_{};
  PlugInFn plug_in_;
};

/// Wraps the line-oriented external process protocol as a PlugInFn.
/// The request file holds the model file path on the first line followed by
/// one feature value per line; the response file holds one value per line.
/// The command is invoked as `command <request> <response>`.
PlugInFn make_process_oracle(std::string command, std::string scratch_dir);

}  // namespace rad
