#pragma once

#include "rad/evasion.hpp"
#include "rad/learners.hpp"

namespace rad {

struct RiskReport {
  LossKind loss = LossKind::ZeroOne;
  double benign_loss = 0.0;
  double malicious_loss = 0.0;  // includes added instances for retrained risk
  double regularizer = 0.0;

  double total() const { return benign_loss + malicious_loss + regularizer; }
};

/// Regularized empirical risk over the dataset as-is.
RiskReport standard_risk(const Model& model, const Dataset& data, LossKind loss,
                         double alpha, int p_norm);

/// Risk with every malicious instance replaced by its oracle response.
RiskReport adversarial_risk(const Model& model, const Dataset& data,
                            const EvasionOracle& oracle, LossKind loss,
                            double alpha, int p_norm);

/// Risk over the dataset plus the added sets N_i; each added vector carries
/// the malicious label. Each N_i must be internally duplicate-free and must
/// not contain its own anchor under the duplicate predicate.
RiskReport retrained_risk(const Model& model, const Dataset& data,
                          const std::vector<FeatureVector>& anchors,
                          const std::vector<std::vector<FeatureVector>>& n_sets,
                          LossKind loss, double alpha, int p_norm,
                          int dedup_digits = 9);

enum class BoundStatus { Certified, Violated, Inconclusive };

struct Prop31Report {
  BoundStatus status = BoundStatus::Inconclusive;
  double margin = 0.0;  // retrained - adversarial
  double adversarial = 0.0;
  double retrained = 0.0;
};

/// After a clean retraining run, the adversarial risk can never exceed the
/// augmented-set risk. Dirty termination yields Inconclusive, not failure.
Prop31Report check_prop31(const Model& model, const Dataset& data,
                          const std::vector<FeatureVector>& anchors,
                          const std::vector<std::vector<FeatureVector>>& n_sets,
                          const EvasionOracle& oracle, LossKind loss,
                          double alpha, int p_norm, bool clean_termination);

/// delta(p) = B*p_L + (sqrt(log^2 p - 8*B*p_L*log p) - log p) / 2, natural log.
double delta_bound(long malicious_count, double p_l, double p);

enum class ReferenceKind { ExhaustiveBinary, GridContinuous, ConvexClosedForm };

struct ReferenceSpec {
  ReferenceKind kind = ReferenceKind::ExhaustiveBinary;
  int grid_points = 41;      // per axis, GridContinuous
  double grid_radius = 2.0;  // half-width of the grid box around x_i
};

struct BruteForceResult {
  FeatureVector x;
  double q = 0.0;
};

/// Global minimizer of Q by exhaustive enumeration (binary, n <= 20), dense
/// grid (continuous, dim <= 3, grid-certified only), or the closed form for
/// a linear score with quadratic cost.
BruteForceResult brute_force_evade(const Model& model, const CostModel& cost,
                                   const FeatureVector& x_i,
                                   const ReferenceSpec& reference);

struct PlEstimate {
  int restarts = 0;
  long trials = 0;
  long failures = 0;
  double p_l = 0.0;
  ReferenceKind reference = ReferenceKind::ExhaustiveBinary;
  double tolerance = 1e-6;
};

/// Fraction of seeded trials where the multi-start solver's best Q stays
/// above the reference optimum by more than the tolerance.
PlEstimate estimate_pl(const std::vector<FeatureVector>& instances,
                       const Model& model, const CostSpec& cost, int restarts,
                       const ReferenceSpec& reference, long trials,
                       std::uint64_t seed, double epsilon = 1e-6,
                       long max_updates = 0);

const char* reference_name(ReferenceKind k);
ReferenceKind reference_from_name(std::string_view name);

}  // namespace rad
