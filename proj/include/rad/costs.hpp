#pragma once

#include "rad/core.hpp"

namespace rad {

enum class CostKind { Quadratic, L1, Exponential };

const char* cost_name(CostKind kind);
CostKind cost_from_name(std::string_view name);

/// Cost configuration as it appears in experiment configs.
struct CostSpec {
  CostKind kind = CostKind::Quadratic;
  double lambda = 1.0;  // cost sensitivity, > 0
};

/// Attacker modification cost c(x, x_i) anchored at one malicious instance.
///
/// Quadratic:    (lambda/2) * ||x - x_i||_2^2
/// L1:           lambda * ||x - x_i||_1
/// Exponential:  exp(lambda * sqrt(sum_j (x_j - x_ij)^2 + 1))
///
/// The exponential form is e^lambda (not 0) at x = x_i; the offset shifts
/// the attack objective uniformly and cannot move its argmin.
class CostModel {
 public:
  CostModel(CostSpec spec, FeatureVector anchor, SpaceKind space_kind);

  double value(const FeatureVector& x) const;
  double gradient(const FeatureVector& x, int j) const;

  const FeatureVector& anchor() const { return anchor_; }
  const CostSpec& spec() const { return spec_; }
  SpaceKind space_kind() const { return space_kind_; }
  int dim() const { return static_cast<int>(anchor_.size()); }

 private:
  void require_dim(const FeatureVector& x) const;

  CostSpec spec_;
  FeatureVector anchor_;
  SpaceKind space_kind_;
};

}  // namespace rad
