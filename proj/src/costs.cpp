#include "rad/costs.hpp"

#include <cmath>

namespace rad {

const char* cost_name(CostKind kind) {
  switch (kind) {
    case CostKind::Quadratic: return "quadratic";
    case CostKind::L1: return "l1";
    case CostKind::Exponential: return "exponential";
  }
  return "?";
}

CostKind cost_from_name(std::string_view name) {
  if (name == "quadratic") return CostKind::Quadratic;
  if (name == "l1") return CostKind::L1;
  if (name == "exponential") return CostKind::Exponential;
  throw UsageError("unknown cost kind: " + std::string(name));
}

CostModel::CostModel(CostSpec spec, FeatureVector anchor, SpaceKind space_kind)
    : spec_(spec), anchor_(std::move(anchor)), space_kind_(space_kind) {
  if (!(spec_.lambda > 0)) throw UsageError("cost sensitivity lambda must be > 0");
  if (anchor_.empty()) throw UsageError("cost anchor must be non-empty");
}

void CostModel::require_dim(const FeatureVector& x) const {
  if (x.size() != anchor_.size())
    throw UsageError("cost: dimension mismatch with anchor");
}

double CostModel::value(const FeatureVector& x) const {
  require_dim(x);
  switch (spec_.kind) {
    case CostKind::Quadratic: {
      double s = 0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = x[j] - anchor_[j];
        s += d * d;
      }
      return 0.5 * spec_.lambda * s;
    }
    case CostKind::L1: {
      double s = 0;
      for (std::size_t j = 0; j < x.size(); ++j) s += std::abs(x[j] - anchor_[j]);
      return spec_.lambda * s;
    }
    case CostKind::Exponential: {
      double s = 0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = x[j] - anchor_[j];
        s += d * d;
      }
      return std::exp(spec_.lambda * std::sqrt(s + 1.0));
    }
  }
  throw ContractError("cost: unknown kind");
}

double CostModel::gradient(const FeatureVector& x, int j) const {
  require_dim(x);
  if (space_kind_ == SpaceKind::Binary)
    throw UsageError("cost gradient unsupported on a binary space; use discrete search");
  if (j < 0 || j >= dim()) throw UsageError("cost gradient: coordinate out of range");
  const double d = x[j] - anchor_[j];
  switch (spec_.kind) {
    case CostKind::Quadratic:
      return spec_.lambda * d;
    case CostKind::L1:
      // subgradient fixed to 0 at the kink for deterministic updates
      if (d > 0) return spec_.lambda;
      if (d < 0) return -spec_.lambda;
      return 0.0;
    case CostKind::Exponential: {
      double s = 0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        const double dk = x[k] - anchor_[k];
        s += dk * dk;
      }
      const double root = std::sqrt(s + 1.0);
      return spec_.lambda * std::exp(spec_.lambda * root) * d / root;
    }
  }
  throw ContractError("cost gradient: unknown kind");
}

}  // namespace rad
