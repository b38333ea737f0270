#include "rad/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <cstdlib>
#include <future>
#include <set>
#include <thread>

namespace rad {

FeatureSpace FeatureSpace::continuous(std::vector<double> lo,
                                      std::vector<double> hi) {
  if (lo.empty() || lo.size() != hi.size())
    throw UsageError("feature space needs matching non-empty bounds");
  for (std::size_t j = 0; j < lo.size(); ++j)
    if (!(lo[j] <= hi[j]))
      throw UsageError("feature bound lo > hi at coordinate " +
                       std::to_string(j));
  FeatureSpace s;
  s.kind = SpaceKind::Continuous;
  s.dim = static_cast<int>(lo.size());
  s.lo = std::move(lo);
  s.hi = std::move(hi);
  return s;
}

FeatureSpace FeatureSpace::binary(int dim) {
  if (dim < 1) throw UsageError("feature space dim must be >= 1");
  FeatureSpace s;
  s.kind = SpaceKind::Binary;
  s.dim = dim;
  return s;
}

bool FeatureSpace::contains(const FeatureVector& x) const {
  if (static_cast<int>(x.size()) != dim) return false;
  if (kind == SpaceKind::Binary) {
    for (double v : x)
      if (v != 0.0 && v != 1.0) return false;
    return true;
  }
  for (int j = 0; j < dim; ++j)
    if (!(x[j] >= lo[j] && x[j] <= hi[j])) return false;
  return true;
}

void FeatureSpace::require_member(const FeatureVector& x,
                                  const char* what) const {
  if (static_cast<int>(x.size()) != dim)
    throw UsageError(std::string(what) + ": dimension mismatch (" +
                     std::to_string(x.size()) + " vs " + std::to_string(dim) +
                     ")");
  if (!contains(x))
    throw UsageError(std::string(what) + ": vector outside the feature space");
}

double FeatureSpace::clamp(int j, double v) const {
  if (kind == SpaceKind::Binary) return v < 0.5 ? 0.0 : 1.0;
  return std::min(hi[j], std::max(lo[j], v));
}

bool Dataset::is_malicious(int label) const {
  return std::find(malicious_labels.begin(), malicious_labels.end(), label) !=
         malicious_labels.end();
}

bool Dataset::is_target(int label) const {
  return std::find(target_labels.begin(), target_labels.end(), label) !=
         target_labels.end();
}

std::vector<std::size_t> Dataset::malicious_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < instances.size(); ++i)
    if (is_malicious(instances[i].y)) idx.push_back(i);
  return idx;
}

std::vector<int> Dataset::label_set() const {
  std::set<int> s;
  for (const auto& inst : instances) s.insert(inst.y);
  return {s.begin(), s.end()};
}

Metrics evaluate_metrics(const std::vector<int>& predictions,
                         const std::vector<int>& truth, int positive_label) {
  if (predictions.empty()) throw UsageError("evaluate_metrics: empty input");
  if (predictions.size() != truth.size())
    throw UsageError("evaluate_metrics: length mismatch");
  Metrics m;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool pred_pos = predictions[i] == positive_label;
    const bool true_pos = truth[i] == positive_label;
    if (pred_pos && true_pos)
      ++m.tp;
    else if (pred_pos && !true_pos)
      ++m.fp;
    else if (!pred_pos && true_pos)
      ++m.fn;
    else
      ++m.tn;
  }
  const double total = static_cast<double>(predictions.size());
  m.accuracy = (m.tp + m.tn) / total;
  m.precision = (m.tp + m.fp) > 0 ? m.tp / double(m.tp + m.fp) : 0.0;
  m.recall = (m.tp + m.fn) > 0 ? m.tp / double(m.tp + m.fn) : 0.0;
  const double pr = m.precision + m.recall;
  m.f1 = pr > 0 ? 2.0 * m.precision * m.recall / pr : 0.0;
  return m;
}

int sign_label(double score) { return score >= 0.0 ? +1 : -1; }

double pointwise_loss(LossKind kind, double score, int y) {
  if (y != -1 && y != +1)
    throw UsageError("pointwise_loss: label must be -1 or +1");
  const double z = y * score;  // margin
  switch (kind) {
    case LossKind::ZeroOne:
      return sign_label(score) == y ? 0.0 : 1.0;
    case LossKind::Hinge:
      return std::max(0.0, 1.0 - z);
    case LossKind::Logistic:
    case LossKind::CrossEntropy:
      // ln(1 + e^-z), stable for large |z|; cross-entropy of a sigmoid
      // output against (y+1)/2 reduces to the same expression.
      if (z < -35.0) return -z;
      return std::log1p(std::exp(-z));
  }
  throw ContractError("pointwise_loss: unknown loss kind");
}

double zero_one_upper_bound_loss(LossKind kind, double score, int y) {
  const double v = pointwise_loss(kind, score, y);
  if (kind == LossKind::Logistic || kind == LossKind::CrossEntropy)
    return v / kLogisticToZeroOneScale;
  return v;
}

const char* loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::ZeroOne: return "zero_one";
    case LossKind::Hinge: return "hinge";
    case LossKind::Logistic: return "logistic";
    case LossKind::CrossEntropy: return "cross_entropy";
  }
  return "?";
}

LossKind loss_from_name(std::string_view name) {
  if (name == "zero_one") return LossKind::ZeroOne;
  if (name == "hinge") return LossKind::Hinge;
  if (name == "logistic") return LossKind::Logistic;
  if (name == "cross_entropy") return LossKind::CrossEntropy;
  throw UsageError("unknown loss kind: " + std::string(name));
}

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {
std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}
}  // namespace

std::uint64_t SeedStream::derive(std::string_view tag, std::uint64_t a,
                                 std::uint64_t b) const {
  std::uint64_t h = splitmix64(master_ ^ fnv1a64(tag));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return h;
}

std::mt19937_64 SeedStream::substream(std::string_view tag, std::uint64_t a,
                                      std::uint64_t b) const {
  return std::mt19937_64(derive(tag, a, b));
}

void parallel_for(std::size_t count,
                  const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()),
                            count == 0 ? 1 : count);
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::future<void>> futures;
  futures.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    }));
  }
  for (auto& f : futures) f.get();
}

std::uint64_t content_key(const FeatureVector& x) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : x) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    h = splitmix64(h ^ bits);
  }
  return h;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_real(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || (end && *end != '\0'))
    throw DataError("not a real number: '" + s + "'");
  return v;
}

}  // namespace rad
