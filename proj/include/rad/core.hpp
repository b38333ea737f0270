#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rad {

/// Dense feature vector; its meaning (binary or box-bounded continuous)
/// comes from the FeatureSpace it lives in.
using FeatureVector = std::vector<double>;

// Error taxonomy mirrored by the CLI exit codes: UsageError -> 1,
// DataError -> 2, ContractError (internal invariant) -> 3.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

enum class SpaceKind { Continuous, Binary };

struct FeatureSpace {
  SpaceKind kind = SpaceKind::Continuous;
  int dim = 0;
  std::vector<double> lo;  // per-feature lower bounds (Continuous)
  std::vector<double> hi;  // per-feature upper bounds (Continuous)

  static FeatureSpace continuous(std::vector<double> lo, std::vector<double> hi);
  static FeatureSpace binary(int dim);

  bool contains(const FeatureVector& x) const;
  void require_member(const FeatureVector& x, const char* what) const;
  double clamp(int j, double v) const;
  bool is_binary() const { return kind == SpaceKind::Binary; }
};

struct LabeledInstance {
  FeatureVector x;
  int y = 0;  // -1/+1 binary, 0..K-1 multi-class
};

struct Dataset {
  FeatureSpace space;
  std::vector<LabeledInstance> instances;
  std::vector<int> malicious_labels{+1};  // M
  std::vector<int> target_labels{};       // T (multi-class attacks only)

  bool is_malicious(int label) const;
  bool is_target(int label) const;
  std::vector<std::size_t> malicious_indices() const;  // I_bad
  std::vector<int> label_set() const;                  // sorted distinct labels
};

struct Metrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  long tp = 0, fp = 0, tn = 0, fn = 0;
};

Metrics evaluate_metrics(const std::vector<int>& predictions,
                         const std::vector<int>& truth, int positive_label);

enum class LossKind { ZeroOne, Hinge, Logistic, CrossEntropy };

/// ln 2. Dividing the logistic loss by this makes it 1 at score 0, turning it
/// into a pointwise upper bound on the 0/1 loss.
inline constexpr double kLogisticToZeroOneScale = 0.69314718055994530942;

/// sign with sign(0) = +1 (boundary points classified malicious).
int sign_label(double score);

double pointwise_loss(LossKind kind, double score, int y);

/// Same losses rescaled where needed so every kind upper-bounds the 0/1 loss
/// pointwise (Logistic and CrossEntropy divided by ln 2).
double zero_one_upper_bound_loss(LossKind kind, double score, int y);

const char* loss_name(LossKind kind);
LossKind loss_from_name(std::string_view name);

std::uint64_t splitmix64(std::uint64_t z);

/// Counter-based substream derivation: (master seed, tag, a, b) maps to an
/// independent generator, so per-instance randomness does not depend on
/// scheduling or call order.
class SeedStream {
 public:
  SeedStream() = default;
  explicit SeedStream(std::uint64_t master) : master_(master) {}

  std::uint64_t master() const { return master_; }
  std::uint64_t derive(std::string_view tag, std::uint64_t a = 0,
                       std::uint64_t b = 0) const;
  std::mt19937_64 substream(std::string_view tag, std::uint64_t a = 0,
                            std::uint64_t b = 0) const;

 private:
  std::uint64_t master_ = 0;
};

/// Runs fn(0..count-1); results must land in caller-owned slots indexed by i,
/// which keeps the outcome independent of execution order.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

/// Hash of the exact bit patterns of a vector; identifies an instance for
/// seed-stream derivation so oracle randomness depends only on (seed, x).
std::uint64_t content_key(const FeatureVector& x);

/// 17-significant-digit decimal formatting; shared by every persisted
/// artifact so that serialize -> parse -> serialize is bit-exact.
std::string format_real(double v);
double parse_real(const std::string& s);

}  // namespace rad
