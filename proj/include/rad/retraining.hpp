#pragma once

#include "rad/evasion.hpp"
#include "rad/learners.hpp"

namespace rad {

enum class RetrainMode { FullRetrain, OnlineSgd };

const char* retrain_mode_name(RetrainMode m);
RetrainMode retrain_mode_from_name(std::string_view name);

struct RadConfig {
  int max_iterations = 50;
  int dedup_digits = 9;  // decimal digits used by the duplicate predicate
  RetrainMode mode = RetrainMode::FullRetrain;
  int clusters = 0;  // 0 disables the clustering accelerator
  std::uint64_t seed = 1;
};

struct RadIterationRecord {
  int iteration = 0;  // 1-based
  long added = 0;
  std::string model_ref;
  double retrained_risk = 0.0;    // augmented-set risk, 0/1 loss + regularizer
  double adversarial_risk = 0.0;  // oracle-response risk, same loss
};

struct RadTrace {
  std::vector<RadIterationRecord> records;
  bool terminated_clean = false;
  bool clustered = false;  // bound is only certified for non-clustered runs
  std::string warning;     // set when the iteration cap cut the loop short

  long total_added() const;
};

/// Rounded-coordinate key used for duplicate detection among added vectors.
std::vector<long long> dedup_key(const FeatureVector& x, int digits);

struct RadResult {
  Model model;
  RadTrace trace;
  std::vector<FeatureVector> anchors;  // attacked anchors (I_bad or centers)
  std::vector<std::vector<FeatureVector>> n_sets;  // aligned with anchors
  Dataset augmented;  // training data plus every added instance
};

/// The retraining loop: train, attack every malicious anchor, append novel
/// evasions (label +1), repeat until nothing new appears or the cap hits.
RadResult rad_train(const LearnerSpec& spec, const TrainConfig& train_cfg,
                    const EvasionOracle& oracle, const Dataset& data,
                    const RadConfig& rad_cfg);

/// k-means centers over the malicious instances; binary spaces threshold the
/// centers back into {0,1}^n. Deterministic under the seed.
std::vector<FeatureVector> cluster_malicious(const Dataset& data, int k,
                                             std::uint64_t seed);

struct RadMulticlassResult {
  MulticlassModel model;
  RadTrace trace;
  std::vector<FeatureVector> anchors;
  std::vector<int> anchor_labels;
  std::vector<std::vector<FeatureVector>> n_sets;
  Dataset augmented;
};

/// Same loop with the multi-target oracle; added instances keep their
/// original malicious label.
RadMulticlassResult rad_train_multiclass(const LearnerSpec& spec,
                                         const TrainConfig& train_cfg,
                                         const EvasionOracle& oracle,
                                         const Dataset& data,
                                         const RadConfig& rad_cfg);

// run-log persistence (one record per line)
std::string serialize_trace(const RadTrace& trace);
RadTrace deserialize_trace(const std::string& text);

}  // namespace rad
