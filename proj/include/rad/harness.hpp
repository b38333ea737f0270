#pragma once

#include "rad/analysis.hpp"
#include "rad/retraining.hpp"

namespace rad {

struct SyntheticSpec {
  enum class Kind { GaussianBlobs, SparseBinaryBagOfWords };
  Kind kind = Kind::GaussianBlobs;
  int dim = 2;
  int benign_count = 100;
  int malicious_count = 100;
  double separation = 4.0;  // gaussian blobs: distance between class means
  double rate_hot = 0.35;   // bag of words: rate of class-indicative words
  double rate_cold = 0.05;  // bag of words: rate of off-class words
};

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// CSV with a header row; first column is the integer label, the rest are
/// features. A Binary hint enforces {0,1} cells; Continuous bounds are
/// inferred as per-feature min/max.
Dataset load_dataset(const std::string& path, SpaceKind hint);
void save_dataset(const std::string& path, const Dataset& data);

struct ExperimentConfig {
  // dataset
  std::string source = "synthetic";  // "synthetic" or "file"
  std::string path;                  // CSV path when source == "file"
  SpaceKind space = SpaceKind::Binary;
  SyntheticSpec synthetic{};
  std::vector<int> malicious_labels{+1};
  std::vector<int> target_labels{};

  // learner
  LearnerSpec learner = LearnerSpec::logistic_regression();
  TrainConfig train{};

  // cost + oracle
  CostKind cost_kind = CostKind::Exponential;
  std::vector<double> lambdas{0.1};
  Strategy strategy = Strategy::CoordinateGreedy;
  int restarts = 0;
  double epsilon = 1e-6;
  long max_updates = 0;
  double budget = 0.0;

  // rad
  RadConfig rad{};

  // p_L estimation
  std::vector<int> pl_restarts{0, 2, 8, 32};
  long pl_trials = 100;
  ReferenceKind pl_reference = ReferenceKind::ExhaustiveBinary;

  // run
  double split = 0.3;  // test fraction
  std::uint64_t seed = 1;
  std::string out = "out";
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

struct SweepRow {
  double lambda = 0.0;
  Metrics baseline_adv, rad_adv, baseline_clean, rad_clean;
  int iterations = 0;
  std::string bound_status = "inconclusive";
  std::string error;
};

struct SweepReport {
  std::vector<SweepRow> rows;
};

/// Per-lambda pipeline: train a baseline, attack the test malicious
/// instances, retrain with the oracle, attack again, and evaluate both
/// models on clean and adversarial test sets. Failures stay in their row.
SweepReport run_sweep(const ExperimentConfig& cfg);

std::string serialize_sweep(const SweepReport& report);
SweepReport deserialize_sweep(const std::string& text);
std::string render_sweep_table(const SweepReport& report);

/// Splits deterministically (seeded shuffle, then the first split*m
/// instances form the test set).
void split_dataset(const Dataset& data, double split, std::uint64_t seed,
                   Dataset& train_out, Dataset& test_out);

int run_cli(const std::vector<std::string>& args);

}  // namespace rad
