#include "rad/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"

namespace fs = std::filesystem;

namespace rad {

// ---------------------------------------------------------------------------
// synthetic data
// ---------------------------------------------------------------------------

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.dim < 1) throw UsageError("synthetic: dim must be >= 1");
  if (spec.benign_count < 1 || spec.malicious_count < 1)
    throw UsageError("synthetic: per-class counts must be >= 1");
  const SeedStream seeds(seed);
  Dataset data;
  data.malicious_labels = {+1};

  if (spec.kind == SyntheticSpec::Kind::GaussianBlobs) {
    auto rng = seeds.substream("gaussian");
    std::normal_distribution<double> noise(0.0, 1.0);
    const double shift = 0.5 * spec.separation / std::sqrt(double(spec.dim));
    auto draw = [&](int label) {
      FeatureVector x(spec.dim);
      const double mean = label == +1 ? shift : -shift;
      for (auto& v : x) v = mean + noise(rng);
      data.instances.push_back({std::move(x), label});
    };
    for (int i = 0; i < spec.benign_count; ++i) draw(-1);
    for (int i = 0; i < spec.malicious_count; ++i) draw(+1);
    std::vector<double> lo(spec.dim, 0.0), hi(spec.dim, 0.0);
    for (int j = 0; j < spec.dim; ++j) {
      lo[j] = hi[j] = data.instances[0].x[j];
      for (const auto& inst : data.instances) {
        lo[j] = std::min(lo[j], inst.x[j]);
        hi[j] = std::max(hi[j], inst.x[j]);
      }
    }
    data.space = FeatureSpace::continuous(std::move(lo), std::move(hi));
    return data;
  }

  // sparse bag of words: the first half of the vocabulary is indicative of
  // the malicious class, the second half of the benign class
  auto rng = seeds.substream("bagofwords");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int half = spec.dim / 2;
  auto draw = [&](int label) {
    FeatureVector x(spec.dim);
    for (int j = 0; j < spec.dim; ++j) {
      const bool hot = (label == +1) == (j < half);
      x[j] = u(rng) < (hot ? spec.rate_hot : spec.rate_cold) ? 1.0 : 0.0;
    }
    data.instances.push_back({std::move(x), label});
  };
  for (int i = 0; i < spec.benign_count; ++i) draw(-1);
  for (int i = 0; i < spec.malicious_count; ++i) draw(+1);
  data.space = FeatureSpace::binary(spec.dim);
  return data;
}

// ---------------------------------------------------------------------------
// CSV datasets
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

long parse_label(const std::string& s, int lineno) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || (end && *end != '\0'))
    throw DataError("line " + std::to_string(lineno) +
                    ": label is not an integer: '" + s + "'");
  return v;
}

double parse_cell(const std::string& s, int lineno) {
  try {
    return parse_real(s);
  } catch (const DataError&) {
    throw DataError("line " + std::to_string(lineno) +
                    ": non-numeric cell: '" + s + "'");
  }
}

}  // namespace

Dataset load_dataset(const std::string& path, SpaceKind hint) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw DataError("dataset file is empty: " + path);
  const std::size_t columns = split_csv(line).size();
  if (columns < 2)
    throw DataError("line 1: header needs a label and at least one feature");
  const int dim = int(columns) - 1;

  Dataset data;
  std::vector<int> line_of;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != columns)
      throw DataError("line " + std::to_string(lineno) + ": expected " +
                      std::to_string(columns) + " cells, found " +
                      std::to_string(cells.size()));
    LabeledInstance inst;
    inst.y = int(parse_label(cells[0], lineno));
    inst.x.reserve(dim);
    for (int j = 0; j < dim; ++j) {
      const double v = parse_cell(cells[j + 1], lineno);
      if (hint == SpaceKind::Binary && v != 0.0 && v != 1.0)
        throw DataError("line " + std::to_string(lineno) +
                        ": value outside {0,1} in a binary dataset");
      inst.x.push_back(v);
    }
    data.instances.push_back(std::move(inst));
    line_of.push_back(lineno);
  }
  if (data.instances.empty()) throw DataError("dataset has no data rows");

  bool binary_labels = true;
  for (const auto& inst : data.instances)
    if (inst.y != -1 && inst.y != +1) binary_labels = false;
  if (!binary_labels)
    for (std::size_t i = 0; i < data.instances.size(); ++i)
      if (data.instances[i].y < 0)
        throw DataError("line " + std::to_string(line_of[i]) +
                        ": label outside the declared set (use -1/+1 or "
                        "non-negative class ids)");

  if (hint == SpaceKind::Binary) {
    data.space = FeatureSpace::binary(dim);
  } else {
    std::vector<double> lo(dim), hi(dim);
    for (int j = 0; j < dim; ++j) {
      lo[j] = hi[j] = data.instances[0].x[j];
      for (const auto& inst : data.instances) {
        lo[j] = std::min(lo[j], inst.x[j]);
        hi[j] = std::max(hi[j], inst.x[j]);
      }
    }
    data.space = FeatureSpace::continuous(std::move(lo), std::move(hi));
  }
  data.malicious_labels = binary_labels ? std::vector<int>{+1}
                                        : std::vector<int>{};
  return data;
}

void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open dataset file for writing: " + path);
  out << "label";
  for (int j = 1; j <= data.space.dim; ++j) out << ",f" << j;
  out << "\n";
  for (const auto& inst : data.instances) {
    out << inst.y;
    for (double v : inst.x) out << "," << format_real(v);
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// experiment config
// ---------------------------------------------------------------------------

namespace {

int to_int(const std::string& v) {
  char* end = nullptr;
  const long r = std::strtol(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw UsageError("not an integer: '" + v + "'");
  return int(r);
}

std::uint64_t to_u64(const std::string& v) {
  char* end = nullptr;
  const unsigned long long r = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw UsageError("not an unsigned integer: '" + v + "'");
  return r;
}

double to_double(const std::string& v) {
  try {
    return parse_real(v);
  } catch (const DataError&) {
    throw UsageError("not a number: '" + v + "'");
  }
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& v, F f) {
  std::vector<T> out;
  std::string cur;
  std::istringstream in(v);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(f(cur));
  }
  if (out.empty()) throw UsageError("empty list value");
  return out;
}

void apply_key(ExperimentConfig& cfg, const std::string& section,
               const std::string& key, const std::string& value) {
  if (section == "dataset") {
    if (key == "source") cfg.source = value;
    else if (key == "path") cfg.path = value;
    else if (key == "space") {
      if (value == "binary") cfg.space = SpaceKind::Binary;
      else if (value == "continuous") cfg.space = SpaceKind::Continuous;
      else throw UsageError("space must be binary or continuous");
    } else if (key == "kind") {
      if (value == "gaussian")
        cfg.synthetic.kind = SyntheticSpec::Kind::GaussianBlobs;
      else if (value == "bagofwords")
        cfg.synthetic.kind = SyntheticSpec::Kind::SparseBinaryBagOfWords;
      else throw UsageError("dataset kind must be gaussian or bagofwords");
    } else if (key == "features") cfg.synthetic.dim = to_int(value);
    else if (key == "benign") cfg.synthetic.benign_count = to_int(value);
    else if (key == "malicious") cfg.synthetic.malicious_count = to_int(value);
    else if (key == "separation") cfg.synthetic.separation = to_double(value);
    else if (key == "rate_hot") cfg.synthetic.rate_hot = to_double(value);
    else if (key == "rate_cold") cfg.synthetic.rate_cold = to_double(value);
    else if (key == "malicious_labels") cfg.malicious_labels = to_list<int>(value, to_int);
    else if (key == "target_labels") cfg.target_labels = to_list<int>(value, to_int);
    else throw UsageError("unknown dataset key: " + key);
  } else if (section == "learner") {
    if (key == "kind") cfg.learner.kind = learner_from_name(value);
    else if (key == "kernel") cfg.learner.kernel.kind = kernel_from_name(value);
    else if (key == "sigma") cfg.learner.kernel.sigma = to_double(value);
    else if (key == "coef") cfg.learner.kernel.coef = to_double(value);
    else if (key == "degree") cfg.learner.kernel.degree = to_int(value);
    else if (key == "hidden") cfg.learner.hidden = to_list<int>(value, to_int);
    else if (key == "activation") cfg.learner.activation = activation_from_name(value);
    else if (key == "alpha") cfg.train.alpha = to_double(value);
    else if (key == "p_norm") cfg.train.p_norm = to_int(value);
    else if (key == "eta0") cfg.train.eta0 = to_double(value);
    else if (key == "decay") cfg.train.decay = to_double(value);
    else if (key == "epochs") cfg.train.epochs = to_int(value);
    else if (key == "batch") cfg.train.batch = to_int(value);
    else throw UsageError("unknown learner key: " + key);
  } else if (section == "cost") {
    if (key == "kind") cfg.cost_kind = cost_from_name(value);
    else if (key == "lambda") cfg.lambdas = to_list<double>(value, to_double);
    else throw UsageError("unknown cost key: " + key);
  } else if (section == "oracle") {
    if (key == "strategy") cfg.strategy = strategy_from_name(value);
    else if (key == "restarts") cfg.restarts = to_int(value);
    else if (key == "epsilon") cfg.epsilon = to_double(value);
    else if (key == "max_updates") cfg.max_updates = to_int(value);
    else if (key == "budget") cfg.budget = to_double(value);
    else throw UsageError("unknown oracle key: " + key);
  } else if (section == "rad") {
    if (key == "max_iterations") cfg.rad.max_iterations = to_int(value);
    else if (key == "mode") cfg.rad.mode = retrain_mode_from_name(value);
    else if (key == "clusters") cfg.rad.clusters = to_int(value);
    else if (key == "dedup_digits") cfg.rad.dedup_digits = to_int(value);
    else throw UsageError("unknown rad key: " + key);
  } else if (section == "pl") {
    if (key == "restarts") cfg.pl_restarts = to_list<int>(value, to_int);
    else if (key == "trials") cfg.pl_trials = to_int(value);
    else if (key == "reference") cfg.pl_reference = reference_from_name(value);
    else throw UsageError("unknown pl key: " + key);
  } else if (section == "run") {
    if (key == "split") cfg.split = to_double(value);
    else if (key == "seed") cfg.seed = to_u64(value);
    else if (key == "out") cfg.out = value;
    else throw UsageError("unknown run key: " + key);
  } else {
    throw UsageError("unknown config section: [" + section + "]");
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) +
                       ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      apply_key(cfg, section, key, value);
    } catch (const UsageError& e) {
      throw UsageError("config line " + std::to_string(lineno) + ": " +
                       e.what());
    }
  }
  if (!(cfg.split > 0.0 && cfg.split < 1.0))
    throw UsageError("run.split must lie in (0,1)");
  if (cfg.lambdas.empty()) throw UsageError("cost.lambda list must be non-empty");
  for (double l : cfg.lambdas)
    if (!(l > 0)) throw UsageError("cost.lambda values must be positive");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// sweep pipeline
// ---------------------------------------------------------------------------

void split_dataset(const Dataset& data, double split, std::uint64_t seed,
                   Dataset& train_out, Dataset& test_out) {
  const std::size_t m = data.instances.size();
  if (m < 2) throw UsageError("cannot split a dataset with fewer than 2 rows");
  if (!(split > 0.0 && split < 1.0))
    throw UsageError("split fraction must lie in (0,1)");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t test_count = std::size_t(std::llround(split * double(m)));
  test_count = std::max<std::size_t>(1, std::min(m - 1, test_count));
  train_out = Dataset{data.space, {}, data.malicious_labels, data.target_labels};
  test_out = Dataset{data.space, {}, data.malicious_labels, data.target_labels};
  for (std::size_t k = 0; k < m; ++k) {
    const auto& inst = data.instances[order[k]];
    (k < test_count ? test_out : train_out).instances.push_back(inst);
  }
}

namespace {

Dataset make_dataset(const ExperimentConfig& cfg, const SeedStream& seeds) {
  Dataset data;
  if (cfg.source == "file") {
    if (cfg.path.empty()) throw UsageError("dataset.path required for file source");
    data = load_dataset(cfg.path, cfg.space);
  } else if (cfg.source == "synthetic") {
    data = generate_synthetic(cfg.synthetic, seeds.derive("data"));
  } else {
    throw UsageError("dataset.source must be synthetic or file");
  }
  if (!cfg.malicious_labels.empty()) data.malicious_labels = cfg.malicious_labels;
  data.target_labels = cfg.target_labels;
  return data;
}

Metrics eval_clean(const Model& model, const Dataset& test) {
  std::vector<int> preds, truth;
  for (const auto& inst : test.instances) {
    preds.push_back(model.predict(inst.x));
    truth.push_back(inst.y);
  }
  return evaluate_metrics(preds, truth, +1);
}

Metrics eval_adversarial(const Model& model, const Dataset& test,
                         const EvasionOracle& oracle) {
  std::vector<int> preds(test.instances.size());
  std::vector<int> truth(test.instances.size());
  parallel_for(test.instances.size(), [&](std::size_t i) {
    const auto& inst = test.instances[i];
    truth[i] = inst.y;
    if (test.is_malicious(inst.y)) {
      const AttackResult a = oracle.evade(model, inst.x);
      preds[i] = model.predict(a.x_out);
    } else {
      preds[i] = model.predict(inst.x);
    }
  });
  return evaluate_metrics(preds, truth, +1);
}

OracleConfig oracle_config_for(const ExperimentConfig& cfg, double lambda,
                               std::uint64_t seed) {
  OracleConfig oc;
  oc.strategy = cfg.strategy;
  oc.cost = {cfg.cost_kind, lambda};
  oc.restarts = cfg.restarts;
  oc.epsilon = cfg.epsilon;
  oc.max_updates = cfg.max_updates;
  oc.budget = cfg.budget;
  oc.targets = cfg.target_labels;
  oc.seed = seed;
  return oc;
}

std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[dataset]\n";
  out << "source = " << cfg.source << "\n";
  if (!cfg.path.empty()) out << "path = " << cfg.path << "\n";
  out << "space = "
      << (cfg.space == SpaceKind::Binary ? "binary" : "continuous") << "\n";
  out << "kind = "
      << (cfg.synthetic.kind == SyntheticSpec::Kind::GaussianBlobs
              ? "gaussian"
              : "bagofwords")
      << "\n";
  out << "features = " << cfg.synthetic.dim << "\n";
  out << "benign = " << cfg.synthetic.benign_count << "\n";
  out << "malicious = " << cfg.synthetic.malicious_count << "\n";
  out << "separation = " << format_real(cfg.synthetic.separation) << "\n";
  out << "rate_hot = " << format_real(cfg.synthetic.rate_hot) << "\n";
  out << "rate_cold = " << format_real(cfg.synthetic.rate_cold) << "\n";
  out << "[learner]\n";
  out << "kind = " << learner_name(cfg.learner.kind) << "\n";
  out << "kernel = " << kernel_name(cfg.learner.kernel.kind) << "\n";
  out << "sigma = " << format_real(cfg.learner.kernel.sigma) << "\n";
  out << "coef = " << format_real(cfg.learner.kernel.coef) << "\n";
  out << "degree = " << cfg.learner.kernel.degree << "\n";
  out << "hidden = ";
  for (std::size_t i = 0; i < cfg.learner.hidden.size(); ++i)
    out << (i ? "," : "") << cfg.learner.hidden[i];
  out << "\n";
  out << "activation = " << activation_name(cfg.learner.activation) << "\n";
  out << "alpha = " << format_real(cfg.train.alpha) << "\n";
  out << "p_norm = " << cfg.train.p_norm << "\n";
  out << "eta0 = " << format_real(cfg.train.eta0) << "\n";
  out << "decay = " << format_real(cfg.train.decay) << "\n";
  out << "epochs = " << cfg.train.epochs << "\n";
  out << "batch = " << cfg.train.batch << "\n";
  out << "[cost]\n";
  out << "kind = " << cost_name(cfg.cost_kind) << "\n";
  out << "lambda = ";
  for (std::size_t i = 0; i < cfg.lambdas.size(); ++i)
    out << (i ? "," : "") << format_real(cfg.lambdas[i]);
  out << "\n";
  out << "[oracle]\n";
  out << "strategy = " << strategy_name(cfg.strategy) << "\n";
  out << "restarts = " << cfg.restarts << "\n";
  out << "epsilon = " << format_real(cfg.epsilon) << "\n";
  out << "max_updates = " << cfg.max_updates << "\n";
  out << "budget = " << format_real(cfg.budget) << "\n";
  out << "[rad]\n";
  out << "max_iterations = " << cfg.rad.max_iterations << "\n";
  out << "mode = " << retrain_mode_name(cfg.rad.mode) << "\n";
  out << "clusters = " << cfg.rad.clusters << "\n";
  out << "dedup_digits = " << cfg.rad.dedup_digits << "\n";
  out << "[run]\n";
  out << "split = " << format_real(cfg.split) << "\n";
  out << "seed = " << cfg.seed << "\n";
  return out.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

SweepReport run_sweep(const ExperimentConfig& cfg) {
  if (!cfg.target_labels.empty())
    throw UsageError("sweep supports binary datasets only");
  fs::create_directories(cfg.out);
  fs::create_directories(cfg.out + "/models");
  fs::create_directories(cfg.out + "/traces");
  const SeedStream seeds(cfg.seed);

  Dataset data = make_dataset(cfg, seeds);
  save_dataset(cfg.out + "/dataset.csv", data);
  write_file(cfg.out + "/config.txt", render_config(cfg));

  Dataset train_set, test_set;
  split_dataset(data, cfg.split, seeds.derive("split"), train_set, test_set);

  TrainConfig base_cfg = cfg.train;
  base_cfg.seed = seeds.derive("baseline");
  const Model baseline = train(cfg.learner, train_set, base_cfg);
  save_model(cfg.out + "/models/baseline.json", baseline);

  SweepReport rep;
  for (std::size_t idx = 0; idx < cfg.lambdas.size(); ++idx) {
    const double lambda = cfg.lambdas[idx];
    SweepRow row;
    row.lambda = lambda;
    try {
      const EvasionOracle attacker(
          oracle_config_for(cfg, lambda, seeds.derive("attack", idx)));
      row.baseline_clean = eval_clean(baseline, test_set);
      row.baseline_adv = eval_adversarial(baseline, test_set, attacker);

      const EvasionOracle rad_oracle(
          oracle_config_for(cfg, lambda, seeds.derive("rad-oracle", idx)));
      TrainConfig rad_train_cfg = cfg.train;
      rad_train_cfg.seed = seeds.derive("rad-train", idx);
      RadConfig rad_cfg = cfg.rad;
      rad_cfg.seed = seeds.derive("rad", idx);
      const RadResult rr =
          rad_train(cfg.learner, rad_train_cfg, rad_oracle, train_set, rad_cfg);

      const std::string tag = "l" + std::to_string(idx);
      save_model(cfg.out + "/models/rad_" + tag + ".json", rr.model);
      write_file(cfg.out + "/traces/rad_" + tag + ".txt",
                 serialize_trace(rr.trace));

      row.iterations = int(rr.trace.records.size());
      row.rad_clean = eval_clean(rr.model, test_set);
      row.rad_adv = eval_adversarial(rr.model, test_set, attacker);

      if (rr.trace.clustered) {
        row.bound_status = "heuristic";
      } else {
        const Prop31Report p31 = check_prop31(
            rr.model, train_set, rr.anchors, rr.n_sets, rad_oracle,
            LossKind::ZeroOne, cfg.train.alpha, cfg.train.p_norm,
            rr.trace.terminated_clean);
        row.bound_status = p31.status == BoundStatus::Certified ? "certified"
                           : p31.status == BoundStatus::Violated
                               ? "violated"
                               : "uncertified";
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rep.rows.push_back(std::move(row));
  }

  write_file(cfg.out + "/sweep_rows.txt", serialize_sweep(rep));
  write_file(cfg.out + "/sweep.txt", render_sweep_table(rep));
  return rep;
}

namespace {

void put_metrics(std::ostringstream& out, const char* prefix, const Metrics& m) {
  out << " " << prefix << "_accuracy=" << format_real(m.accuracy) << " "
      << prefix << "_precision=" << format_real(m.precision) << " " << prefix
      << "_recall=" << format_real(m.recall) << " " << prefix
      << "_f1=" << format_real(m.f1);
}

double get_field(const std::string& line, const std::string& key) {
  const auto pos = line.find(" " + key + "=");
  if (pos == std::string::npos) throw DataError("sweep row missing " + key);
  const auto start = pos + key.size() + 2;
  const auto end = line.find(' ', start);
  return parse_real(line.substr(start, end == std::string::npos
                                           ? std::string::npos
                                           : end - start));
}

}  // namespace

std::string serialize_sweep(const SweepReport& report) {
  std::ostringstream out;
  out << "# sweep rows v1\n";
  for (const auto& r : report.rows) {
    out << "lambda=" << format_real(r.lambda);
    put_metrics(out, "baseline_adv", r.baseline_adv);
    put_metrics(out, "rad_adv", r.rad_adv);
    put_metrics(out, "baseline_clean", r.baseline_clean);
    put_metrics(out, "rad_clean", r.rad_clean);
    out << " iterations=" << r.iterations << " bound=" << r.bound_status;
    out << " error=" << r.error << "\n";
  }
  return out.str();
}

SweepReport deserialize_sweep(const std::string& text) {
  SweepReport rep;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    SweepRow r;
    if (line.rfind("lambda=", 0) != 0) throw DataError("bad sweep row: " + line);
    r.lambda = parse_real(line.substr(7, line.find(' ') - 7));
    auto metrics_from = [&](const char* prefix) {
      Metrics m;
      m.accuracy = get_field(line, std::string(prefix) + "_accuracy");
      m.precision = get_field(line, std::string(prefix) + "_precision");
      m.recall = get_field(line, std::string(prefix) + "_recall");
      m.f1 = get_field(line, std::string(prefix) + "_f1");
      return m;
    };
    r.baseline_adv = metrics_from("baseline_adv");
    r.rad_adv = metrics_from("rad_adv");
    r.baseline_clean = metrics_from("baseline_clean");
    r.rad_clean = metrics_from("rad_clean");
    r.iterations = int(get_field(line, "iterations"));
    {
      const auto pos = line.find(" bound=");
      const auto start = pos + 7;
      const auto end = line.find(' ', start);
      r.bound_status = line.substr(start, end - start);
    }
    {
      const auto pos = line.find(" error=");
      if (pos != std::string::npos) r.error = line.substr(pos + 7);
    }
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

std::string render_sweep_table(const SweepReport& report) {
  std::ostringstream out;
  char buf[256];
  out << "lambda    base_adv_rec rad_adv_rec  base_adv_f1  rad_adv_f1   "
         "base_cln_acc rad_cln_acc  iters bound\n";
  for (const auto& r : report.rows) {
    if (!r.error.empty()) {
      std::snprintf(buf, sizeof(buf), "%-9.4g FAILED: %s\n", r.lambda,
                    r.error.c_str());
      out << buf;
      continue;
    }
    std::snprintf(buf, sizeof(buf),
                  "%-9.4g %-12.4f %-12.4f %-12.4f %-12.4f %-12.4f %-12.4f "
                  "%-5d %s\n",
                  r.lambda, r.baseline_adv.recall, r.rad_adv.recall,
                  r.baseline_adv.f1, r.rad_adv.f1, r.baseline_clean.accuracy,
                  r.rad_clean.accuracy, r.iterations, r.bound_status.c_str());
    out << buf;
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// CLI
// ---------------------------------------------------------------------------

namespace {

struct CliContext {
  std::string config_path;
  std::string model_path;
  std::string out_override;
  std::uint64_t seed_override = 0;
  bool has_seed = false;

  ExperimentConfig config() const {
    ExperimentConfig cfg = load_config(config_path);
    if (has_seed) cfg.seed = seed_override;
    if (!out_override.empty()) cfg.out = out_override;
    return cfg;
  }
};

int cmd_train(const CliContext& ctx) {
  const ExperimentConfig cfg = ctx.config();
  const SeedStream seeds(cfg.seed);
  Dataset data = make_dataset(cfg, seeds);
  Dataset train_set, test_set;
  split_dataset(data, cfg.split, seeds.derive("split"), train_set, test_set);
  TrainConfig tc = cfg.train;
  tc.seed = seeds.derive("baseline");
  const Model model = train(cfg.learner, train_set, tc);
  fs::create_directories(cfg.out);
  save_model(cfg.out + "/model.json", model);
  const Metrics m = eval_clean(model, test_set);
  std::printf("trained %s  test accuracy=%.4f precision=%.4f recall=%.4f f1=%.4f\n",
              learner_name(cfg.learner.kind), m.accuracy, m.precision, m.recall,
              m.f1);
  std::printf("model written to %s/model.json\n", cfg.out.c_str());
  return 0;
}

int cmd_eval(const CliContext& ctx) {
  const ExperimentConfig cfg = ctx.config();
  const SeedStream seeds(cfg.seed);
  Dataset data = make_dataset(cfg, seeds);
  Dataset train_set, test_set;
  split_dataset(data, cfg.split, seeds.derive("split"), train_set, test_set);
  const Model model = load_model(ctx.model_path);
  const Metrics m = eval_clean(model, test_set);
  std::printf("accuracy=%.4f precision=%.4f recall=%.4f f1=%.4f tp=%ld fp=%ld tn=%ld fn=%ld\n",
              m.accuracy, m.precision, m.recall, m.f1, m.tp, m.fp, m.tn, m.fn);
  return 0;
}

int cmd_attack(const CliContext& ctx) {
  const ExperimentConfig cfg = ctx.config();
  const SeedStream seeds(cfg.seed);
  Dataset data = make_dataset(cfg, seeds);
  Dataset train_set, test_set;
  split_dataset(data, cfg.split, seeds.derive("split"), train_set, test_set);
  const auto bad = test_set.malicious_indices();
  if (bad.empty()) throw UsageError("no malicious instances");
  Model model;
  if (!ctx.model_path.empty()) {
    model = load_model(ctx.model_path);
  } else {
    TrainConfig tc = cfg.train;
    tc.seed = seeds.derive("baseline");
    model = train(cfg.learner, train_set, tc);
  }
  const EvasionOracle oracle(
      oracle_config_for(cfg, cfg.lambdas.front(), seeds.derive("attack", 0)));
  std::vector<AttackResult> results(bad.size());
  parallel_for(bad.size(), [&](std::size_t k) {
    results[k] = oracle.evade(model, test_set.instances[bad[k]].x);
  });
  fs::create_directories(cfg.out);
  Dataset adversarial = test_set;
  long evaded = 0;
  std::ostringstream report;
  report << "# attack report: index evaded q_value iterations winner\n";
  for (std::size_t k = 0; k < bad.size(); ++k) {
    adversarial.instances[bad[k]].x = results[k].x_out;
    evaded += results[k].evaded ? 1 : 0;
    report << bad[k] << " " << (results[k].evaded ? 1 : 0) << " "
           << format_real(results[k].q_value) << " " << results[k].iterations
           << " " << results[k].winner_restart << "\n";
  }
  save_dataset(cfg.out + "/adversarial_test.csv", adversarial);
  write_file(cfg.out + "/attack_report.txt", report.str());
  std::printf("attacked %zu malicious test instances, %ld evaded (%.1f%%)\n",
              bad.size(), evaded, 100.0 * double(evaded) / double(bad.size()));
  return 0;
}

int cmd_rad(const CliContext& ctx) {
  const ExperimentConfig cfg = ctx.config();
  const SeedStream seeds(cfg.seed);
  Dataset data = make_dataset(cfg, seeds);
  Dataset train_set, test_set;
  split_dataset(data, cfg.split, seeds.derive("split"), train_set, test_set);
  TrainConfig tc = cfg.train;
  tc.seed = seeds.derive("rad-train", 0);
  RadConfig rc = cfg.rad;
  rc.seed = seeds.derive("rad", 0);
  const EvasionOracle oracle(
      oracle_config_for(cfg, cfg.lambdas.front(), seeds.derive("rad-oracle", 0)));
  fs::create_directories(cfg.out);
  if (!cfg.target_labels.empty()) {
    const RadMulticlassResult rr =
        rad_train_multiclass(cfg.learner, tc, oracle, train_set, rc);
    write_file(cfg.out + "/rad_trace.txt", serialize_trace(rr.trace));
    for (std::size_t i = 0; i < rr.model.labels.size(); ++i)
      save_model(cfg.out + "/rad_model_class" +
                     std::to_string(rr.model.labels[i]) + ".json",
                 rr.model.models[i]);
    std::printf("rad finished: %zu iterations, %ld added, clean=%d\n",
                rr.trace.records.size(), rr.trace.total_added(),
                rr.trace.terminated_clean ? 1 : 0);
    if (!rr.trace.warning.empty())
      std::printf("warning: %s\n", rr.trace.warning.c_str());
    return 0;
  }
  const RadResult rr = rad_train(cfg.learner, tc, oracle, train_set, rc);
  save_model(cfg.out + "/rad_model.json", rr.model);
  write_file(cfg.out + "/rad_trace.txt", serialize_trace(rr.trace));
  save_dataset(cfg.out + "/augmented_train.csv", rr.augmented);
  const Metrics clean = eval_clean(rr.model, test_set);
  std::printf("rad finished: %zu iterations, %ld added, clean=%d, test accuracy=%.4f\n",
              rr.trace.records.size(), rr.trace.total_added(),
              rr.trace.terminated_clean ? 1 : 0, clean.accuracy);
  if (!rr.trace.warning.empty())
    std::printf("warning: %s\n", rr.trace.warning.c_str());
  return 0;
}

int cmd_sweep(const CliContext& ctx) {
  const ExperimentConfig cfg = ctx.config();
  const SweepReport rep = run_sweep(cfg);
  std::fputs(render_sweep_table(rep).c_str(), stdout);
  std::printf("artifacts written under %s\n", cfg.out.c_str());
  return 0;
}

int cmd_pl(const CliContext& ctx) {
  const ExperimentConfig cfg = ctx.config();
  const SeedStream seeds(cfg.seed);
  Dataset data = make_dataset(cfg, seeds);
  Dataset train_set, test_set;
  split_dataset(data, cfg.split, seeds.derive("split"), train_set, test_set);
  TrainConfig tc = cfg.train;
  tc.seed = seeds.derive("baseline");
  const Model model = train(cfg.learner, train_set, tc);
  std::vector<FeatureVector> instances;
  for (auto i : test_set.malicious_indices())
    instances.push_back(test_set.instances[i].x);
  if (instances.empty()) throw UsageError("no malicious instances");
  fs::create_directories(cfg.out);
  std::ostringstream out;
  out << "# restarts trials failures p_l\n";
  for (int L : cfg.pl_restarts) {
    const PlEstimate est = estimate_pl(
        instances, model, CostSpec{cfg.cost_kind, cfg.lambdas.front()}, L,
        ReferenceSpec{cfg.pl_reference}, cfg.pl_trials,
        seeds.derive("pl", std::uint64_t(L)), cfg.epsilon, cfg.max_updates);
    out << L << " " << est.trials << " " << est.failures << " "
        << format_real(est.p_l) << "\n";
    std::printf("L=%-4d trials=%ld failures=%ld p_L=%.4f\n", L, est.trials,
                est.failures, est.p_l);
  }
  write_file(cfg.out + "/pl.txt", out.str());
  return 0;
}

int cmd_report(const std::string& dir) {
  const SweepReport rep = deserialize_sweep(read_file(dir + "/sweep_rows.txt"));
  std::fputs(render_sweep_table(rep).c_str(), stdout);
  fs::create_directories(dir + "/series");
  const std::vector<std::pair<std::string, std::function<double(const SweepRow&)>>>
      series = {
          {"baseline_adv_accuracy", [](const SweepRow& r) { return r.baseline_adv.accuracy; }},
          {"baseline_adv_precision", [](const SweepRow& r) { return r.baseline_adv.precision; }},
          {"baseline_adv_recall", [](const SweepRow& r) { return r.baseline_adv.recall; }},
          {"baseline_adv_f1", [](const SweepRow& r) { return r.baseline_adv.f1; }},
          {"rad_adv_accuracy", [](const SweepRow& r) { return r.rad_adv.accuracy; }},
          {"rad_adv_precision", [](const SweepRow& r) { return r.rad_adv.precision; }},
          {"rad_adv_recall", [](const SweepRow& r) { return r.rad_adv.recall; }},
          {"rad_adv_f1", [](const SweepRow& r) { return r.rad_adv.f1; }},
          {"baseline_clean_accuracy", [](const SweepRow& r) { return r.baseline_clean.accuracy; }},
          {"baseline_clean_f1", [](const SweepRow& r) { return r.baseline_clean.f1; }},
          {"rad_clean_accuracy", [](const SweepRow& r) { return r.rad_clean.accuracy; }},
          {"rad_clean_f1", [](const SweepRow& r) { return r.rad_clean.f1; }},
          {"iterations", [](const SweepRow& r) { return double(r.iterations); }},
      };
  for (const auto& [name, get] : series) {
    std::ostringstream out;
    out << "# lambda " << name << "\n";
    for (const auto& r : rep.rows)
      if (r.error.empty())
        out << format_real(r.lambda) << " " << format_real(get(r)) << "\n";
    write_file(dir + "/series/" + name + ".dat", out.str());
  }
  std::printf("series files written under %s/series\n", dir.c_str());
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"evasion attacks, adversarial retraining, and bound checks"};
  app.require_subcommand(1);

  CliContext ctx;
  std::string report_dir;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config)
      sub->add_option("--config", ctx.config_path, "experiment config file")
          ->required();
    sub->add_option("--seed", ctx.seed_override, "seed override")
        ->each([&](const std::string&) { ctx.has_seed = true; });
    sub->add_option("--out", ctx.out_override, "output directory override");
  };

  CLI::App* s_train = app.add_subcommand("train", "train a model");
  add_common(s_train, true);
  CLI::App* s_attack = app.add_subcommand("attack", "attack test instances");
  add_common(s_attack, true);
  s_attack->add_option("--model", ctx.model_path, "attack this model file");
  CLI::App* s_rad = app.add_subcommand("rad", "run the retraining loop");
  add_common(s_rad, true);
  CLI::App* s_eval = app.add_subcommand("eval", "evaluate a saved model");
  add_common(s_eval, true);
  s_eval->add_option("--model", ctx.model_path, "model file")->required();
  CLI::App* s_sweep = app.add_subcommand("sweep", "run the lambda sweep");
  add_common(s_sweep, true);
  CLI::App* s_pl = app.add_subcommand("pl-estimate", "estimate p_L");
  add_common(s_pl, true);
  CLI::App* s_report = app.add_subcommand("report", "render a finished sweep");
  s_report->add_option("--out", report_dir, "sweep output directory")
      ->required();

  std::vector<std::string> argv_storage = args;
  argv_storage.insert(argv_storage.begin(), "radcli");
  std::vector<char*> argv;
  argv.reserve(argv_storage.size());
  for (auto& s : argv_storage) argv.push_back(s.data());

  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (s_train->parsed()) return cmd_train(ctx);
    if (s_attack->parsed()) return cmd_attack(ctx);
    if (s_rad->parsed()) return cmd_rad(ctx);
    if (s_eval->parsed()) return cmd_eval(ctx);
    if (s_sweep->parsed()) return cmd_sweep(ctx);
    if (s_pl->parsed()) return cmd_pl(ctx);
    if (s_report->parsed()) return cmd_report(report_dir);
    throw UsageError("no subcommand selected");
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 3;
  }
}

}  // namespace rad
