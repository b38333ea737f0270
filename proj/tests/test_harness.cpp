#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "rad/harness.hpp"

using namespace rad;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  REQUIRE(bool(out));
  out << content;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "rad_harness_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// file name -> contents for every regular file under root
std::map<std::string, std::string> tree_snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file())
      out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

std::string base_config(const std::string& out_dir) {
  return
      "[dataset]\n"
      "source = synthetic\n"
      "kind = bagofwords\n"
      "features = 16\n"
      "benign = 24\n"
      "malicious = 24\n"
      "rate_hot = 0.4\n"
      "rate_cold = 0.05\n"
      "[learner]\n"
      "kind = logistic_regression\n"
      "alpha = 0.001\n"
      "eta0 = 0.5\n"
      "epochs = 8\n"
      "[cost]\n"
      "kind = exponential\n"
      "lambda = 0.2, 0.6\n"
      "[oracle]\n"
      "strategy = coordinate_greedy\n"
      "restarts = 1\n"
      "[rad]\n"
      "max_iterations = 30\n"
      "[run]\n"
      "split = 0.3\n"
      "seed = 42\n"
      "out = " + out_dir + "\n";
}

}  // namespace

TEST_CASE("load_dataset: minimal binary csv") {
  const fs::path dir = scratch_dir("load_min");
  spit(dir / "d.csv", "label,f1\n+1,1\n-1,0\n");
  const Dataset d = load_dataset((dir / "d.csv").string(), SpaceKind::Binary);
  CHECK(d.instances.size() == 2);
  CHECK(d.space.dim == 1);
  CHECK(d.instances[0].y == +1);
  CHECK(d.instances[0].x == FeatureVector{1.0});
  CHECK(d.instances[1].y == -1);
  CHECK(d.malicious_indices() == std::vector<std::size_t>{0});
}

TEST_CASE("load_dataset: binary hint violation names the line") {
  const fs::path dir = scratch_dir("load_bad");
  spit(dir / "d.csv", "label,f1\n+1,0.5\n");
  try {
    load_dataset((dir / "d.csv").string(), SpaceKind::Binary);
    FAIL("expected a parse error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("load_dataset: ragged rows and bad cells carry line numbers") {
  const fs::path dir = scratch_dir("load_ragged");
  spit(dir / "r.csv", "label,f1,f2\n1,0,1\n-1,0\n");
  CHECK_THROWS_AS(load_dataset((dir / "r.csv").string(), SpaceKind::Binary),
                  DataError);
  spit(dir / "n.csv", "label,f1\n1,zebra\n");
  CHECK_THROWS_AS(load_dataset((dir / "n.csv").string(), SpaceKind::Binary),
                  DataError);
  spit(dir / "l.csv", "label,f1\n2,1\n-1,0\n");
  CHECK_THROWS_AS(load_dataset((dir / "l.csv").string(), SpaceKind::Binary),
                  DataError);
}

TEST_CASE("dataset save/load round-trips bit-exactly") {
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::GaussianBlobs;
  spec.dim = 5;
  spec.benign_count = 100;
  spec.malicious_count = 100;
  spec.separation = 3.0;
  const Dataset d = generate_synthetic(spec, 7);
  const fs::path dir = scratch_dir("roundtrip");
  save_dataset((dir / "d.csv").string(), d);
  const Dataset back = load_dataset((dir / "d.csv").string(), SpaceKind::Continuous);
  REQUIRE(back.instances.size() == d.instances.size());
  for (std::size_t i = 0; i < d.instances.size(); ++i) {
    CHECK(back.instances[i].y == d.instances[i].y);
    CHECK(back.instances[i].x == d.instances[i].x);  // exact doubles
  }
  // saving the reloaded dataset reproduces the file byte-for-byte
  save_dataset((dir / "d2.csv").string(), back);
  CHECK(slurp(dir / "d.csv") == slurp(dir / "d2.csv"));
}

TEST_CASE("generate_synthetic: determinism and degenerate separation") {
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::GaussianBlobs;
  spec.dim = 2;
  spec.benign_count = 60;
  spec.malicious_count = 60;
  spec.separation = 10.0;

  const Dataset a = generate_synthetic(spec, 11);
  const Dataset b = generate_synthetic(spec, 11);
  REQUIRE(a.instances.size() == b.instances.size());
  for (std::size_t i = 0; i < a.instances.size(); ++i)
    CHECK(a.instances[i].x == b.instances[i].x);

  // separation 10: a linear model gets essentially everything right
  TrainConfig tc;
  tc.epochs = 20;
  tc.eta0 = 0.5;
  const Model m = train(LearnerSpec::linear_svm(), a, tc);
  int correct = 0;
  for (const auto& inst : a.instances)
    correct += m.predict(inst.x) == inst.y ? 1 : 0;
  CHECK(double(correct) / double(a.instances.size()) >= 0.99);

  // separation 0: accuracy hovers near chance across seeds
  spec.separation = 0.0;
  double acc_sum = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Dataset d0 = generate_synthetic(spec, seed);
    Dataset train_set, test_set;
    split_dataset(d0, 0.5, seed, train_set, test_set);
    const Model m0 = train(LearnerSpec::linear_svm(), train_set, tc);
    int ok = 0;
    for (const auto& inst : test_set.instances)
      ok += m0.predict(inst.x) == inst.y ? 1 : 0;
    acc_sum += double(ok) / double(test_set.instances.size());
  }
  CHECK(std::abs(acc_sum / 5.0 - 0.5) <= 0.1);
}

TEST_CASE("config parsing: values, lists, and errors") {
  const ExperimentConfig cfg = parse_config(base_config("outdir"));
  CHECK(cfg.synthetic.dim == 16);
  CHECK(cfg.learner.kind == Learner::LogisticRegression);
  CHECK(cfg.lambdas == std::vector<double>{0.2, 0.6});
  CHECK(cfg.restarts == 1);
  CHECK(cfg.seed == 42);
  CHECK(cfg.out == "outdir");

  CHECK_THROWS_AS(parse_config("[dataset]\nbogus_key = 1\n"), UsageError);
  CHECK_THROWS_AS(parse_config("[nosuch]\nx = 1\n"), UsageError);
  CHECK_THROWS_AS(parse_config("[run]\nsplit = 1.5\n"), UsageError);
  CHECK_THROWS_AS(parse_config("[cost]\nlambda = -1\n"), UsageError);
}

TEST_CASE("split_dataset: deterministic, sized, and label-preserving") {
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::SparseBinaryBagOfWords;
  spec.dim = 8;
  spec.benign_count = 30;
  spec.malicious_count = 30;
  const Dataset d = generate_synthetic(spec, 3);
  Dataset tr1, te1, tr2, te2;
  split_dataset(d, 0.3, 99, tr1, te1);
  split_dataset(d, 0.3, 99, tr2, te2);
  CHECK(te1.instances.size() == 18);
  CHECK(tr1.instances.size() == 42);
  for (std::size_t i = 0; i < te1.instances.size(); ++i)
    CHECK(te1.instances[i].x == te2.instances[i].x);
  Dataset tr3, te3;
  split_dataset(d, 0.3, 100, tr3, te3);
  bool same = te3.instances.size() == te1.instances.size();
  if (same)
    for (std::size_t i = 0; i < te1.instances.size() && same; ++i)
      same = te1.instances[i].x == te3.instances[i].x;
  CHECK(!same);  // a different seed shuffles differently
}

TEST_CASE("run_sweep: single-lambda config yields one complete row") {
  const fs::path out = scratch_dir("sweep_single");
  ExperimentConfig cfg = parse_config(base_config(out.string()));
  cfg.lambdas = {0.3};
  const SweepReport rep = run_sweep(cfg);
  REQUIRE(rep.rows.size() == 1);
  CHECK(rep.rows[0].error.empty());
  CHECK(rep.rows[0].lambda == 0.3);
  CHECK(rep.rows[0].iterations >= 1);
  for (const Metrics* m : {&rep.rows[0].baseline_adv, &rep.rows[0].rad_adv,
                           &rep.rows[0].baseline_clean, &rep.rows[0].rad_clean}) {
    CHECK(m->accuracy >= 0.0);
    CHECK(m->accuracy <= 1.0);
  }
  CHECK(fs::exists(out / "models" / "baseline.json"));
  CHECK(fs::exists(out / "models" / "rad_l0.json"));
  CHECK(fs::exists(out / "traces" / "rad_l0.txt"));
  CHECK(fs::exists(out / "sweep_rows.txt"));
  CHECK(fs::exists(out / "dataset.csv"));
}

TEST_CASE("run_sweep: reruns with the same seed are byte-identical") {
  const fs::path out1 = scratch_dir("sweep_rep1");
  const fs::path out2 = scratch_dir("sweep_rep2");
  ExperimentConfig cfg1 = parse_config(base_config(out1.string()));
  ExperimentConfig cfg2 = cfg1;
  cfg2.out = out2.string();
  run_sweep(cfg1);
  run_sweep(cfg2);
  auto t1 = tree_snapshot(out1);
  auto t2 = tree_snapshot(out2);
  REQUIRE(t1.size() == t2.size());
  for (const auto& [name, content] : t1) {
    REQUIRE(t2.count(name) == 1);
    CHECK_MESSAGE(t2.at(name) == content, "file differs: " << name);
  }
}

TEST_CASE("sweep rows serialize and render") {
  SweepRow row;
  row.lambda = 0.25;
  row.baseline_adv = {0.5, 0.5, 0.25, 0.3333333333333333, 1, 1, 1, 1};
  row.rad_adv = {0.75, 0.8, 0.6, 0.6857142857142857, 3, 1, 3, 1};
  row.baseline_clean = row.rad_clean = {0.9, 0.9, 0.9, 0.9, 9, 1, 9, 1};
  row.iterations = 7;
  row.bound_status = "certified";
  SweepReport rep;
  rep.rows.push_back(row);
  const std::string text = serialize_sweep(rep);
  const SweepReport back = deserialize_sweep(text);
  REQUIRE(back.rows.size() == 1);
  CHECK(back.rows[0].lambda == 0.25);
  CHECK(back.rows[0].rad_adv.recall == 0.6);
  CHECK(back.rows[0].iterations == 7);
  CHECK(back.rows[0].bound_status == "certified");
  CHECK(serialize_sweep(back) == text);
  const std::string table = render_sweep_table(back);
  CHECK(table.find("certified") != std::string::npos);
}

TEST_CASE("cli: usage errors exit with code 1") {
  CHECK(run_cli({"no-such-command"}) == 1);
  CHECK(run_cli({"train"}) == 1);              // missing --config
  CHECK(run_cli({"train", "--config", "/definitely/not/here.cfg"}) == 1);
}

TEST_CASE("cli: attack on a benign-only dataset reports no malicious instances") {
  const fs::path dir = scratch_dir("cli_benign");
  std::string csv = "label,f1,f2\n";
  for (int i = 0; i < 20; ++i)
    csv += "-1," + std::to_string(i % 2) + "," + std::to_string((i / 2) % 2) + "\n";
  spit(dir / "benign.csv", csv);
  const std::string cfg =
      "[dataset]\nsource = file\npath = " + (dir / "benign.csv").string() +
      "\nspace = binary\n[cost]\nlambda = 0.5\n[run]\nsplit = 0.3\nout = " +
      (dir / "out").string() + "\n";
  spit(dir / "c.cfg", cfg);
  CHECK(run_cli({"attack", "--config", (dir / "c.cfg").string()}) == 1);
}

TEST_CASE("cli: rad runs twice with identical bytes, eval and report work") {
  const fs::path dir = scratch_dir("cli_rad");
  spit(dir / "c.cfg", base_config((dir / "out1").string()));
  CHECK(run_cli({"rad", "--config", (dir / "c.cfg").string(), "--seed", "7"}) == 0);
  CHECK(run_cli({"rad", "--config", (dir / "c.cfg").string(), "--seed", "7",
                 "--out", (dir / "out2").string()}) == 0);
  CHECK(slurp(dir / "out1" / "rad_model.json") ==
        slurp(dir / "out2" / "rad_model.json"));
  CHECK(slurp(dir / "out1" / "rad_trace.txt") ==
        slurp(dir / "out2" / "rad_trace.txt"));
  CHECK(slurp(dir / "out1" / "augmented_train.csv") ==
        slurp(dir / "out2" / "augmented_train.csv"));

  CHECK(run_cli({"eval", "--config", (dir / "c.cfg").string(), "--model",
                 (dir / "out1" / "rad_model.json").string()}) == 0);

  // a finished sweep renders a table and emits series files
  const fs::path sweep_out = dir / "sweep";
  spit(dir / "s.cfg", base_config(sweep_out.string()));
  CHECK(run_cli({"sweep", "--config", (dir / "s.cfg").string()}) == 0);
  CHECK(run_cli({"report", "--out", sweep_out.string()}) == 0);
  const std::string series = slurp(sweep_out / "series" / "baseline_adv_recall.dat");
  CHECK(series.rfind("# lambda baseline_adv_recall\n", 0) == 0);
  // one data line per lambda
  CHECK(std::count(series.begin(), series.end(), '\n') == 3);
}

TEST_CASE("cli: train and pl-estimate subcommands") {
  const fs::path dir = scratch_dir("cli_train");
  std::string cfg = base_config((dir / "out").string());
  cfg +=
      "[pl]\n"
      "restarts = 0, 2\n"
      "trials = 20\n"
      "reference = exhaustive_binary\n";
  spit(dir / "c.cfg", cfg);
  CHECK(run_cli({"train", "--config", (dir / "c.cfg").string()}) == 0);
  CHECK(fs::exists(dir / "out" / "model.json"));
  CHECK(run_cli({"pl-estimate", "--config", (dir / "c.cfg").string()}) == 0);
  const std::string pl = slurp(dir / "out" / "pl.txt");
  CHECK(pl.find("# restarts trials failures p_l") != std::string::npos);
}
