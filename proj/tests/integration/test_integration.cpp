#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "txadv/io.hpp"

namespace fs = std::filesystem;
using txadv::Json;

namespace {

const fs::path kWork = fs::path(TXADV_FIXTURE_CACHE) / "integration";

struct CliRun {
  int code = -1;
  std::string output;
};

CliRun cli(const std::string& args) {
  const std::string cmd = std::string(TXADV_CLI) + " " + args + " 2>&1";
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string path(const fs::path& p) { return "'" + p.string() + "'"; }

CliRun ok(const std::string& args) {
  CliRun r = cli(args);
  EXPECT_EQ(r.code, 0) << args << "\n" << r.output;
  return r;
}

std::string read(const fs::path& p) { return txadv::io::read_file(p); }

std::vector<std::vector<std::string>> csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    size_t start = 0;
    for (size_t k = 0; k <= line.size(); ++k)
      if (k == line.size() || line[k] == ',') {
        cells.push_back(line.substr(start, k - start));
        start = k + 1;
      }
    rows.push_back(std::move(cells));
  }
  return rows;
}

void expect_same_dir(const fs::path& a, const fs::path& b, const std::vector<std::string>& skip = {"config.json"}) {
  size_t n = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const std::string name = e.path().filename().string();
    if (std::find(skip.begin(), skip.end(), name) != skip.end()) continue;
    ASSERT_TRUE(fs::exists(b / name)) << name;
    EXPECT_EQ(read(e.path()), read(b / name)) << name << " differs between " << a << " and " << b;
    ++n;
  }
  EXPECT_GT(n, 0u);
}

// Small but learnable: 400 clients, strong signal, cheap GRU and boostings.
const char* kConfig = R"({
  "seed": 7,
  "data": {"n_clients": 400, "seq_len": 120, "n_mcc": 30, "default_rate": 0.25, "signal_strength": 0.9},
  "model": {
    "gru": {"hidden": 16, "window": 120, "epochs": 12, "learning_rate": 0.003},
    "nn_mix_runs": 3,
    "boost": {"n_trees": 60},
    "robust": {"n_trees": 40},
    "robust_members": 2,
    "pool": {"n_members": 8},
    "filter_clients": 60,
    "filter_candidates": 30
  },
  "attack": {"candidates": 60, "beam_candidates": 120, "beam_width": 4, "max_edits": 10},
  "defense": {"repeats": 3},
  "eval": {"budgets": [3, 5, 10]}
})";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    txadv::io::write_file(kWork / "config.json", kConfig);
    const std::string cfg = "--config " + path(kWork / "config.json");
    ASSERT_EQ(cli("gen-data " + cfg + " --out " + path(kWork / "data")).code, 0);
    ASSERT_EQ(cli("train " + cfg + " --kind nn-base --data " + path(kWork / "data") + " --out " + path(kWork / "nn")).code, 0);
    ASSERT_EQ(cli("train " + cfg + " --kind boost-base --teacher " + path(kWork / "nn") + " --data " +
                  path(kWork / "data") + " --out " + path(kWork / "bb"))
                  .code,
              0);
  }
  static std::string cfg() { return "--config " + path(kWork / "config.json"); }
  static std::string data() { return " --data " + path(kWork / "data"); }
  static fs::path dir(const std::string& name) { return kWork / name; }
};

}  // namespace

TEST_F(Cli, GenDataWritesFilesAndIsDeterministic) {
  for (const char* f : {"dataset.jsonl", "catalog.json", "splits.csv", "config.json"})
    EXPECT_TRUE(fs::exists(dir("data") / f)) << f;
  ok("gen-data " + cfg() + " --out " + path(dir("data2")));
  expect_same_dir(dir("data"), dir("data2"));
  const Json echo = txadv::io::load_json(dir("data") / "config.json");
  EXPECT_EQ(echo["data"]["n_clients"], 400);
  EXPECT_EQ(echo["seed"], 7);
}

TEST_F(Cli, DefaultLabelRateIsNearFourPercent) {
  const CliRun r = ok("gen-data --out " + path(dir("default_data")));
  const auto pos = r.output.find("label rate ");
  ASSERT_NE(pos, std::string::npos) << r.output;
  const double rate = std::stod(r.output.substr(pos + 11));
  EXPECT_GE(rate, 0.02);
  EXPECT_LE(rate, 0.06);
  fs::remove_all(dir("default_data"));
}

TEST_F(Cli, InvalidInputsExitNonzero) {
  txadv::io::write_file(dir("zero.json"), R"({"data": {"n_clients": 0}})");
  CliRun r = cli("gen-data --config " + path(dir("zero.json")) + " --out " + path(dir("zero")));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("n_clients"), std::string::npos) << r.output;
  r = cli("train --kind nn-base --data " + path(dir("no-such-data")) + " --out " + path(dir("x")));
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("not found"), std::string::npos) << r.output;
  EXPECT_NE(cli("train --kind nn-giant" + data()).code, 0);
  txadv::io::write_file(dir("typo.json"), R"({"attack": {"max_edit": 3}})");
  EXPECT_NE(cli("gen-data --config " + path(dir("typo.json")) + " --out " + path(dir("typo"))).code, 0);
}

TEST_F(Cli, HelpListsEveryModelKind) {
  const CliRun r = cli("train --help");
  for (const char* k : {"nn-base", "nn-mix", "boost-base", "boost-mix-2", "boost-mix-5", "boost-mix-filter", "surrogate-pool"})
    EXPECT_NE(r.output.find(k), std::string::npos) << k;
}

TEST_F(Cli, TrainWritesMetricsAndDistillationAgreement) {
  const Json nn = txadv::io::load_json(dir("nn") / "metrics.json");
  EXPECT_GT(nn["holdout_auc"].get<double>(), 0.6);
  const Json bb = txadv::io::load_json(dir("bb") / "metrics.json");
  ASSERT_TRUE(bb.contains("teacher_rank_agreement")) << bb.dump();
  EXPECT_GT(bb["teacher_rank_agreement"].get<double>(), 0.5);
  EXPECT_NE(cli("train " + cfg() + " --kind nn-mix --teacher " + path(dir("nn")) + data() + " --out " + path(dir("t")))
                .code,
            0);
}

TEST_F(Cli, TrainingIsWorkerCountIndependent) {
  const std::string base = "train " + cfg() + " --kind boost-mix-5 --teacher " + path(dir("nn")) + data();
  ok(base + " --workers 1 --out " + path(dir("mix5_w1")));
  ok(base + " --workers 4 --out " + path(dir("mix5_w4")));
  ok(base + " --workers 8 --out " + path(dir("mix5_w8")));
  expect_same_dir(dir("mix5_w1"), dir("mix5_w4"));
  expect_same_dir(dir("mix5_w1"), dir("mix5_w8"));
}

TEST_F(Cli, GreedyAttackHurtsAndRandomBarelyDoes) {
  const std::string nn = " --model " + path(dir("nn"));
  ok("attack " + cfg() + " --attack greedy" + nn + data() + " --out " + path(dir("greedy")));
  ok("attack " + cfg() + " --attack random" + nn + data() + " --out " + path(dir("random")));
  const Json g = txadv::io::load_json(dir("greedy") / "summary.json");
  const Json r = txadv::io::load_json(dir("random") / "summary.json");
  EXPECT_EQ(g["split"], "private");
  EXPECT_GT(g["attack_score"].get<double>(), 0.0);
  EXPECT_LE(std::abs(r["attack_score"].get<double>()), 0.03);
  EXPECT_TRUE(fs::exists(dir("greedy") / "edits.jsonl"));
  EXPECT_TRUE(fs::exists(dir("greedy") / "scores.csv"));
}

TEST_F(Cli, AttackIsRerunAndWorkerCountIndependent) {
  const std::string base = "attack " + cfg() + " --attack beam --model " + path(dir("bb")) + data();
  ok(base + " --out " + path(dir("beam_a")));
  ok(base + " --out " + path(dir("beam_b")));
  ok(base + " --workers 4 --out " + path(dir("beam_w4")));
  ok(base + " --workers 8 --out " + path(dir("beam_w8")));
  expect_same_dir(dir("beam_a"), dir("beam_b"));
  expect_same_dir(dir("beam_a"), dir("beam_w4"));
  expect_same_dir(dir("beam_a"), dir("beam_w8"));
}

TEST_F(Cli, EveryAttackKindRunsAndValidates) {
  const std::string nn = " --model " + path(dir("nn"));
  for (const char* a : {"baseline", "gradient"})
    ok("attack " + cfg() + " --attack " + a + nn + data() + " --budget 3 --out " + path(dir(std::string("k_") + a)));
  ok("attack " + cfg() + " --attack combined" + nn + " --model " + path(dir("bb")) + " --weights 0.5 --weights 0.5" +
     data() + " --budget 3 --out " + path(dir("k_combined")));
  ok("attack " + cfg() + " --attack combined --random-choice" + nn + " --model " + path(dir("bb")) + data() +
     " --budget 3 --out " + path(dir("k_choice")));
  const Json s = txadv::io::load_json(dir("k_combined") / "summary.json");
  EXPECT_EQ(s["budget"], 3);
}

TEST_F(Cli, FlagsOverrideTheConfigFile) {
  txadv::io::write_file(dir("budget4.json"), R"({"seed": 7, "attack": {"max_edits": 4, "candidates": 20}})");
  const std::string base = "attack --config " + path(dir("budget4.json")) + " --attack random --model " +
                           path(dir("bb")) + data();
  ok(base + " --out " + path(dir("prec_file")));
  ok(base + " --budget 2 --split public --out " + path(dir("prec_flag")));
  const Json f = txadv::io::load_json(dir("prec_file") / "summary.json");
  const Json g = txadv::io::load_json(dir("prec_flag") / "summary.json");
  EXPECT_EQ(f["budget"], 4);
  EXPECT_EQ(g["budget"], 2);
  EXPECT_EQ(g["split"], "public");
  const Json echo = txadv::io::load_json(dir("prec_flag") / "config.json");
  EXPECT_EQ(echo["attack"]["max_edits"], 2);
  EXPECT_EQ(echo["attack"]["candidates"], 20);
  EXPECT_EQ(echo["attack"]["beam_width"], 100);
}

TEST_F(Cli, DefendWrapsAndReloads) {
  ok("defend " + cfg() + " --model " + path(dir("bb")) + " --strategy subsample --out " + path(dir("def_sub")));
  ok("defend " + cfg() + " --model " + path(dir("bb")) + " --strategy filter" + data() + " --out " +
     path(dir("def_filter")));
  ok("attack " + cfg() + " --attack random --budget 2 --model " + path(dir("def_sub")) + data() + " --out " +
     path(dir("def_sub_attack")));
  const Json m = txadv::io::load_json(dir("def_filter") / "model.json");
  EXPECT_EQ(m["model"]["kind"], "filter_defense");
  EXPECT_NE(cli("defend " + cfg() + " --model " + path(dir("bb")) + " --strategy filter --out " + path(dir("d"))).code, 0);
}

TEST_F(Cli, TournamentMasksAndIsByteIdentical) {
  ok("attack " + cfg() + " --attack greedy --model " + path(dir("bb")) + data() + " --out " + path(dir("greedy_bb")));
  ok("attack " + cfg() + " --attack random --model " + path(dir("nn")) + data() + " --out " + path(dir("random_t")));
  const std::string args = "tournament " + cfg() + data() + " --attack-file g=" + (dir("greedy_bb") / "edits.jsonl").string() +
                           " --attack-file r=" + (dir("random_t") / "edits.jsonl").string() + " --model nn=" +
                           dir("nn").string() + " --model bb=" + dir("bb").string() + " --author g=alice --author bb=alice";
  ok(args + " --out " + path(dir("tour_a")));
  ok(args + " --out " + path(dir("tour_b")));
  expect_same_dir(dir("tour_a"), dir("tour_b"));
  const std::string m = read(dir("tour_a") / "attack_matrix.csv");
  EXPECT_EQ(m.substr(0, m.find('\n')), "attack,nn,bb");
  EXPECT_EQ(read(dir("tour_a") / "attack_matrix.mask.csv"), "attack,defense\ng,bb\n");


  // Averages in the rankings must match the unmasked cells of the matrix: g has one cell left, r has two.
  const auto cells = csv(m);
  ASSERT_EQ(cells.size(), 3u);
  EXPECT_EQ(cells[1], (std::vector<std::string>{"g", cells[1][1], ""}));
  const double g_avg = std::stod(cells[1][1]);
  const double r_avg = (std::stod(cells[2][1]) + std::stod(cells[2][2])) / 2;
  for (const auto& row : csv(read(dir("tour_a") / "attack_rankings.csv"))) {
    if (row[0] != "attack") continue;
    EXPECT_NEAR(std::stod(row[2]), row[1] == "g" ? g_avg : r_avg, 2e-6) << row[1];
  }
}

TEST_F(Cli, TournamentListsDisqualifiedAttacks) {
  ok("attack " + cfg() + " --attack random --model " + path(dir("nn")) + data() + " --out " + path(dir("random_dq")));
  const CliRun r = ok("tournament " + cfg() + data() + " --budget 1 --attack-file r=" +
                   (dir("random_dq") / "edits.jsonl").string() + " --model nn=" + dir("nn").string() + " --out " +
                   path(dir("tour_dq")));
  EXPECT_NE(r.output.find("disqualified r"), std::string::npos) << r.output;
  const std::string dq = read(dir("tour_dq") / "disqualified.csv");
  EXPECT_GT(std::count(dq.begin(), dq.end(), '\n'), 1);
}

TEST_F(Cli, SweepAndReport) {
  ok("sweep " + cfg() + " --attack greedy --model " + path(dir("bb")) + " --surrogate nn=" + dir("nn").string() + data() +
     " --budgets 0 --budgets 3 --budgets 5 --out " + path(dir("sweep")));
  const std::string s = read(dir("sweep") / "sweep.csv");
  EXPECT_EQ(s.substr(0, s.find('\n')), "attack,group,budget,clean_auc,attacked_auc");
  EXPECT_NE(s.find("greedy:nn,different-architecture,0,"), std::string::npos) << s;
  EXPECT_NE(s.find("random,random,5,"), std::string::npos) << s;

  ok("attack " + cfg() + " --attack random --budget 3 --model " + path(dir("nn")) + data() + " --out " +
     path(dir("rep_in")));
  ok("report " + cfg() + " --input a=" + dir("rep_in").string() + " --out " + path(dir("report")));
  ok("report " + cfg() + " --input a=" + dir("rep_in").string() + " --out " + path(dir("report2")));
  expect_same_dir(dir("report"), dir("report2"));
  const std::string sc = read(dir("report") / "scores.csv");
  EXPECT_EQ(sc.substr(0, sc.find('\n')), "series,value");
  EXPECT_NE(sc.find("a:attacked,"), std::string::npos);
  EXPECT_NE(cli("report " + cfg() + " --input " + path(dir("data")) + " --out " + path(dir("r3"))).code, 0);
}

TEST_F(Cli, CommandsDoNotMutateInputs) {
  const std::string before = read(dir("data") / "dataset.jsonl");
  const std::string model = read(dir("nn") / "model.json");
  ok("attack " + cfg() + " --attack random --budget 2 --model " + path(dir("nn")) + data() + " --out " +
     path(dir("mut")));
  EXPECT_EQ(read(dir("data") / "dataset.jsonl"), before);
  EXPECT_EQ(read(dir("nn") / "model.json"), model);
}
