#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "txadv/config.hpp"
#include "txadv/error.hpp"
#include "txadv/metrics.hpp"
#include "txadv/report.hpp"
#include "txadv/tournament.hpp"

namespace fs = std::filesystem;
using namespace txadv;

namespace {

struct Flags {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
  std::optional<int> workers;
  std::optional<int> budget;
  std::string kind;
  std::string attack;
  std::string split;
};

void add_common(CLI::App* cmd, Flags& f, bool with_kind, bool with_attack) {
  cmd->add_option("--config", f.config, "JSON run config")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "global seed");
  cmd->add_option("--out", f.out, "output directory (default: eval.out_dir)");
  cmd->add_option("--workers", f.workers, "worker threads; results do not depend on it");
  cmd->add_option("--budget", f.budget, "max edits per client");
  cmd->add_option("--split", f.split, "evaluation split")->check(CLI::IsMember({"public", "private", "both"}));
  if (with_kind) {
    std::vector<std::string> kinds;
    for (DefendedKind k : all_defended_kinds()) kinds.push_back(defended_kind_name(k));
    cmd->add_option("--kind", f.kind, "model kind")->check(CLI::IsMember(kinds));
  }
  if (with_attack)
    cmd->add_option("--attack", f.attack, "attack kind")
        ->check(CLI::IsMember({"baseline", "random", "greedy", "beam", "gradient", "combined"}));
}

RunConfig effective_config(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : RunConfig::load(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.workers) c.workers = *f.workers;
  if (f.budget) c.attack.budget.max_edits = *f.budget;
  if (!f.kind.empty()) c.model_kind = parse_defended_kind(f.kind);
  if (!f.attack.empty()) c.attack_kind = parse_attack_kind(f.attack);
  if (!f.split.empty()) c.split = parse_eval_split(f.split);
  if (!f.out.empty()) c.out_dir = f.out;
  c.validate();
  return c;
}

fs::path prepare_out(const RunConfig& c) {
  fs::path out(c.out_dir);
  fs::create_directories(out);
  io::save_json(out / "config.json", c.to_json());
  return out;
}

Dataset load_data(const std::string& path) {
  if (path.empty()) throw Error("--data is required");
  fs::path p(path);
  if (fs::is_directory(p)) p /= "dataset.jsonl";
  if (!fs::exists(p)) throw Error("dataset not found: " + p.string());
  Dataset ds = io::load_dataset(p);
  ds.validate();
  return ds;
}

MccCatalog train_catalog(const Dataset& ds) { return build_catalog(ds.subset(ds.indices_with(SplitTag::kTrain))); }

std::vector<ClientSequence> cohort_of(const Dataset& ds, EvalSplit split) {
  std::vector<ClientSequence> out;
  for (size_t i : split_indices(ds, split)) out.push_back(ds.sequences[i]);
  if (out.empty()) throw Error(std::string("dataset has no clients on split ") + eval_split_name(split));
  return out;
}

std::vector<int> labels_of(std::span<const ClientSequence> seqs) {
  std::vector<int> y;
  for (const auto& s : seqs) {
    if (!s.label) throw Error("client " + s.client_id + " has no label");
    y.push_back(*s.label);
  }
  return y;
}

// "[NAME=]PATH": the name defaults to the file stem, or the parent directory
// for generic stems.
std::pair<std::string, fs::path> named_path(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos) return {arg.substr(0, eq), fs::path(arg.substr(eq + 1))};
  fs::path p(arg);
  std::string name = p.stem().string();
  if ((name == "model" || name == "edits") && p.has_parent_path() && !p.parent_path().filename().empty())
    name = p.parent_path().filename().string();
  return {name, p};
}

ModelPtr load_model_file(const fs::path& p) {
  fs::path file = fs::is_directory(p) ? p / "model.json" : p;
  if (!fs::exists(file)) throw Error("model not found: " + file.string());
  return load_model(file);
}

std::string scores_csv(std::span<const ClientSequence> cohort, std::span<const double> clean,
                       std::span<const double> attacked) {
  std::string s = "client_id,label,clean,attacked\n";
  for (size_t i = 0; i < cohort.size(); ++i)
    s += cohort[i].client_id + "," + std::to_string(*cohort[i].label) + "," + format_number(clean[i]) + "," +
         format_number(attacked[i]) + "\n";
  return s;
}

int cmd_gen_data(const RunConfig& c) {
  const RunConfig eff = c.resolved();
  Dataset ds = generate_synthetic(eff.data);
  assign_splits(ds, c.train_fraction, c.split_seed());
  const fs::path out = prepare_out(c);
  io::save_dataset(out / "dataset.jsonl", ds);
  io::save_json(out / "catalog.json", io::catalog_to_json(train_catalog(ds)));
  std::string splits = "client_id,split\n";
  for (size_t i = 0; i < ds.size(); ++i) splits += ds.sequences[i].client_id + "," + split_name(ds.split_tags[i]) + "\n";
  io::write_file(out / "splits.csv", splits);

  double positives = 0;
  size_t lo = SIZE_MAX, hi = 0, total = 0;
  for (const auto& s : ds.sequences) {
    positives += *s.label;
    lo = std::min(lo, s.transactions.size());
    hi = std::max(hi, s.transactions.size());
    total += s.transactions.size();
  }
  std::printf("clients %zu  label rate %.4f  length min %zu mean %.1f max %zu\n", ds.size(), positives / ds.size(), lo,
              static_cast<double>(total) / ds.size(), hi);
  return 0;
}

int cmd_train(const RunConfig& c, const std::string& data, const std::string& teacher_path) {
  const RunConfig eff = c.resolved();
  const Dataset ds = load_data(data);
  const fs::path out = prepare_out(c);
  ModelPtr teacher = teacher_path.empty() ? nullptr : load_model_file(teacher_path);
  const int w = c.workers;
  const DefendedKind kind = c.model_kind;
  Zoo zoo = prepare_zoo(ds);
  const bool boosts = kind == DefendedKind::kBoostBase || kind == DefendedKind::kBoostMix2 ||
                      kind == DefendedKind::kBoostMix5 || kind == DefendedKind::kBoostMixFilter;
  if (teacher && boosts) train_boosts(zoo, ds, eff.model, teacher, w);
  if (teacher && kind == DefendedKind::kSurrogatePool) train_pool(zoo, ds, eff.model, teacher, w);
  if (teacher && !boosts && kind != DefendedKind::kSurrogatePool)
    throw Error(std::string("--teacher does not apply to ") + defended_kind_name(kind));
  ensure_components(zoo, kind, ds, eff.model, w);
  const ModelPtr model = build_defended_model(kind, zoo, eff.model);
  save_model(out / "model.json", *model);

  Json metrics;
  metrics["kind"] = defended_kind_name(kind);
  metrics["train_auc"] = auc_of(*model, sequences(ds, SplitTag::kTrain), w);
  metrics["holdout_auc"] = auc_of(*model, cohort_of(ds, c.split), w);
  metrics["holdout_split"] = eval_split_name(c.split);
  Json parts = Json::object();
  if (zoo.nn_base) parts["nn_base"] = zoo.nn_base->metrics;
  if (zoo.boost_base) parts["boost_base"] = zoo.boost_base->metrics;
  if (zoo.boost_alt) parts["boost_alt"] = zoo.boost_alt->metrics;
  if (zoo.pool) parts["surrogate_pool"] = zoo.pool->metrics;
  if (zoo.filter) parts["filter"] = zoo.filter->manifest();
  if (zoo.boost_base && zoo.boost_base->metrics.contains("teacher_holdout_spearman"))
    metrics["teacher_rank_agreement"] = zoo.boost_base->metrics["teacher_holdout_spearman"];
  metrics["components"] = parts;
  io::save_json(out / "metrics.json", metrics);
  std::printf("%s  train AUC %.4f  holdout AUC %.4f\n", defended_kind_name(kind), metrics["train_auc"].get<double>(),
              metrics["holdout_auc"].get<double>());
  return 0;
}

int cmd_attack(const RunConfig& c, const std::string& data, const std::vector<std::string>& model_paths,
               const std::vector<double>& weights, bool random_choice, const std::string& target_path) {
  const RunConfig eff = c.resolved();
  if (model_paths.empty()) throw Error("attack needs at least one --model");
  const Dataset ds = load_data(data);
  std::vector<ModelPtr> models;
  for (const auto& p : model_paths) models.push_back(load_model_file(p));
  const ModelPtr target = target_path.empty() ? models.front() : load_model_file(target_path);
  const MccCatalog catalog = train_catalog(ds);
  const auto cohort = cohort_of(ds, c.split);
  const fs::path out = prepare_out(c);

  AttackResult r = run_attack(c.attack_kind, models, weights, cohort, catalog, eff.attack, c.workers, random_choice);
  size_t bad = 0;
  for (size_t i = 0; i < cohort.size(); ++i) {
    const auto rep = validate_edits(cohort[i], r.edits[i], eff.attack.budget, catalog);
    for (const auto& v : rep.violations) {
      std::fprintf(stderr, "client %s: %s: %s\n", cohort[i].client_id.c_str(), violation_name(v.kind), v.message.c_str());
      ++bad;
    }
  }
  if (bad) throw Error(std::to_string(bad) + " constraint violation(s); no edits written");

  Json header = r.header;
  header["split"] = eval_split_name(c.split);
  io::save_edit_file(out / "edits.jsonl", {header, r.edits});
  const auto attacked = apply_attack(cohort, r.edits);
  ScoredCohort sc;
  for (const auto& s : cohort) sc.client_ids.push_back(s.client_id);
  sc.labels = labels_of(cohort);
  sc.clean = target->score_batch(cohort, c.workers);
  sc.attacked = target->score_batch(attacked, c.workers);
  sc.validate();
  io::write_file(out / "scores.csv", scores_csv(cohort, sc.clean, sc.attacked));
  Json summary;
  summary["attack"] = r.name;
  summary["target"] = target->kind();
  summary["split"] = eval_split_name(c.split);
  summary["clients"] = cohort.size();
  summary["budget"] = eff.attack.budget.max_edits;
  summary["clean_auc"] = sc.clean_auc();
  summary["attacked_auc"] = sc.attacked_auc();
  summary["attack_score"] = attack_score(sc);
  summary["defense_score"] = defense_score(sc);
  summary["evaluations"] = r.evaluations;
  summary["tau"] = r.tau;
  io::save_json(out / "summary.json", summary);
  std::printf("%s on %s: clean AUC %.4f  attacked AUC %.4f  attack_score %.4f\n", r.name.c_str(),
              eval_split_name(c.split), sc.clean_auc(), sc.attacked_auc(), attack_score(sc));
  return 0;
}

int cmd_defend(const RunConfig& c, const std::string& model_path, const std::string& strategy,
               const std::string& data) {
  RunConfig cfg = c;
  if (!strategy.empty()) cfg.defense.strategy = parse_defense_strategy(strategy);
  const RunConfig eff = cfg.resolved();
  const ModelPtr base = load_model_file(model_path);
  const DefenseSpec& d = cfg.defense;
  const uint64_t seed = derive_seed(cfg.seed, "defense");
  ModelPtr wrapped;
  switch (d.strategy) {
    case DefenseStrategy::kSubsample: wrapped = std::make_shared<SubsampleEnsemble>(base, d.share, d.repeats, seed); break;
    case DefenseStrategy::kNnMix: wrapped = std::make_shared<NnMix>(base, d.repeats, d.share, seed); break;
    case DefenseStrategy::kPermutationAverage: wrapped = std::make_shared<PermutationAverage>(base, d.n_perm, seed); break;
    case DefenseStrategy::kFilter: {
      const Dataset ds = load_data(data);
      const MccCatalog catalog = train_catalog(ds);
      auto filter = train_filter_against(base, sequences(ds, SplitTag::kTrain), catalog, eff.model, cfg.workers);
      wrapped = std::make_shared<FilterDefense>(filter, base, d.theta);
      break;
    }
  }
  const fs::path out = prepare_out(cfg);
  save_model(out / "model.json", *wrapped);
  std::printf("%s(%s) written to %s\n", wrapped->kind().c_str(), base->kind().c_str(), (out / "model.json").c_str());
  return 0;
}

std::map<std::string, std::string> parse_authors(const std::vector<std::string>& args) {
  std::map<std::string, std::string> out;
  for (const auto& a : args) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw Error("--author expects NAME=AUTHOR, got '" + a + "'");
    out[a.substr(0, eq)] = a.substr(eq + 1);
  }
  return out;
}

int cmd_tournament(const RunConfig& c, const std::string& data, const std::vector<std::string>& attack_files,
                   const std::vector<std::string>& model_files, const std::vector<std::string>& author_args) {
  if (attack_files.empty() || model_files.empty()) throw Error("tournament needs >= 1 --attack-file and >= 1 --model");
  const Dataset ds = load_data(data);
  const auto authors = parse_authors(author_args);
  auto author_of = [&](const std::string& name) {
    auto it = authors.find(name);
    return it == authors.end() ? std::string() : it->second;
  };
  std::vector<AttackEntry> attacks;
  for (const auto& a : attack_files) {
    auto [name, path] = named_path(a);
    if (fs::is_directory(path)) path /= "edits.jsonl";
    if (!fs::exists(path)) throw Error("attack file not found: " + path.string());
    attacks.push_back({name, author_of(name), io::load_edit_file(path).lists});
  }
  std::vector<DefenseEntry> defenses;
  for (const auto& m : model_files) {
    auto [name, path] = named_path(m);
    defenses.push_back({name, author_of(name), load_model_file(path)});
  }
  const auto cohort = cohort_of(ds, c.split);
  const fs::path out = prepare_out(c);
  const TournamentResult r = run_tournament(attacks, defenses, cohort, train_catalog(ds), c.attack.budget, c.workers);
  emit_report(out, r);
  for (const auto& d : r.disqualified)
    std::fprintf(stderr, "disqualified %s (client %s): %s\n", d.attack.c_str(), d.client_id.c_str(), d.reason.c_str());
  std::printf("%zu attacks x %zu defenses, %zu disqualified\n", attacks.size(), defenses.size(), r.disqualified.size());
  return 0;
}

int cmd_sweep(const RunConfig& c, const std::string& data, const std::string& model_path,
              const std::vector<std::string>& surrogate_args, const std::vector<int>& budget_args) {
  const RunConfig eff = c.resolved();
  const Dataset ds = load_data(data);
  const ModelPtr target = load_model_file(model_path);
  const MccCatalog catalog = train_catalog(ds);
  const auto cohort = cohort_of(ds, c.split);
  const std::vector<int> budgets = budget_args.empty() ? c.budgets : budget_args;
  const fs::path out = prepare_out(c);

  std::vector<SweepEntry> entries;
  auto attack_at = [&](AttackKind kind, ModelPtr surrogate) {
    return [&, kind, surrogate](int budget) {
      if (budget == 0) {
        std::vector<EditList> none;
        for (const auto& s : cohort) none.push_back({s.client_id, {}});
        return none;
      }
      AttackConfig cfg = eff.attack;
      cfg.budget.max_edits = budget;
      const ModelPtr ms[] = {surrogate};
      return run_attack(kind, ms, {}, cohort, catalog, cfg, c.workers).edits;
    };
  };
  std::vector<std::string> sources = surrogate_args;
  if (sources.empty()) sources.push_back(model_path);
  for (const auto& s : sources) {
    auto [name, path] = named_path(s);
    const ModelPtr surrogate = load_model_file(path);
    const std::string group = surrogate->kind() == target->kind() ? "same-architecture" : "different-architecture";
    entries.push_back({std::string(attack_kind_name(c.attack_kind)) + ":" + name, group,
                       attack_at(c.attack_kind, surrogate)});
  }
  entries.push_back({"random", "random", attack_at(AttackKind::kRandom, target)});
  const auto rows = budget_sweep(entries, *target, cohort, budgets, c.workers);
  emit_report(out, rows);
  for (const auto& r : rows)
    std::printf("%-32s budget %2d  attacked AUC %.4f\n", r.attack.c_str(), r.budget, r.attacked_auc);
  return 0;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(io::read_file(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

int cmd_report(const RunConfig& c, const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw Error("report needs >= 1 --input attack output directory");
  std::map<std::string, std::vector<double>> series;
  Json all = Json::array();
  std::string table = "attack,target,split,budget,clean_auc,attacked_auc,attack_score,defense_score\n";
  for (const auto& arg : inputs) {
    auto [name, dir] = named_path(arg);
    if (!fs::exists(dir / "summary.json") || !fs::exists(dir / "scores.csv"))
      throw Error(dir.string() + " is not an attack output directory (missing summary.json or scores.csv)");
    const Json s = io::load_json(dir / "summary.json");
    const auto rows = read_csv(dir / "scores.csv");
    if (rows.empty() || rows[0] != std::vector<std::string>{"client_id", "label", "clean", "attacked"})
      throw Error((dir / "scores.csv").string() + ": unexpected header");
    for (size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() != 4) throw Error((dir / "scores.csv").string() + ": malformed row " + std::to_string(i));
      series[name + ":clean"].push_back(std::stod(rows[i][2]));
      series[name + ":attacked"].push_back(std::stod(rows[i][3]));
    }
    table += name + "," + s.at("target").get<std::string>() + "," + s.at("split").get<std::string>() + "," +
             std::to_string(s.at("budget").get<int>()) + "," + format_number(s.at("clean_auc").get<double>()) + "," +
             format_number(s.at("attacked_auc").get<double>()) + "," +
             format_number(s.at("attack_score").get<double>()) + "," +
             format_number(s.at("defense_score").get<double>()) + "\n";
    Json entry = s;
    entry["name"] = name;
    all.push_back(entry);
  }
  const fs::path out = prepare_out(c);
  emit_report(out, series);
  io::write_file(out / "summary.csv", table);
  io::save_json(out / "summary.json", all);
  std::printf("report over %zu attack runs written to %s\n", inputs.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"txadv: adversarial attacks and defenses for transaction-sequence classifiers"};
  app.require_subcommand(1);

  Flags f;
  std::string data, teacher, target, strategy;
  std::vector<std::string> models, attack_files, authors, surrogates, inputs;
  std::vector<double> weights;
  std::vector<int> budgets;
  bool random_choice = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset with train/public/private splits");
  add_common(gen, f, false, false);

  auto* train = app.add_subcommand("train", "train a defended model kind");
  add_common(train, f, true, false);
  train->add_option("--data", data, "dataset directory or file")->required();
  train->add_option("--teacher", teacher, "teacher model for distilled boostings or the surrogate pool");

  auto* attack = app.add_subcommand("attack", "attack the split's clients and validate the edits");
  add_common(attack, f, false, true);
  attack->add_option("--data", data, "dataset directory or file")->required();
  attack->add_option("--model", models, "attacked model(s); combined attacks take several")->required();
  attack->add_option("--weights", weights, "combined-attack weights");
  attack->add_flag("--random-choice", random_choice, "combined attack: pick one of the first two models per client");
  attack->add_option("--target", target, "model scored for the summary (default: first --model)");

  auto* defend = app.add_subcommand("defend", "wrap a model with a defense and re-save it");
  add_common(defend, f, false, false);
  defend->add_option("--model", models, "model to wrap")->required()->expected(1);
  defend->add_option("--strategy", strategy, "defense strategy")
      ->check(CLI::IsMember({"subsample", "nn-mix", "permutation-average", "filter"}));
  defend->add_option("--data", data, "dataset (filter strategy only)");

  auto* tour = app.add_subcommand("tournament", "score every attack file against every model");
  add_common(tour, f, false, false);
  tour->add_option("--data", data, "dataset directory or file")->required();
  tour->add_option("--attack-file", attack_files, "[NAME=]PATH of an edit file")->required();
  tour->add_option("--model", models, "[NAME=]PATH of a model")->required();
  tour->add_option("--author", authors, "NAME=AUTHOR; same-author cells are masked");

  auto* sweep = app.add_subcommand("sweep", "attacked AUC of a model over budgets");
  add_common(sweep, f, false, true);
  sweep->add_option("--data", data, "dataset directory or file")->required();
  sweep->add_option("--model", models, "evaluated model")->required()->expected(1);
  sweep->add_option("--surrogate", surrogates, "[NAME=]PATH of an attacked surrogate (default: the model)");
  sweep->add_option("--budgets", budgets, "budgets (default: eval.budgets)");

  auto* report = app.add_subcommand("report", "summary tables and score ECDF data from attack runs");
  add_common(report, f, false, false);
  report->add_option("--input", inputs, "[NAME=]DIR of an attack run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const RunConfig c = effective_config(f);
    if (*gen) return cmd_gen_data(c);
    if (*train) return cmd_train(c, data, teacher);
    if (*attack) return cmd_attack(c, data, models, weights, random_choice, target);
    if (*defend) return cmd_defend(c, models.front(), strategy, data);
    if (*tour) return cmd_tournament(c, data, attack_files, models, authors);
    if (*sweep) return cmd_sweep(c, data, models.front(), surrogates, budgets);
    if (*report) return cmd_report(c, inputs);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "txadv: error: %s\n", e.what());
    return 1;
  }
  return 1;
}
