#include "txadv/config.hpp"

#include "txadv/error.hpp"
#include "txadv/random.hpp"

namespace txadv {

Json synth_config_to_json(const SynthConfig& c) {
  return Json{{"n_clients", c.n_clients},         {"seq_len", c.seq_len},
              {"n_mcc", c.n_mcc},                 {"n_currency", c.n_currency},
              {"default_rate", c.default_rate},   {"signal_strength", c.signal_strength},
              {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const Json& j) {
  SynthConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "n_clients") c.n_clients = v.get<int>();
    else if (key == "seq_len") c.seq_len = v.get<int>();
    else if (key == "n_mcc") c.n_mcc = v.get<int>();
    else if (key == "n_currency") c.n_currency = v.get<int>();
    else if (key == "default_rate") c.default_rate = v.get<double>();
    else if (key == "signal_strength") c.signal_strength = v.get<double>();
    else if (key == "seed") c.seed = v.get<uint64_t>();
    else throw Error("unknown data parameter '" + key + "'");
  }
  c.validate();
  return c;
}

const char* defense_strategy_name(DefenseStrategy s) {
  switch (s) {
    case DefenseStrategy::kSubsample: return "subsample";
    case DefenseStrategy::kNnMix: return "nn-mix";
    case DefenseStrategy::kPermutationAverage: return "permutation-average";
    case DefenseStrategy::kFilter: return "filter";
  }
  return "subsample";
}

DefenseStrategy parse_defense_strategy(const std::string& name) {
  for (auto s : {DefenseStrategy::kSubsample, DefenseStrategy::kNnMix, DefenseStrategy::kPermutationAverage,
                 DefenseStrategy::kFilter})
    if (name == defense_strategy_name(s)) return s;
  throw Error("unknown defense strategy '" + name + "'");
}

void DefenseSpec::validate() const {
  if (!(share > 0.0 && share <= 1.0)) throw Error("defense share must lie in (0, 1]");
  if (repeats < 1 || n_perm < 1) throw Error("defense repeats and n_perm must be >= 1");
  if (!(theta >= 0.0 && theta <= 1.0)) throw Error("defense theta must lie in [0, 1]");
}

const char* eval_split_name(EvalSplit s) {
  switch (s) {
    case EvalSplit::kPublic: return "public";
    case EvalSplit::kPrivate: return "private";
    case EvalSplit::kBoth: return "both";
  }
  return "private";
}

EvalSplit parse_eval_split(const std::string& name) {
  for (auto s : {EvalSplit::kPublic, EvalSplit::kPrivate, EvalSplit::kBoth})
    if (name == eval_split_name(s)) return s;
  throw Error("unknown split '" + name + "' (expected public, private or both)");
}

namespace {

void reject_seeds(const Json& j, const std::string& where) {
  if (!j.is_object()) return;
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") throw Error(where + ": seeds derive from the global seed; set the top-level 'seed' instead");
    reject_seeds(v, where + "." + key);
  }
}

void strip_seeds(Json& j) {
  if (!j.is_object()) return;
  j.erase("seed");
  for (auto& [key, v] : j.items()) strip_seeds(v);
}

const Json& object_section(const Json& j, const char* name) {
  if (!j.is_object()) throw Error(std::string("config section '") + name + "' must be an object");
  return j;
}

}  // namespace

uint64_t RunConfig::split_seed() const { return derive_seed(seed, "eval"); }

RunConfig RunConfig::resolved() const {
  RunConfig r = *this;
  r.data.seed = derive_seed(seed, "data");
  r.model.seed = derive_seed(seed, "train");
  r.attack.seed = derive_seed(seed, "attack");
  return r;
}

void RunConfig::validate() const {
  if (workers < 1) throw Error("workers must be >= 1");
  data.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error("train_fraction must lie in (0, 1)");
  model.validate();
  attack.validate();
  defense.validate();
  if (budgets.empty()) throw Error("eval.budgets must not be empty");
  for (int b : budgets)
    if (b < 0) throw Error("eval.budgets entries must be >= 0");
  if (out_dir.empty()) throw Error("eval.out_dir must not be empty");
}

Json RunConfig::to_json() const {
  Json j;
  j["seed"] = seed;
  j["workers"] = workers;
  Json data_j = synth_config_to_json(data);
  data_j.erase("seed");
  data_j["train_fraction"] = train_fraction;
  j["data"] = data_j;
  Json model_j = Json{{"kind", defended_kind_name(model_kind)}};
  Json zoo = model.to_json();
  strip_seeds(zoo);
  model_j.update(zoo);
  j["model"] = model_j;
  Json attack_j = Json{{"kind", attack_kind_name(attack_kind)}};
  Json ac = attack.to_json();
  ac.erase("seed");
  attack_j.update(ac);
  j["attack"] = attack_j;
  j["defense"] = Json{{"strategy", defense_strategy_name(defense.strategy)},
                      {"share", defense.share},
                      {"repeats", defense.repeats},
                      {"n_perm", defense.n_perm},
                      {"theta", defense.theta}};
  j["eval"] = Json{{"budgets", budgets}, {"out_dir", out_dir}, {"split", eval_split_name(split)}};
  return j;
}

RunConfig RunConfig::from_json(const Json& j) {
  if (!j.is_object()) throw Error("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") {
      c.seed = v.get<uint64_t>();
    } else if (key == "workers") {
      c.workers = v.get<int>();
    } else if (key == "data") {
      reject_seeds(object_section(v, "data"), "data");
      Json synth = v;
      if (synth.contains("train_fraction")) {
        c.train_fraction = synth["train_fraction"].get<double>();
        synth.erase("train_fraction");
      }
      c.data = synth_config_from_json(synth);
    } else if (key == "model") {
      reject_seeds(object_section(v, "model"), "model");
      Json params = v;
      if (params.contains("kind")) {
        c.model_kind = parse_defended_kind(params["kind"].get<std::string>());
        params.erase("kind");
      }
      c.model = ZooParams::from_json(params);
    } else if (key == "attack") {
      reject_seeds(object_section(v, "attack"), "attack");
      Json params = v;
      if (params.contains("kind")) {
        c.attack_kind = parse_attack_kind(params["kind"].get<std::string>());
        params.erase("kind");
      }
      c.attack = AttackConfig::from_json(params);
    } else if (key == "defense") {
      for (const auto& [k, x] : object_section(v, "defense").items()) {
        if (k == "strategy") c.defense.strategy = parse_defense_strategy(x.get<std::string>());
        else if (k == "share") c.defense.share = x.get<double>();
        else if (k == "repeats") c.defense.repeats = x.get<int>();
        else if (k == "n_perm") c.defense.n_perm = x.get<int>();
        else if (k == "theta") c.defense.theta = x.get<double>();
        else throw Error("unknown defense parameter '" + k + "'");
      }
    } else if (key == "eval") {
      for (const auto& [k, x] : object_section(v, "eval").items()) {
        if (k == "budgets") c.budgets = x.get<std::vector<int>>();
        else if (k == "out_dir") c.out_dir = x.get<std::string>();
        else if (k == "split") c.split = parse_eval_split(x.get<std::string>());
        else throw Error("unknown eval parameter '" + k + "'");
      }
    } else {
      throw Error("unknown config section '" + key + "'");
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(io::read_file(path));
  } catch (const Json::parse_error& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::vector<size_t> split_indices(const Dataset& ds, EvalSplit split) {
  switch (split) {
    case EvalSplit::kPublic: return ds.indices_with(SplitTag::kPublic);
    case EvalSplit::kPrivate: return ds.indices_with(SplitTag::kPrivate);
    case EvalSplit::kBoth: return ds.test_indices();
  }
  return {};
}

}  // namespace txadv
