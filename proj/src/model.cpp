#include "txadv/model.hpp"

#include <map>
#include <mutex>

#include "txadv/defenses.hpp"
#include "txadv/ensemble.hpp"
#include "txadv/error.hpp"
#include "txadv/gbdt.hpp"
#include "txadv/gru.hpp"
#include "txadv/parallel.hpp"

namespace txadv {

std::vector<double> ScoreModel::score_batch(std::span<const ClientSequence> seqs, int workers) const {
  std::vector<double> out(seqs.size());
  parallel_for(seqs.size(), workers, [&](size_t i) { out[i] = score(seqs[i]); });
  return out;
}

std::vector<double> ScoreModel::score_candidates(std::span<const Transaction> base,
                                                 std::span<const Edit> candidates) const {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    const auto edited = apply_edits(base, std::span<const Edit>(&c, 1));
    out.push_back(score(edited));
  }
  return out;
}

ConstantModel::ConstantModel(double value) : value_(value) {
  if (!(value >= 0.0 && value <= 1.0)) throw Error("constant model score must lie in [0, 1]");
}

Json ConstantModel::to_json() const {
  Json j;
  j["kind"] = kind();
  j["value"] = value_;
  return j;
}

namespace {

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, ModelLoader>& registry() {
  static std::map<std::string, ModelLoader> r;
  return r;
}

ModelPtr builtin(const std::string& kind, const Json& j) {
  if (kind == "constant") return std::make_shared<ConstantModel>(j.at("value").get<double>());
  if (kind == "gbdt") return GbdtModel::from_json(j);
  if (kind == "gru") return GruModel::from_json(j);
  if (kind == "ensemble") return EnsembleModel::from_json(j);
  if (kind == "surrogate_pool") return SurrogatePool::from_json(j);
  if (kind == "subsample_ensemble") return SubsampleEnsemble::from_json(j);
  if (kind == "nn_mix") return NnMix::from_json(j);
  if (kind == "permutation_average") return PermutationAverage::from_json(j);
  if (kind == "filter_defense") return FilterDefense::from_json(j);
  return nullptr;
}

}  // namespace

void register_model_kind(const std::string& kind, ModelLoader loader) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  registry()[kind] = std::move(loader);
}

ModelPtr model_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("kind")) throw Error("model document lacks a 'kind' field");
  const std::string kind = j.at("kind").get<std::string>();
  if (auto m = builtin(kind, j)) return m;
  ModelLoader loader;
  {
    std::lock_guard<std::mutex> lock(registry_mutex());
    auto it = registry().find(kind);
    if (it != registry().end()) loader = it->second;
  }
  if (!loader) throw Error("unknown model kind '" + kind + "'");
  return loader(j);
}

void save_model(const std::filesystem::path& path, const ScoreModel& model) {
  Json doc;
  doc["schema"] = kModelSchema;
  doc["version"] = io::kSchemaVersion;
  doc["model"] = model.to_json();
  io::write_file(path, doc.dump() + "\n");
}

ModelPtr load_model(const std::filesystem::path& path) {
  const Json doc = io::load_json(path);
  if (doc.value("schema", "") != kModelSchema) throw Error("'" + path.string() + "' is not a model file");
  if (doc.value("version", -1) != io::kSchemaVersion) throw Error("unsupported model file version");
  return model_from_json(doc.at("model"));
}

}  // namespace txadv
