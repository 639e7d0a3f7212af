#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "txadv/error.hpp"
#include "txadv/io.hpp"
#include "txadv/metrics.hpp"
#include "txadv/pipeline.hpp"
#include "txadv/tournament.hpp"

namespace py = pybind11;
using namespace txadv;

namespace {

std::vector<std::string> split_names(const Dataset& ds) {
  std::vector<std::string> out;
  for (SplitTag t : ds.split_tags) out.emplace_back(split_name(t));
  return out;
}

// Edit lists cross the boundary as JSON text; the Python side parses it.
std::string attack(const std::string& kind, const std::vector<ModelPtr>& models, const std::vector<ClientSequence>& cohort,
                   const MccCatalog& catalog, const std::string& config, const std::vector<double>& weights,
                   int workers) {
  const AttackConfig cfg = AttackConfig::from_json(Json::parse(config));
  const AttackResult r = run_attack(parse_attack_kind(kind), models, weights, cohort, catalog, cfg, workers);
  Json lists = Json::array();
  for (const auto& e : r.edits) lists.push_back(io::edit_list_to_json(e));
  return Json{{"name", r.name}, {"tau", r.tau}, {"edits", lists}}.dump();
}

EditList edit_list_from(const std::string& text) { return io::edit_list_from_json(Json::parse(text)); }

}  // namespace

PYBIND11_MODULE(_txadv, m) {
  m.doc() = "Adversarial attacks and defenses for transaction-sequence classifiers";

  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  py::class_<Transaction>(m, "Transaction")
      .def(py::init<>())
      .def(py::init([](int mcc, double amount, int currency, int64_t timestamp) {
             return Transaction{mcc, amount, currency, timestamp};
           }),
           py::arg("mcc"), py::arg("amount"), py::arg("currency") = 0, py::arg("timestamp") = 0)
      .def_readwrite("mcc", &Transaction::mcc)
      .def_readwrite("amount", &Transaction::amount)
      .def_readwrite("currency", &Transaction::currency)
      .def_readwrite("timestamp", &Transaction::timestamp)
      .def("__repr__", [](const Transaction& t) {
        return "Transaction(mcc=" + std::to_string(t.mcc) + ", amount=" + std::to_string(t.amount) + ")";
      });

  py::class_<ClientSequence>(m, "ClientSequence")
      .def(py::init<>())
      .def_readwrite("client_id", &ClientSequence::client_id)
      .def_readwrite("label", &ClientSequence::label)
      .def_readwrite("transactions", &ClientSequence::transactions)
      .def("__len__", [](const ClientSequence& s) { return s.transactions.size(); });

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("n_mcc", &Dataset::n_mcc)
      .def_readonly("n_currency", &Dataset::n_currency)
      .def_readonly("sequences", &Dataset::sequences)
      .def("__len__", &Dataset::size)
      .def("labels", &Dataset::labels)
      .def("splits", &split_names)
      .def("test_sequences", [](const Dataset& ds) { return test_sequences(ds); })
      .def("train_sequences", [](const Dataset& ds) { return sequences(ds, SplitTag::kTrain); })
      .def("save", [](const Dataset& ds, const std::string& path) { io::save_dataset(path, ds); });

  m.def(
      "generate_synthetic",
      [](int n_clients, int seq_len, int n_mcc, double default_rate, double signal_strength, uint64_t seed,
         double train_fraction) {
        SynthConfig c;
        c.n_clients = n_clients;
        c.seq_len = seq_len;
        c.n_mcc = n_mcc;
        c.default_rate = default_rate;
        c.signal_strength = signal_strength;
        c.seed = seed;
        Dataset ds = generate_synthetic(c);
        assign_splits(ds, train_fraction, derive_seed(seed, "split"));
        return ds;
      },
      py::arg("n_clients") = 2000, py::arg("seq_len") = 300, py::arg("n_mcc") = 100, py::arg("default_rate") = 0.04,
      py::arg("signal_strength") = 0.6, py::arg("seed") = 0, py::arg("train_fraction") = 0.5);
  m.def("load_dataset", [](const std::string& path) { return io::load_dataset(path); });

  py::class_<MccCatalog>(m, "MccCatalog")
      .def_property_readonly("n_mcc", &MccCatalog::n_mcc)
      .def("observed", &MccCatalog::observed)
      .def("observed_mccs", &MccCatalog::observed_mccs)
      .def("interval", [](const MccCatalog& c, int mcc, double shrink) {
        const AmountInterval iv = allowed_amount_interval(c, mcc, shrink);
        return std::pair{iv.lo, iv.hi};
      }, py::arg("mcc"), py::arg("shrink") = 0.95);
  m.def("build_catalog", [](const Dataset& ds) { return build_catalog(ds.subset(ds.indices_with(SplitTag::kTrain))); },
        "catalog of the training split");

  py::class_<ScoreModel, std::shared_ptr<ScoreModel>>(m, "Model")
      .def("score", [](const ScoreModel& s, const ClientSequence& q) { return s.score(q); })
      .def(
          "score_batch",
          [](const ScoreModel& s, const std::vector<ClientSequence>& seqs, int workers) {
            return s.score_batch(seqs, workers);
          },
          py::arg("sequences"), py::arg("workers") = 1)
      .def_property_readonly("kind", &ScoreModel::kind)
      .def_property_readonly("gradient_capable", &ScoreModel::gradient_capable)
      .def("to_json", [](const ScoreModel& s) { return s.to_json().dump(); })
      .def("save", [](const ScoreModel& s, const std::string& path) { save_model(path, s); });
  m.def("load_model", [](const std::string& path) { return std::const_pointer_cast<ScoreModel>(load_model(path)); });

  m.def(
      "train",
      [](const std::string& kind, const Dataset& ds, const std::string& params, int workers) {
        const DefendedKind k = parse_defended_kind(kind);
        const ZooParams zp = ZooParams::from_json(Json::parse(params));
        Zoo zoo = prepare_zoo(ds);
        ensure_components(zoo, k, ds, zp, workers);
        return std::const_pointer_cast<ScoreModel>(build_defended_model(k, zoo, zp));
      },
      py::arg("kind"), py::arg("dataset"), py::arg("params") = "{}", py::arg("workers") = 1);

  m.def("roc_auc", [](const std::vector<double>& s, const std::vector<int>& y) { return roc_auc(s, y); });
  m.def("harmonic_mean", &harmonic_mean);
  m.def("spearman", [](const std::vector<double>& a, const std::vector<double>& b) { return spearman(a, b); });

  m.def("_attack", [](const std::string& kind, const std::vector<std::shared_ptr<ScoreModel>>& models,
                      const std::vector<ClientSequence>& cohort, const MccCatalog& catalog, const std::string& config,
                      const std::vector<double>& weights, int workers) {
    return attack(kind, std::vector<ModelPtr>(models.begin(), models.end()), cohort, catalog, config, weights, workers);
  });
  m.def("_apply_edits", [](const ClientSequence& s, const std::string& edits) { return apply_edits(s, edit_list_from(edits)); });
  m.def("_violations", [](const ClientSequence& s, const std::string& edits, int max_edits, double shrink,
                          const MccCatalog& catalog) {
    AttackBudget b;
    b.max_edits = max_edits;
    b.amount_shrink = shrink;
    std::vector<std::string> out;
    for (const auto& v : validate_edits(s, edit_list_from(edits), b, catalog).violations)
      out.emplace_back(violation_name(v.kind));
    return out;
  });
}
