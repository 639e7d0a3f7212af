#include "txadv/io.hpp"

#include <fstream>
#include <sstream>

#include "txadv/error.hpp"

namespace txadv::io {

namespace {

void check_header(const Json& h, const char* schema) {
  if (!h.is_object() || h.value("schema", "") != schema)
    throw Error(std::string("expected a '") + schema + "' header on line 1");
  if (h.value("version", -1) != kSchemaVersion)
    throw Error(std::string("unsupported ") + schema + " version");
}

Json parse_line(const std::string& line, size_t lineno) {
  try {
    return Json::parse(line);
  } catch (const Json::exception& e) {
    throw Error("malformed record on line " + std::to_string(lineno) + ": " + e.what());
  }
}

}  // namespace

Json sequence_to_json(const ClientSequence& seq, SplitTag tag) {
  Json mcc = Json::array(), amount = Json::array(), currency = Json::array(), ts = Json::array();
  for (const auto& t : seq.transactions) {
    mcc.push_back(t.mcc);
    amount.push_back(t.amount);
    currency.push_back(t.currency);
    ts.push_back(t.timestamp);
  }
  Json j;
  j["client_id"] = seq.client_id;
  j["label"] = seq.label ? Json(*seq.label) : Json(nullptr);
  j["split"] = split_name(tag);
  j["mcc"] = std::move(mcc);
  j["amount"] = std::move(amount);
  j["currency"] = std::move(currency);
  j["timestamp"] = std::move(ts);
  return j;
}

ClientSequence sequence_from_json(const Json& j, SplitTag* tag) {
  ClientSequence seq;
  seq.client_id = j.at("client_id").get<std::string>();
  if (!j.at("label").is_null()) seq.label = j.at("label").get<int>();
  if (tag) *tag = parse_split(j.at("split").get<std::string>());
  const auto& mcc = j.at("mcc");
  const auto& amount = j.at("amount");
  const auto& currency = j.at("currency");
  const auto& ts = j.at("timestamp");
  if (amount.size() != mcc.size() || currency.size() != mcc.size() || ts.size() != mcc.size())
    throw Error("client " + seq.client_id + ": transaction columns differ in length");
  seq.transactions.resize(mcc.size());
  for (size_t i = 0; i < mcc.size(); ++i) {
    seq.transactions[i] = {mcc[i].get<int32_t>(), amount[i].get<double>(), currency[i].get<int32_t>(),
                           ts[i].get<int64_t>()};
  }
  return seq;
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  Json header;
  header["schema"] = kDatasetSchema;
  header["version"] = kSchemaVersion;
  header["n_mcc"] = ds.n_mcc;
  header["n_currency"] = ds.n_currency;
  header["n_clients"] = ds.size();
  out << header.dump() << '\n';
  for (size_t i = 0; i < ds.size(); ++i)
    out << sequence_to_json(ds.sequences[i], ds.split_tags.at(i)).dump() << '\n';
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("empty dataset file");
  const Json header = parse_line(line, 1);
  check_header(header, kDatasetSchema);
  Dataset ds;
  ds.n_mcc = header.at("n_mcc").get<int>();
  ds.n_currency = header.at("n_currency").get<int>();
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    SplitTag tag{};
    ds.sequences.push_back(sequence_from_json(parse_line(line, lineno), &tag));
    ds.split_tags.push_back(tag);
  }
  if (ds.size() != header.at("n_clients").get<size_t>()) throw Error("dataset record count mismatch");
  ds.validate();
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ostringstream out;
  write_dataset(out, ds);
  write_file(path, out.str());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path.string());
  return read_dataset(in);
}

Json catalog_to_json(const MccCatalog& catalog) {
  Json j;
  j["schema"] = kCatalogSchema;
  j["version"] = kSchemaVersion;
  j["n_mcc"] = catalog.n_mcc();
  j["n_currency"] = catalog.n_currency();
  Json mccs = Json::array();
  for (int m = 0; m < catalog.n_mcc(); ++m) {
    const MccStats& s = catalog.stats(m);
    Json e;
    e["mcc"] = m;
    e["observed"] = s.observed;
    e["amount_min"] = s.amount_min;
    e["amount_max"] = s.amount_max;
    e["frequency"] = s.frequency;
    e["samples"] = s.samples;
    mccs.push_back(std::move(e));
  }
  j["mccs"] = std::move(mccs);
  return j;
}

MccCatalog catalog_from_json(const Json& j) {
  check_header(j, kCatalogSchema);
  const int n_mcc = j.at("n_mcc").get<int>();
  std::vector<MccStats> stats(static_cast<size_t>(n_mcc));
  for (const auto& e : j.at("mccs")) {
    const int m = e.at("mcc").get<int>();
    if (m < 0 || m >= n_mcc) throw Error("catalog mcc out of range");
    MccStats& s = stats[static_cast<size_t>(m)];
    s.observed = e.at("observed").get<bool>();
    s.amount_min = e.at("amount_min").get<double>();
    s.amount_max = e.at("amount_max").get<double>();
    s.frequency = e.at("frequency").get<int64_t>();
    s.samples = e.at("samples").get<std::vector<double>>();
  }
  return MccCatalog(n_mcc, j.at("n_currency").get<int>(), std::move(stats));
}

Json edit_to_json(const Edit& e) {
  Json j;
  j["kind"] = e.kind == EditKind::kSubstitute ? "substitute" : "append";
  if (e.kind == EditKind::kSubstitute) j["position"] = e.position;
  j["mcc"] = e.new_mcc;
  j["amount"] = e.new_amount;
  return j;
}

Edit edit_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  Edit e;
  if (kind == "substitute") {
    e.kind = EditKind::kSubstitute;
    e.position = j.at("position").get<int>();
  } else if (kind == "append") {
    e.kind = EditKind::kAppend;
  } else {
    throw Error("unknown edit kind '" + kind + "'");
  }
  e.new_mcc = j.at("mcc").get<int32_t>();
  e.new_amount = j.at("amount").get<double>();
  return e;
}

Json edit_list_to_json(const EditList& list) {
  Json j;
  j["client_id"] = list.client_id;
  Json edits = Json::array();
  for (const Edit& e : list.edits) edits.push_back(edit_to_json(e));
  j["edits"] = std::move(edits);
  return j;
}

EditList edit_list_from_json(const Json& j) {
  EditList list;
  list.client_id = j.at("client_id").get<std::string>();
  for (const auto& e : j.at("edits")) list.edits.push_back(edit_from_json(e));
  return list;
}

void write_edit_file(std::ostream& out, const EditFile& file) {
  Json header;
  header["schema"] = kEditsSchema;
  header["version"] = kSchemaVersion;
  header["n_clients"] = file.lists.size();
  for (auto it = file.header.begin(); it != file.header.end(); ++it) {
    if (it.key() == "schema" || it.key() == "version" || it.key() == "n_clients") continue;
    header[it.key()] = it.value();
  }
  out << header.dump() << '\n';
  for (const auto& list : file.lists) out << edit_list_to_json(list).dump() << '\n';
}

EditFile read_edit_file(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("empty edits file");
  EditFile file;
  file.header = parse_line(line, 1);
  check_header(file.header, kEditsSchema);
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    file.lists.push_back(edit_list_from_json(parse_line(line, lineno)));
  }
  if (file.lists.size() != file.header.at("n_clients").get<size_t>()) throw Error("edits record count mismatch");
  return file;
}

void save_edit_file(const std::filesystem::path& path, const EditFile& file) {
  std::ostringstream out;
  write_edit_file(out, file);
  write_file(path, out.str());
}

EditFile load_edit_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open edits file " + path.string());
  return read_edit_file(in);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    if (!out) throw Error("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Json load_json(const std::filesystem::path& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw Error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void save_json(const std::filesystem::path& path, const Json& j) { write_file(path, j.dump(1) + "\n"); }

}  // namespace txadv::io
