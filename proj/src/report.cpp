#include "txadv/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "txadv/error.hpp"

namespace txadv {

std::string format_number(double v) {
  if (std::isnan(v)) return "";
  if (v == 0.0) v = 0.0;  // drop the sign of negative zero
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
  if (res.ec != std::errc()) throw Error("number formatting failed");
  return std::string(buf, res.ptr);
}

namespace {

// Quotes a CSV field when needed.
std::string field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string cell(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

void write(const std::filesystem::path& p, const std::string& content) {
  try {
    io::write_file(p, content);
  } catch (const std::exception& e) {
    throw Error("cannot write report file " + p.string() + ": " + e.what());
  }
}

}  // namespace

std::string matrix_csv(const TournamentMatrix& m) {
  std::string out = "attack";
  for (const auto& d : m.defenses()) out += "," + field(d);
  out += "\n";
  for (size_t a = 0; a < m.n_attacks(); ++a) {
    out += field(m.attacks()[a]);
    for (size_t d = 0; d < m.n_defenses(); ++d) out += "," + (m.masked(a, d) ? std::string() : cell(m.get(a, d)));
    out += "\n";
  }
  return out;
}

std::string mask_csv(const TournamentMatrix& m) {
  std::string out = "attack,defense\n";
  for (size_t a = 0; a < m.n_attacks(); ++a)
    for (size_t d = 0; d < m.n_defenses(); ++d)
      if (m.masked(a, d)) out += field(m.attacks()[a]) + "," + field(m.defenses()[d]) + "\n";
  return out;
}

std::string averages_csv(const TournamentMatrix& m) {
  std::string out = "side,name,average,rank\n";
  const auto ar = m.attack_ranking();
  for (size_t r = 0; r < ar.size(); ++r) {
    const size_t a = static_cast<size_t>(std::find(m.attacks().begin(), m.attacks().end(), ar[r]) - m.attacks().begin());
    out += "attack," + field(ar[r]) + "," + cell(m.row_average(a)) + "," + std::to_string(r + 1) + "\n";
  }
  const auto dr = m.defense_ranking();
  for (size_t r = 0; r < dr.size(); ++r) {
    const size_t d =
        static_cast<size_t>(std::find(m.defenses().begin(), m.defenses().end(), dr[r]) - m.defenses().begin());
    out += "defense," + field(dr[r]) + "," + cell(m.column_average(d)) + "," + std::to_string(r + 1) + "\n";
  }
  return out;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "attack,group,budget,clean_auc,attacked_auc\n";
  for (const auto& r : rows)
    out += field(r.attack) + "," + field(r.group) + "," + std::to_string(r.budget) + "," + format_number(r.clean_auc) +
           "," + format_number(r.attacked_auc) + "\n";
  return out;
}

std::string score_list_csv(const std::map<std::string, std::vector<double>>& series) {
  std::string out = "series,value\n";
  for (const auto& [name, values] : series) {
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    for (double x : v) out += field(name) + "," + format_number(x) + "\n";
  }
  return out;
}

void emit_report(const std::filesystem::path& dir, const TournamentResult& result) {
  write(dir / "attack_matrix.csv", matrix_csv(result.attack_view));
  write(dir / "attack_matrix.mask.csv", mask_csv(result.attack_view));
  write(dir / "defense_matrix.csv", matrix_csv(result.defense_view));
  write(dir / "defense_matrix.mask.csv", mask_csv(result.defense_view));
  write(dir / "attack_rankings.csv", averages_csv(result.attack_view));
  write(dir / "defense_rankings.csv", averages_csv(result.defense_view));
  std::string dq = "attack,client_id,reason\n";
  for (const auto& d : result.disqualified) dq += field(d.attack) + "," + field(d.client_id) + "," + field(d.reason) + "\n";
  write(dir / "disqualified.csv", dq);
  write(dir / "tournament.json", tournament_to_json(result).dump(1) + "\n");
}

void emit_report(const std::filesystem::path& dir, std::span<const SweepRow> rows) {
  write(dir / "sweep.csv", sweep_csv(rows));
  Json j = Json::array();
  for (const auto& r : rows)
    j.push_back({{"attack", r.attack}, {"group", r.group}, {"budget", r.budget}, {"clean_auc", r.clean_auc},
                 {"attacked_auc", r.attacked_auc}});
  write(dir / "sweep.json", j.dump(1) + "\n");
}

void emit_report(const std::filesystem::path& dir, const std::map<std::string, std::vector<double>>& series) {
  write(dir / "scores.csv", score_list_csv(series));
}

}  // namespace txadv
