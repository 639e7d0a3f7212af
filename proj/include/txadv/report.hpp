#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "txadv/tournament.hpp"

namespace txadv {

// Shortest round-trip-free rendering with 6 significant digits, period
// decimal separator, independent of the locale. NaN renders empty.
std::string format_number(double v);

// Matrix CSV: header row of defense names, one row per attack; masked and
// missing cells are empty. Masked pairs are listed in `<stem>.mask.csv`.
std::string matrix_csv(const TournamentMatrix& m);
std::string mask_csv(const TournamentMatrix& m);
std::string averages_csv(const TournamentMatrix& m);
std::string sweep_csv(std::span<const SweepRow> rows);
// ECDF-ready: one (series, value) row per score, ascending within a series.
std::string score_list_csv(const std::map<std::string, std::vector<double>>& series);

void emit_report(const std::filesystem::path& dir, const TournamentResult& result);
void emit_report(const std::filesystem::path& dir, std::span<const SweepRow> rows);
void emit_report(const std::filesystem::path& dir, const std::map<std::string, std::vector<double>>& series);

}  // namespace txadv
