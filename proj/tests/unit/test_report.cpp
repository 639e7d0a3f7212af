#include <gtest/gtest.h>

#include <filesystem>

#include "txadv/io.hpp"
#include "txadv/report.hpp"

using namespace txadv;

namespace {

TournamentResult sample_result() {
  TournamentResult r;
  r.attack_view = TournamentMatrix({"greedy", "random"}, {"nn-base", "boost-mix-5"});
  r.defense_view = TournamentMatrix({"greedy", "random"}, {"nn-base", "boost-mix-5"});
  r.attack_view.set(0, 0, 0.31);
  r.attack_view.set(0, 1, 0.02);
  r.attack_view.set(1, 0, 0.004);
  r.attack_view.set(1, 1, 0.0);
  r.attack_view.mask(0, 1);
  r.defense_view.set(0, 0, 0.5);
  r.defense_view.set(0, 1, 0.7);
  r.defense_view.set(1, 0, 0.69);
  r.defense_view.set(1, 1, 0.75);
  r.defense_view.mask(0, 1);
  r.clean_auc = {0.7, 0.75};
  return r;
}

}  // namespace

TEST(FormatNumber, LocaleFreeAndShort) {
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_EQ(format_number(-0.0), "0");
  EXPECT_EQ(format_number(0.123456789), "0.123457");
  EXPECT_EQ(format_number(std::nan("")), "");
}

TEST(MatrixCsv, MaskedCellsAreEmptyAndListedApart) {
  const auto r = sample_result();
  EXPECT_EQ(matrix_csv(r.attack_view), "attack,nn-base,boost-mix-5\ngreedy,0.31,\nrandom,0.004,0\n");
  EXPECT_EQ(mask_csv(r.attack_view), "attack,defense\ngreedy,boost-mix-5\n");
}

TEST(MatrixCsv, EmptyMatrixIsHeaderOnly) {
  const TournamentMatrix m({}, {});
  EXPECT_EQ(matrix_csv(m), "attack\n");
  EXPECT_EQ(sweep_csv({}), "attack,group,budget,clean_auc,attacked_auc\n");
  EXPECT_EQ(score_list_csv({}), "series,value\n");
}

TEST(ScoreList, SortedWithinSeries) {
  const std::map<std::string, std::vector<double>> s{{"b", {0.3, 0.1}}, {"a", {0.9}}};
  EXPECT_EQ(score_list_csv(s), "series,value\na,0.9\nb,0.1\nb,0.3\n");
}

TEST(EmitReport, ByteIdenticalAcrossRuns) {
  const auto base = std::filesystem::temp_directory_path() / "txadv_report_test";
  std::filesystem::remove_all(base);
  std::filesystem::create_directories(base / "one");
  std::filesystem::create_directories(base / "two");
  emit_report(base / "one", sample_result());
  emit_report(base / "two", sample_result());
  size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(base / "one")) {
    ++files;
    EXPECT_EQ(io::read_file(e.path()), io::read_file(base / "two" / e.path().filename())) << e.path();
  }
  EXPECT_GE(files, 7u);
  EXPECT_EQ(io::read_file(base / "one" / "defense_rankings.csv"),
            "side,name,average,rank\nattack,random,0.72,1\nattack,greedy,0.5,2\n"
            "defense,boost-mix-5,0.75,1\ndefense,nn-base,0.595,2\n");
  std::filesystem::remove_all(base);
}
