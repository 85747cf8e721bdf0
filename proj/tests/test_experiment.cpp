#include "npt/npt.hpp"
#include "oracles.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace npt;
namespace fs = std::filesystem;

namespace {

ExperimentConfig quick_config() {
  ExperimentConfig c;
  c.train.steps = 40;
  c.test_per_class = 12;
  c.seeds = {0, 1, 2};
  c.taus = {1.0, 0.01};
  return c;
}

std::string csv_of(const std::vector<RunRow>& rows) {
  std::ostringstream os;
  write_runs_csv(os, rows);
  return os.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("npt_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

namespace pt = boost::property_tree;

std::size_t count_elements(const pt::ptree& t, const std::string& name) {
  std::size_t n = 0;
  for (const auto& [key, child] : t) {
    if (key == name) ++n;
    n += count_elements(child, name);
  }
  return n;
}

pt::ptree parse_xml(const std::string& text) {
  std::istringstream is(text);
  pt::ptree t;
  pt::read_xml(is, t);
  return t;
}

}  // namespace

TEST(RunBaseToNovel, RowIsComplete) {
  const ExperimentConfig c = quick_config();
  const RunRow r = run_base_to_novel(c, {1.0, Method::Baseline, {}, 0});
  ASSERT_TRUE(r.ok) << r.error;
  for (const auto& f : detail::numeric_fields()) EXPECT_TRUE(std::isfinite(f.get(r))) << f.name;
  EXPECT_EQ(r.train_size, 80);
  EXPECT_GE(r.novel.nc1, 0.0);
}

TEST(RunBaseToNovel, ZeroWeightNptMatchesBaseline) {
  const ExperimentConfig c = quick_config();
  const RunRow b = run_base_to_novel(c, {0.01, Method::Baseline, {}, 2});
  const RunRow n = run_base_to_novel(c, {0.01, Method::Npt, {0.0, 0.0}, 2});
  ASSERT_TRUE(b.ok && n.ok);
  for (const auto& f : detail::numeric_fields()) EXPECT_EQ(f.get(b), f.get(n)) << f.name;
}

TEST(RunBaseToNovel, TrainCountsFollowProfile) {
  const ExperimentConfig c = quick_config();
  for (double tau : {1.0, 0.05, 0.01}) {
    const RunRow r = run_base_to_novel(c, {tau, Method::Baseline, {}, 1});
    ASSERT_TRUE(r.ok);
    EXPECT_EQ(r.train_counts, oracle::profile(5, 16, tau)) << tau;
  }
  EXPECT_NE(run_base_to_novel(c, {1.0, Method::Baseline, {}, 1}).train_counts,
            run_base_to_novel(c, {0.01, Method::Baseline, {}, 1}).train_counts);
}

TEST(RunBaseToNovel, BaselineIgnoresWeights) {
  const ExperimentConfig c = quick_config();
  const RunRow r = run_base_to_novel(c, {1.0, Method::Baseline, {0.3, 0.8}, 0});
  EXPECT_EQ(r.spec.weights, (WeightSetting{0.0, 0.0}));
}

TEST(RunBaseToNovel, FailureIsRecordedNotThrown) {
  ExperimentConfig c = quick_config();
  c.train.learning_rate = 1e300;
  const RunRow r = run_base_to_novel(c, {1.0, Method::Npt, {0.3, 0.8}, 0});
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.error.rfind(kNumericalAbortTag, 0), 0u) << r.error;

  ExperimentConfig bad = quick_config();
  bad.data.num_classes = 3;
  bad.model.num_classes = 3;
  const RunRow e = run_base_to_novel(bad, {1.0, Method::Npt, {0.3, 0.8}, 0});
  EXPECT_FALSE(e.ok);
  EXPECT_NE(e.error.find("K >= 4"), std::string::npos);
}

TEST(RunBaseToNovel, ShiftedEvaluation) {
  ExperimentConfig c = quick_config();
  c.shift.enabled = true;
  const RunRow r = run_base_to_novel(c, {1.0, Method::Npt, {0.3, 0.8}, 0});
  ASSERT_TRUE(r.ok);
  EXPECT_GT(r.shifted_base_acc, 0.0);
  EXPECT_LE(r.shifted_base_acc, 1.0);
  const Matrix q = cayley_rotation(8, 0.3, 7);
  EXPECT_LE((q.transpose() * q - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sweep, CellCount) {
  ExperimentConfig c;
  c.train.steps = 5;
  c.test_per_class = 4;
  ASSERT_EQ(c.taus.size(), 3u);
  ASSERT_EQ(c.seeds.size(), 10u);
  const ExperimentReport rep = run_sweep_rows(c);
  EXPECT_EQ(rep.rows.size(), 60u);
  EXPECT_EQ(rep.failed(), 0u);
  EXPECT_EQ(rep.groups.size(), 6u);
  for (const auto& g : rep.groups) EXPECT_EQ(g.runs, 10u);

  c.weight_grid = {{0.1, 0.2}, {1.0, 2.0}};
  EXPECT_EQ(sweep_specs(c).size(), 90u);
}

TEST(Sweep, RepeatIsByteIdentical) {
  ExperimentConfig c = quick_config();
  const std::string a = csv_of(run_sweep_rows(c).rows);
  EXPECT_EQ(a, csv_of(run_sweep_rows(c).rows));
  c.workers = 3;
  EXPECT_EQ(a, csv_of(run_sweep_rows(c).rows));
}

TEST(Sweep, CallbackSeesEveryRow) {
  const ExperimentConfig c = quick_config();
  std::size_t seen = 0;
  run_sweep_rows(c, [&](const RunRow&) { ++seen; });
  EXPECT_EQ(seen, sweep_specs(c).size());
}

TEST(Aggregate, MatchesHandComputation) {
  const ExperimentReport rep = run_sweep_rows(quick_config());
  for (const auto& g : rep.groups) {
    std::vector<double> hm;
    for (const RunRow& r : rep.rows)
      if (r.spec.tau == g.key.tau && r.spec.method == g.key.method) hm.push_back(r.harmonic_mean);
    ASSERT_EQ(hm.size(), 3u);
    const double mean = (hm[0] + hm[1] + hm[2]) / 3.0;
    double ss = 0.0;
    for (double v : hm) ss += (v - mean) * (v - mean);
    EXPECT_NEAR(g.metrics.at("harmonic_mean").mean, mean, 1e-15);
    EXPECT_NEAR(g.metrics.at("harmonic_mean").std, std::sqrt(ss / 2.0), 1e-15);
  }
  for (const auto& w : rep.win_rates) {
    std::size_t wins = 0;
    for (std::uint64_t s : {0u, 1u, 2u}) {
      double b = 0, n = 0;
      for (const RunRow& r : rep.rows)
        if (r.spec.tau == w.tau && r.spec.seed == s) (r.spec.method == Method::Npt ? n : b) = r.harmonic_mean;
      wins += n > b;
    }
    EXPECT_EQ(w.wins, wins);
    EXPECT_EQ(w.pairs, 3u);
  }
  EXPECT_NEAR(rep.mean(0.01, Method::Baseline, "novel_acc"), rep.find(0.01, Method::Baseline)->metrics.at("novel_acc").mean,
              0.0);
}

TEST(Aggregate, FailedRowsAreCountedNotAveraged) {
  std::vector<RunRow> rows(3);
  for (std::size_t i = 0; i < 3; ++i) {
    rows[i].spec = {1.0, Method::Baseline, {0.0, 0.0}, i};
    rows[i].ok = i != 1;
    rows[i].harmonic_mean = i == 1 ? 99.0 : 0.5;
  }
  const ExperimentReport rep = aggregate(rows);
  ASSERT_EQ(rep.groups.size(), 1u);
  EXPECT_EQ(rep.groups[0].failed, 1u);
  EXPECT_EQ(rep.groups[0].runs, 2u);
  EXPECT_EQ(rep.groups[0].metrics.at("harmonic_mean").mean, 0.5);
}

TEST(RunsCsv, RoundTrip) {
  std::vector<RunRow> rows = run_sweep_rows(quick_config()).rows;
  RunRow failed;
  failed.spec = {0.05, Method::Npt, {1.0, 2.0}, 7};
  failed.error = "bad, \"quoted\" error";
  rows.push_back(failed);
  const std::string text = csv_of(rows);
  std::istringstream is(text);
  const std::vector<RunRow> back = read_runs_csv(is);
  ASSERT_EQ(back.size(), rows.size());
  EXPECT_EQ(csv_of(back), text);
  EXPECT_EQ(back.back().error, failed.error);
  EXPECT_FALSE(back.back().ok);
  for (std::size_t i = 0; i + 1 < rows.size(); ++i)
    for (const auto& f : detail::numeric_fields()) EXPECT_EQ(f.get(back[i]), f.get(rows[i])) << f.name;
}

TEST(RunsCsv, HeaderNamesCollapseFields) {
  const std::string h = runs_csv_header();
  for (const char* split : {"base", "novel"})
    for (const char* m : {"delta_lcd", "delta_mid_signed", "mid_error", "nc1", "nc2", "nc3"})
      EXPECT_NE(h.find(std::string(split) + "_" + m), std::string::npos) << split << "_" << m;
  EXPECT_EQ(h.rfind("tau,method,w1,w2,seed,status,", 0), 0u);
}

TEST(RunsCsv, RejectsWrongHeader) {
  std::istringstream is("tau,method\n1,npt\n");
  EXPECT_THROW(read_runs_csv(is), IoError);
}

TEST(ConfigJson, RoundTrip) {
  ExperimentConfig c = quick_config();
  c.weight_grid = {{0.1, 0.2}, {1.0, 2.0}};
  c.methods = {Method::Npt};
  c.train.weights.mi_reduction = MiReduction::Sum;
  c.data.direction_mode = DirectionMode::Etf;
  c.shift.enabled = true;
  c.pretrain.text_anisotropy = 0.25;
  const json j = c;
  const ExperimentConfig back = j.get<ExperimentConfig>();
  EXPECT_EQ(json(back), j);
}

TEST(ConfigJson, UnknownKeyAndBadValues) {
  EXPECT_THROW(json::parse(R"({"tau": [1]})").get<ExperimentConfig>(), ArgumentError);
  EXPECT_THROW(json::parse(R"({"methods": ["sgd"]})").get<ExperimentConfig>(), ArgumentError);
  const fs::path dir = fresh_dir("cfg");
  fs::create_directories(dir);
  detail::write_text(dir / "bad.json", "{ not json");
  EXPECT_THROW(load_experiment_config((dir / "bad.json").string()), ArgumentError);
  detail::write_text(dir / "neg.json", R"({"taus": [0.0]})");
  EXPECT_THROW(load_experiment_config((dir / "neg.json").string()), ArgumentError);
  EXPECT_THROW(load_experiment_config((dir / "missing.json").string()), ArgumentError);
}

TEST(ConfigJson, PartialConfigKeepsDefaults) {
  const ExperimentConfig c = json::parse(R"({"data": {"num_classes": 6, "raw_dim": 12}, "seeds": [4]})")
                                 .get<ExperimentConfig>();
  EXPECT_EQ(c.model.num_classes, 6);
  EXPECT_EQ(c.model.raw_dim, 12);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4}));
  EXPECT_EQ(c.train.steps, ExperimentConfig{}.train.steps);
}

TEST(SweepOutputs, FilesParseAndAgree) {
  const ExperimentConfig c = quick_config();
  const ExperimentReport rep = run_sweep_rows(c);
  const fs::path dir = fresh_dir("sweep");
  write_sweep_outputs(c, rep, representative_panels(c), dir.string());
  for (const char* f : {"runs.csv", "aggregate.json", "fig_lcd.svg", "fig_mid.svg", "fig_reps.svg", "config_echo.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;

  for (const char* f : {"fig_lcd.svg", "fig_mid.svg"}) {
    const pt::ptree t = parse_xml(slurp(dir / f));
    EXPECT_EQ(count_elements(t, "circle"), rep.rows.size()) << f;
  }
  const pt::ptree reps = parse_xml(slurp(dir / "fig_reps.svg"));
  EXPECT_EQ(count_elements(reps, "circle"), 2u * 5u * 12u);

  const json echo = json::parse(slurp(dir / "config_echo.json"));
  EXPECT_EQ(json(echo.get<ExperimentConfig>()), json(c));

  const ExperimentReport back = load_report(dir.string());
  EXPECT_EQ(csv_of(back.rows), slurp(dir / "runs.csv"));
  EXPECT_TRUE(json::parse(slurp(dir / "aggregate.json")).contains("generated_at"));
}

TEST(SweepOutputs, TamperedAggregateIsDetected) {
  const ExperimentConfig c = quick_config();
  const fs::path dir = fresh_dir("tamper");
  write_sweep_outputs(c, run_sweep_rows(c), {}, dir.string());
  json agg = json::parse(slurp(dir / "aggregate.json"));
  agg["groups"][0]["metrics"]["harmonic_mean"]["mean"] = 0.123456;
  detail::write_text(dir / "aggregate.json", agg.dump());
  EXPECT_THROW(load_report(dir.string()), IoError);
}

TEST(EmitPlots, EmptyReportRejected) {
  EXPECT_THROW(emit_plots(ExperimentReport{}, {}, fresh_dir("empty").string()), ArgumentError);
  EXPECT_THROW(scatter_svg({}, "x", "y", "t"), ArgumentError);
}

TEST(EmitPlots, SingleRowHasFiniteAxes) {
  const ExperimentConfig c = quick_config();
  const ExperimentReport rep = aggregate({run_base_to_novel(c, {1.0, Method::Npt, {0.3, 0.8}, 0})});
  const fs::path dir = fresh_dir("single");
  emit_plots(rep, {}, dir.string());
  const pt::ptree t = parse_xml(slurp(dir / "fig_lcd.svg"));
  EXPECT_EQ(count_elements(t, "circle"), 1u);
  std::function<void(const pt::ptree&)> check = [&](const pt::ptree& node) {
    for (const auto& [key, child] : node) {
      if (key == "circle") {
        const double cx = child.get<double>("<xmlattr>.cx"), cy = child.get<double>("<xmlattr>.cy");
        EXPECT_TRUE(std::isfinite(cx) && std::isfinite(cy));
        EXPECT_GT(cx, 0.0);
        EXPECT_GT(cy, 0.0);
      }
      check(child);
    }
  };
  check(t);
  const svg::Range r = svg::padded_range({0.4});
  EXPECT_LT(r.lo, 0.4);
  EXPECT_GT(r.hi, 0.4);
  EXPECT_TRUE(std::isfinite(r.hi - r.lo));
}

TEST(EmitPlots, UnwritableDirectory) {
  const fs::path dir = fresh_dir("blocker");
  fs::create_directories(dir);
  detail::write_text(dir / "file", "x");
  const ExperimentConfig c = quick_config();
  const ExperimentReport rep = aggregate({run_base_to_novel(c, {1.0, Method::Npt, {0.3, 0.8}, 0})});
  EXPECT_THROW(emit_plots(rep, {}, (dir / "file" / "sub").string()), IoError);
}

TEST(Checkpoint, TrainedModelRoundTrip) {
  const ExperimentConfig c = quick_config();
  RunArtifacts art;
  ASSERT_TRUE(run_base_to_novel(c, {0.01, Method::Npt, {0.3, 0.8}, 1}, &art).ok);
  const fs::path dir = fresh_dir("ckpt");
  fs::create_directories(dir);
  save_checkpoint((dir / "m.json").string(), art.trained);
  const ModelParams back = load_checkpoint((dir / "m.json").string());
  EXPECT_TRUE(bitwise_equal(back, art.trained));
}
