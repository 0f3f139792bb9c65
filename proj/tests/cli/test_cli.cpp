// Runs the skywatch binary end to end. SKYWATCH_CLI is the executable path.

#include <skywatch/detect/detection.hpp>
#include <skywatch/imagery/scene_store.hpp>
#include <skywatch/review/store.hpp>
#include <skywatch/series/breaks.hpp>
#include <skywatch/series/io.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

using namespace skywatch;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path temp_dir(const std::string& name)
{
  const fs::path p = fs::temp_directory_path() / ("skywatch_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

Run cli(const std::string& args, const fs::path& scratch)
{
  const fs::path o = scratch / "stdout.txt", e = scratch / "stderr.txt";
  const std::string cmd = std::string(SKYWATCH_CLI) + " " + args + " >" + o.string() + " 2>" + e.string();
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

// Every file below `root`, relative path -> bytes.
std::map<std::string, std::string> tree(const fs::path& root)
{
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file())
      out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

// Flat, then a linear dip to day 80, then recovery towards the old level.
series::TimeSeries v_series(const std::string& aoi)
{
  series::TimeSeries s;
  s.aoi_id = aoi;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0, 0.2);
  const Day d0 = parse_day("2020-01-30");
  for (int t = 0; t < 240; ++t) {
    double v = 20;
    if (t >= 40 && t <= 80)
      v = 20 - 16.0 * (t - 40) / 40;
    else if (t > 80)
      v = 20 - 16 * std::exp(-0.04 * (t - 80));
    s.dates.push_back(d0 + std::chrono::days(t));
    s.values.push_back(v + noise(rng));
  }
  return s;
}

}  // namespace

TEST(Cli, SynthIsDeterministic)
{
  const auto dir = temp_dir("synth");
  ASSERT_EQ(cli("synth --seed 7 --scenes 20 --work-dir " + (dir / "a").string(), dir).status, 0);
  ASSERT_EQ(cli("synth --seed 7 --scenes 20 --work-dir " + (dir / "b").string(), dir).status, 0);
  const auto a = tree(dir / "a"), b = tree(dir / "b");
  EXPECT_EQ(a.size(), 41u);  // 20 rasters, 20 sidecars, annotations
  EXPECT_EQ(a, b);
  ASSERT_EQ(cli("synth --seed 8 --scenes 20 --work-dir " + (dir / "c").string(), dir).status, 0);
  EXPECT_NE(tree(dir / "c"), a);
  // a second run into the same directory refuses to mix corpora
  EXPECT_EQ(cli("synth --seed 7 --scenes 20 --work-dir " + (dir / "a").string(), dir).status, 3);
}

TEST(Cli, BreakWritesBreakResultJson)
{
  const auto dir = temp_dir("break");
  const auto s = v_series("LHR");
  series::write_series_csv(dir / "series" / "LHR.csv", s);
  const auto r = cli("break --method sma --short 14 --long 49 --work-dir " + dir.string(), dir);
  ASSERT_EQ(r.status, 0) << r.err;
  const json j = json::parse(slurp(dir / "reports" / "LHR.break.json"));
  const auto b = series::break_from_json(j);
  const auto expected = series::sma_crossover_break(s, 14, 49);
  ASSERT_TRUE(expected);
  EXPECT_EQ(b.break_date, expected->break_date);
  EXPECT_EQ(j["method"], "sma-crossover");
  EXPECT_EQ(j["params"], (json{{"long", 49}, {"short", 14}}));
  EXPECT_EQ(j["aoi_id"], "LHR");
  EXPECT_EQ(j["config"]["series"]["short"], 14);
  EXPECT_FALSE(j["config"].contains("paths"));

  const auto e = cli("break --method edm --msize 64 --beta 0.2 --seed 1 --work-dir " + dir.string(), dir);
  ASSERT_EQ(e.status, 0) << e.err;
  const json k = json::parse(slurp(dir / "reports" / "LHR.break.json"));
  EXPECT_EQ(k["method"], "edm");
  EXPECT_EQ(k["params"]["msize"], 64);
}

TEST(Cli, RecoverNeedsBreakOutput)
{
  const auto dir = temp_dir("recover");
  series::write_series_csv(dir / "series" / "CDG.csv", v_series("CDG"));
  const auto r = cli("recover --work-dir " + dir.string(), dir);
  EXPECT_EQ(r.status, 2);
  const json err = json::parse(r.err.substr(0, r.err.find('\n')));
  EXPECT_EQ(err["error"], "not_found");
  EXPECT_EQ(err["exit"], 2);

  ASSERT_EQ(cli("break --work-dir " + dir.string(), dir).status, 0);
  const auto ok = cli("recover --disruption 2020-03-01 --work-dir " + dir.string(), dir);
  ASSERT_EQ(ok.status, 0) << ok.err;
  const json j = json::parse(slurp(dir / "reports" / "CDG.recovery.json"));
  EXPECT_EQ(j["status"], "fitted");
  EXPECT_GT(j["lambda"].get<double>(), 0);
  EXPECT_GE(j["n_points"].get<int>(), 3);
  EXPECT_TRUE(fs::exists(dir / "reports" / "CDG.recovery.svg"));
}

TEST(Cli, ValidationFailuresExitThree)
{
  const auto dir = temp_dir("invalid");
  series::write_series_csv(dir / "series" / "X.csv", v_series("X"));
  EXPECT_EQ(cli("break --short ten --work-dir " + dir.string(), dir).status, 3);
  EXPECT_EQ(cli("break --method wavelet --work-dir " + dir.string(), dir).status, 3);
  EXPECT_EQ(cli("break --short 60 --long 49 --work-dir " + dir.string(), dir).status, 3);
  EXPECT_EQ(cli("break --no-such-flag --work-dir " + dir.string(), dir).status, 3);
  std::ofstream(dir / "bad.json") << R"({"series": {"shrt": 3}})";
  const auto r = cli("break --config " + (dir / "bad.json").string() + " --work-dir " + dir.string(), dir);
  EXPECT_EQ(r.status, 3);
  EXPECT_NE(r.err.find("series.shrt"), std::string::npos);
  EXPECT_EQ(cli("break --config " + (dir / "none.json").string(), dir).status, 2);
}

TEST(Cli, FlagsOverrideConfigOverrideDefaults)
{
  const auto dir = temp_dir("precedence");
  series::write_series_csv(dir / "series" / "X.csv", v_series("X"));
  std::ofstream(dir / "cfg.json") << R"({"series": {"short": 10, "long": 40}})";
  const std::string base = "break --work-dir " + dir.string();
  ASSERT_EQ(cli(base, dir).status, 0);
  EXPECT_EQ(json::parse(slurp(dir / "reports" / "X.break.json"))["params"], (json{{"long", 49}, {"short", 14}}));
  ASSERT_EQ(cli(base + " --config " + (dir / "cfg.json").string(), dir).status, 0);
  EXPECT_EQ(json::parse(slurp(dir / "reports" / "X.break.json"))["params"], (json{{"long", 40}, {"short", 10}}));
  ASSERT_EQ(cli(base + " --config " + (dir / "cfg.json").string() + " --short 7", dir).status, 0);
  EXPECT_EQ(json::parse(slurp(dir / "reports" / "X.break.json"))["params"], (json{{"long", 40}, {"short", 7}}));
}

TEST(Cli, StagedRunEqualsAll)
{
  const auto dir = temp_dir("staged");
  const std::string corpus = " --image-size 126 --scenes 85";
  const std::string training = " --batch 4 --iterations 3 --max-epochs 1 --patience 1";
  const std::string a = " --work-dir " + (dir / "a").string();
  for (const std::string& stage :
       {"synth --seed 3" + corpus, "train --seed 3" + training, std::string("detect"), std::string("series"),
        std::string("break --seed 3"), std::string("recover")}) {
    const auto r = cli(stage + a, dir);
    ASSERT_EQ(r.status, 0) << stage << ": " << r.err;
  }
  const auto all = cli("all --seed 3" + corpus + training + " --work-dir " + (dir / "b").string(), dir);
  ASSERT_EQ(all.status, 0) << all.err;
  const auto ta = tree(dir / "a"), tb = tree(dir / "b");
  EXPECT_EQ(ta, tb);
  for (const char* f : {"reports/SYN.break.json", "reports/SYN.recovery.json", "series/SYN.csv",
                        "series/SYN_monthly.csv", "detections.jsonl", "checkpoint/model.json"})
    EXPECT_TRUE(ta.count(f)) << f;

  // every emitted file reads back through its parser
  EXPECT_NO_THROW(series::read_series_csv(dir / "a" / "series" / "SYN.csv"));
  EXPECT_NO_THROW(series::read_monthly_csv(dir / "a" / "series" / "SYN_monthly.csv"));
  EXPECT_NO_THROW(detect::read_detections(dir / "a" / "detections.jsonl"));
  EXPECT_NO_THROW(json::parse(ta.at("reports/SYN.recovery.json")));
}

TEST(Cli, EvalBreaksCompareAndCorrelate)
{
  const auto dir = temp_dir("analysis");
  series::write_series_csv(dir / "series" / "A.csv", v_series("A"));
  auto b = v_series("B");
  for (auto& d : b.dates)
    d += std::chrono::days(3);
  series::write_series_csv(dir / "series" / "B.csv", b);
  const auto ev = cli("eval-breaks --observed 2020-04-20 --work-dir " + dir.string(), dir);
  ASSERT_EQ(ev.status, 0) << ev.err;
  const json best = json::parse(slurp(dir / "reports" / "break_eval_sma.json"));
  EXPECT_EQ(best["configs"], 70);  // long > short pairs
  EXPECT_EQ(best["best"]["missed"], 0);
  EXPECT_EQ(cli("eval-breaks --work-dir " + dir.string(), dir).status, 3);

  // monthly estimate and reference
  std::ofstream(dir / "series" / "A_monthly.csv") << "month,value\n2020-01,10\n2020-02,12\n2020-03,6\n";
  std::ofstream(dir / "series" / "B_monthly.csv") << "month,value\n2020-01,10\n2020-02,12\n2020-03,6\n";
  std::ofstream(dir / "ref.csv") << "month,value\n2020-01,5\n2020-02,6\n2020-03,3\n2020-04,1\n";
  const auto cmp = cli("compare --reference " + (dir / "ref.csv").string() + " --work-dir " + dir.string(), dir);
  ASSERT_EQ(cmp.status, 0) << cmp.err;
  const json c = json::parse(slurp(dir / "reports" / "A.compare.json"));
  EXPECT_EQ(c["n"], 3);
  EXPECT_NEAR(c["rmse"].get<double>(), 0, 1e-12);  // identical after max normalization

  std::ostringstream epi;
  epi << "date,new_cases,new_deaths\n";
  for (int t = 0; t < 200; ++t)
    epi << format_day(parse_day("2020-02-01") + std::chrono::days(t)) << ',' << (t < 60 ? 5 * t : 300) << ",1\n";
  std::ofstream(dir / "epi.csv") << epi.str();
  const auto cor = cli("correlate --epi " + (dir / "epi.csv").string() + " --work-dir " + dir.string(), dir);
  ASSERT_EQ(cor.status, 0) << cor.err;
  const json r = json::parse(slurp(dir / "reports" / "A.correlation.json"));
  EXPECT_GE(r["pearson_r"].get<double>(), -1);
  EXPECT_LE(r["pearson_r"].get<double>(), 1);
  EXPECT_EQ(cli("correlate --work-dir " + dir.string(), dir).status, 2);
}

TEST(Cli, ExportMatchesStore)
{
  const auto dir = temp_dir("export");
  ASSERT_EQ(cli("synth --seed 1 --scenes 2 --image-size 126 --work-dir " + dir.string(), dir).status, 0);
  imagery::SceneCatalog catalog(dir / "scenes");
  const auto scenes = imagery::load_scenes(dir / "scenes");
  std::vector<detect::Detection> dets;
  for (int i = 0; i < 6; ++i)
    dets.push_back({scenes[i % 2].image_id, 30.0 + 10 * i, 40.0 + 5 * i, 0.9});
  detect::write_detections(dir / "dets.jsonl", dets);
  std::string expected;
  {
    review::ReviewStore store(dir / "review", catalog);
    store.create_run(dir / "dets.jsonl", "ckpt", "r1");
    store.submit("r1", {0, detect::Decision::accept, 2, -1, "x", {}});
    store.submit("r1", {1, detect::Decision::reject, 0, 0, "x", {}});
    store.submit("r1", {2, detect::Decision::accept, 0, 0, "x", {}});
    expected = imagery::json_lines(store.export_annotations("r1").annotations,
                                   [](const imagery::Annotation& a) { return imagery::to_json(a); });
  }
  const auto r = cli("export --run r1 --out " + (dir / "next.jsonl").string() + " --work-dir " + dir.string(), dir);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(slurp(dir / "next.jsonl"), expected);
  const json summary = json::parse(slurp(dir / "next.summary.json"));
  EXPECT_EQ(summary["summary"]["accepted"], 2);
  EXPECT_EQ(summary["summary"]["pending"], 3);
  EXPECT_EQ(cli("export --run nope --work-dir " + dir.string(), dir).status, 2);
}
