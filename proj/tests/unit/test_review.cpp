#include <skywatch/imagery/synth.hpp>
#include <skywatch/review/service.hpp>
#include <skywatch/review/store.hpp>

#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <thread>

using namespace skywatch;
using namespace skywatch::review;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name)
{
  const fs::path p = fs::temp_directory_path() / ("skywatch_review_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// A counting clock keeps journals byte-reproducible.
StoreOptions fixed_clock()
{
  StoreOptions o;
  auto t = std::make_shared<long>(0);
  o.clock = [t] { return parse_timestamp("2021-03-01T09:00:00Z") + std::chrono::seconds((*t)++); };
  return o;
}

struct Fixture {
  fs::path root;
  fs::path scenes;
  imagery::SceneCatalog catalog;
  std::vector<imagery::SceneImage> images;
  fs::path detections;
  std::vector<detect::Detection> dets;
};

// Two 126 px synthetic scenes and `n` detections spread over them, a few
// of them near the border.
Fixture make_fixture(const std::string& name, int n = 100)
{
  Fixture f;
  f.root = temp_dir(name);
  f.scenes = f.root / "scenes";
  imagery::SynthConfig cfg;
  cfg.rng_seed = 3;
  cfg.image_size = 126;
  for (int i = 0; i < 2; ++i) {
    auto s = imagery::synth_scene(cfg, i).scene;
    imagery::store_scene(s, f.scenes);
    f.images.push_back(std::move(s));
  }
  f.catalog = imagery::SceneCatalog(f.scenes);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 125);
  for (int i = 0; i < n; ++i)
    f.dets.push_back({f.images[i % 2].image_id, u(rng), u(rng), 0.5 + 0.001 * i});
  if (n >= 2) {
    f.dets[0].x = 2.2;
    f.dets[0].y = 60;
    f.dets[1].x = 124;
    f.dets[1].y = 125;
  }
  f.detections = f.root / "detections.jsonl";
  detect::write_detections(f.detections, f.dets);
  return f;
}

ErrorCode error_of(const std::function<void()>& f)
{
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::numeric;
}

VerdictRecord accept(std::size_t i, double dx = 0, double dy = 0)
{
  return {i, detect::Decision::accept, dx, dy, "tester", {}};
}

VerdictRecord reject(std::size_t i)
{
  return {i, detect::Decision::reject, 0, 0, "tester", {}};
}

std::string slurp(const fs::path& p)
{
  const auto bytes = imagery::read_file_bytes(p);
  return {bytes.begin(), bytes.end()};
}

}  // namespace

TEST(ReviewStore, CreateRunStartsAllPending)
{
  auto f = make_fixture("create");
  ReviewStore store(f.root / "data", f.catalog, fixed_clock());
  const auto run = store.create_run(f.detections, "ckpt/model.bin");
  EXPECT_EQ(run.run_id, "run-0001");
  EXPECT_EQ(run.detections, f.dets);
  const auto s = store.summary(run.run_id);
  EXPECT_EQ(s.pending, 100);
  EXPECT_EQ(s.accepted + s.rejected, 0);
  EXPECT_FALSE(s.fdr_estimate);
  EXPECT_EQ(store.create_run(f.detections, "x").run_id, "run-0002");
  EXPECT_TRUE(fs::exists(f.root / "data" / "runs" / "run-0001" / "journal.jsonl"));
}

TEST(ReviewStore, EmptyDetectionsFile)
{
  auto f = make_fixture("empty", 0);
  ReviewStore store(f.root / "data", f.catalog, fixed_clock());
  const auto run = store.create_run(f.detections, "c", "blank");
  EXPECT_EQ(store.summary("blank").pending, 0);
  EXPECT_TRUE(store.next_pending("blank", 10).empty());
  const auto e = store.export_annotations("blank");
  EXPECT_TRUE(e.annotations.empty());
  EXPECT_TRUE(to_json(e)["summary"]["fdr_estimate"].is_null());
}

TEST(ReviewStore, DuplicateRunIdConflicts)
{
  auto f = make_fixture("dup", 4);
  ReviewStore store(f.root / "data", f.catalog, fixed_clock());
  store.create_run(f.detections, "c", "round-2");
  EXPECT_EQ(error_of([&] { store.create_run(f.detections, "c", "round-2"); }), ErrorCode::conflict);
  EXPECT_EQ(error_of([&] { store.create_run(f.detections, "c", "../escape"); }), ErrorCode::invalid_argument);
}

TEST(ReviewStore, CorruptDetectionsAreFormatErrors)
{
  auto f = make_fixture("corrupt", 4);
  imagery::write_file_bytes(f.detections, "{\"image_id\": 3", 14);
  ReviewStore store(f.root / "data", f.catalog, fixed_clock());
  EXPECT_EQ(error_of([&] { store.create_run(f.detections, "c"); }), ErrorCode::format);
  EXPECT_EQ(error_of([&] { store.create_run(f.root / "missing.jsonl", "c"); }), ErrorCode::not_found);
  EXPECT_TRUE(store.run_ids().empty());
}

TEST(ReviewStore, PendingOrderLimitAndPatches)
{
  auto f = make_fixture("pending");
  ReviewStore store(f.root / "data", f.catalog, fixed_clock());
  store.create_run(f.detections, "c", "r");
  const auto first = store.next_pending("r", 10);
  ASSERT_EQ(first.size(), 10u);

  const auto all = store.next_pending("r", 1000, false);
  ASSERT_EQ(all.size(), 100u);
  for (std::size_t i = 1; i < all.size(); ++i) {
    const auto& a = all[i - 1].detection;
    const auto& b = all[i].detection;
    EXPECT_LE(std::tie(a.image_id, a.y, a.x), std::tie(b.image_id, b.y, b.x));
  }
  for (std::size_t i = 0; i < first.size(); ++i)
    EXPECT_EQ(first[i].detection_index, all[i].detection_index);

  const auto& scene = f.images[0];
  for (const auto& item : all) {
    if (item.detection_index != 0)
      continue;
    const auto p = crop_patch(scene.pixels, 2, 60);
    EXPECT_TRUE(p.clipped);
    const auto img = imagery::decode_png(p.png);
    ASSERT_EQ(img.width, kPatchSide);
    ASSERT_EQ(img.height, kPatchSide);
    // column 0 of the crop is x = -48: outside, so black
    EXPECT_EQ(img.rgb[(50 * kPatchSide + 0) * 3 + 1], 0);
    const float g = std::clamp(scene.pixels.at(1, 60, 2), 0.0f, 1.0f);
    EXPECT_EQ(img.rgb[(50 * kPatchSide + 50) * 3 + 1], std::lround(g * 255));
  }
  const auto inner = crop_patch(scene.pixels, 64, 64);
  EXPECT_FALSE(inner.clipped);
  EXPECT_EQ(error_of([&] { store.next_pending("nope", 1); }), ErrorCode::not_found);
}

TEST(ReviewStore, VerdictValidation)
{
  auto f = make_fixture("validate", 4);
  f.dets[2] = {f.images[0].image_id, 120, 64, 0.9};
  detect::write_detections(f.detections, f.dets);
  ReviewStore store(f.root / "data", f.catalog, fixed_clock());
  store.create_run(f.detections, "c", "r");
  EXPECT_EQ(error_of([&] { store.submit("r", accept(0, 30, 0)); }), ErrorCode::invalid_verdict);
  EXPECT_EQ(error_of([&] { store.submit("r", accept(0, 0, -25.5)); }), ErrorCode::invalid_verdict);
  EXPECT_EQ(error_of([&] { store.submit("r", accept(0, std::nan(""), 0)); }), ErrorCode::invalid_verdict);
  auto r = reject(3);
  r.dx = 1;
  EXPECT_EQ(error_of([&] { store.submit("r", r); }), ErrorCode::invalid_verdict);
  // 120 + 10 leaves a 126 px image
  EXPECT_EQ(error_of([&] { store.submit("r", accept(2, 10, 0)); }), ErrorCode::invalid_verdict);
  EXPECT_EQ(error_of([&] { store.submit("r", accept(4)); }), ErrorCode::not_found);
  EXPECT_EQ(error_of([&] { store.submit("q", accept(0)); }), ErrorCode::not_found);
  EXPECT_TRUE(store.journal("r").empty());
  EXPECT_EQ(store.submit("r", accept(2, 5, -25)).pending, 3);
}

TEST(ReviewStore, VerdictsUpdateSummaryAndExport)
{
  auto f = make_fixture("summary", 6);
  f.dets[3] = {f.images[1].image_id, 40, 50, 0.7};
  detect::write_detections(f.detections, f.dets);
  ReviewStore store(f.root / "data", f.catalog, fixed_clock());
  store.create_run(f.detections, "c", "r");
  EXPECT_EQ(store.submit("r", accept(3, 2, -1)).pending, 5);
  store.submit("r", accept(4));
  store.submit("r", accept(5));
  store.submit("r", reject(1));
  const auto s = store.submit("r", reject(2));
  EXPECT_EQ(s.accepted, 3);
  EXPECT_EQ(s.rejected, 2);
  EXPECT_EQ(s.pending, 1);
  ASSERT_TRUE(s.fdr_estimate);
  EXPECT_DOUBLE_EQ(*s.fdr_estimate, 0.4);

  const auto e = store.export_annotations("r");
  ASSERT_EQ(e.annotations.size(), 3u);
  EXPECT_EQ(e.annotations[0], (imagery::Annotation{f.images[1].image_id, 42, 49, "review"}));

  // last write wins: 3 flips to reject and leaves the export
  store.submit("r", reject(3));
  const auto e2 = store.export_annotations("r");
  EXPECT_EQ(e2.annotations.size(), 2u);
  for (const auto& a : e2.annotations)
    EXPECT_NE(a.x, 42);
  EXPECT_EQ(e2.summary.rejected, 3);
  EXPECT_EQ(store.journal("r").size(), 6u);
  EXPECT_EQ(store.next_pending("r", 10, false).size(), 1u);
  EXPECT_EQ(store.next_pending("r", 10, false)[0].detection_index, 0u);
}

TEST(ReviewStore, JournalReplayIsByteIdentical)
{
  auto f = make_fixture("replay");
  std::string before, journal;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> idx(0, 99), off(-25, 25);
  std::vector<std::optional<VerdictRecord>> expected(100);
  {
    ReviewStore store(f.root / "data", f.catalog, fixed_clock());
    store.create_run(f.detections, "c", "r");
    int submitted = 0;
    while (submitted < 1000) {
      const auto i = static_cast<std::size_t>(idx(rng));
      VerdictRecord v = rng() % 3 ? accept(i, off(rng), off(rng)) : reject(i);
      try {
        store.submit("r", v);
      } catch (const Error& e) {
        ASSERT_EQ(e.code(), ErrorCode::invalid_verdict);  // adjustment off the image
        continue;
      }
      expected[i] = v;
      ++submitted;
    }
    before = to_json(store.export_annotations("r")).dump();
    journal = slurp(f.root / "data" / "runs" / "r" / "journal.jsonl");
  }
  ReviewStore reloaded(f.root / "data", f.catalog, fixed_clock());
  EXPECT_EQ(to_json(reloaded.export_annotations("r")).dump(), before);
  EXPECT_EQ(reloaded.journal("r").size(), 1000u);

  // export -> bootstrap round trip against the hand-kept effective verdicts
  std::vector<imagery::Annotation> want;
  long accepted = 0, rejected = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (!expected[i])
      continue;
    if (expected[i]->decision == detect::Decision::reject) {
      ++rejected;
      continue;
    }
    ++accepted;
    want.push_back({f.dets[i].image_id, f.dets[i].x + expected[i]->dx, f.dets[i].y + expected[i]->dy, "review"});
  }
  const auto e = reloaded.export_annotations("r");
  EXPECT_EQ(e.annotations, want);
  EXPECT_EQ(e.summary.accepted, accepted);
  EXPECT_EQ(e.summary.rejected, rejected);
  EXPECT_EQ(e.summary.accepted + e.summary.rejected + e.summary.pending, 100);

  // a second replay writes nothing and reproduces the same bytes
  ReviewStore again(f.root / "data", f.catalog, fixed_clock());
  EXPECT_EQ(to_json(again.export_annotations("r")).dump(), before);
  EXPECT_EQ(slurp(f.root / "data" / "runs" / "r" / "journal.jsonl"), journal);
}

TEST(ReviewStore, ConcurrentVerdictsAreSerialized)
{
  auto f = make_fixture("concurrent");
  ReviewStore store(f.root / "data", f.catalog);
  store.create_run(f.detections, "c", "r");
  store.create_run(f.detections, "c", "s");
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] {
      for (std::size_t i = static_cast<std::size_t>(t); i < 100; i += 4) {
        store.submit(t % 2 ? "r" : "s", i % 5 ? accept(i) : reject(i));
        store.summary("r");
        store.next_pending("s", 2, false);
      }
    });
  for (auto& th : threads)
    th.join();
  EXPECT_EQ(store.journal("r").size() + store.journal("s").size(), 100u);
  ReviewStore reloaded(f.root / "data", f.catalog);
  EXPECT_EQ(reloaded.summary("r").pending + reloaded.summary("s").pending, 100);
  EXPECT_EQ(to_json(reloaded.export_annotations("r")).dump(), to_json(store.export_annotations("r")).dump());
}

TEST(ReviewStore, FdrEstimateMatchesPublishedCounts)
{
  Summary s;
  s.accepted = 25337;
  s.rejected = 410;
  s.fdr_estimate = 410.0 / (25337 + 410);
  EXPECT_NEAR(*s.fdr_estimate * 100, 1.59, 0.005);
}

class ReviewHttp : public ::testing::Test {
 protected:
  void SetUp() override
  {
    f = make_fixture("http", 20);
    store = std::make_unique<ReviewStore>(f.root / "data", f.catalog, fixed_clock());
    service = std::make_unique<ReviewService>(*store);
    port = service->bind_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    thread = std::thread([this] { service->listen_after_bind(); });
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
  }

  void TearDown() override
  {
    service->stop();
    thread.join();
  }

  std::pair<int, json> get(const std::string& path)
  {
    auto res = client->Get(path.c_str());
    EXPECT_TRUE(res);
    return {res->status, json::parse(res->body)};
  }

  std::pair<int, json> post(const std::string& path, const json& body)
  {
    auto res = client->Post(path.c_str(), body.dump(), "application/json");
    EXPECT_TRUE(res);
    return {res->status, json::parse(res->body)};
  }

  Fixture f;
  std::unique_ptr<ReviewStore> store;
  std::unique_ptr<ReviewService> service;
  std::unique_ptr<httplib::Client> client;
  std::thread thread;
  int port = 0;
};

TEST_F(ReviewHttp, ScriptedReviewSession)
{
  auto [st, created] = post("/api/runs", {{"detections_path", f.detections.string()}, {"checkpoint", "m.bin"}});
  ASSERT_EQ(st, 201);
  const std::string id = created["run_id"];
  EXPECT_EQ(created["summary"]["pending"], 20);

  auto [st2, runs] = get("/api/runs");
  EXPECT_EQ(st2, 200);
  EXPECT_EQ(runs["runs"].size(), 1u);

  auto [st3, pending] = get("/api/runs/" + id + "/pending?limit=5");
  ASSERT_EQ(st3, 200);
  ASSERT_EQ(pending["items"].size(), 5u);
  const json& item = pending["items"][0];
  const std::string png_b64 = item["patch"]["png_base64"];
  EXPECT_FALSE(png_b64.empty());
  EXPECT_EQ(item["patch"]["width"], 101);

  for (const auto& it : pending["items"]) {
    auto [sv, ack] = post("/api/runs/" + id + "/verdicts",
                          {{"detection_index", it["detection_index"]}, {"decision", "accept"}, {"dx", 0}, {"dy", 0}, {"reviewer", "a"}});
    EXPECT_EQ(sv, 200);
  }
  auto [st4, after] = get("/api/runs/" + id);
  EXPECT_EQ(after["summary"]["pending"], 15);
  EXPECT_EQ(after["summary"]["accepted"], 5);

  auto [st5, next] = get("/api/runs/" + id + "/pending?limit=1");
  EXPECT_NE(next["items"][0]["detection_index"], item["detection_index"]);

  auto [st6, exported] = get("/api/runs/" + id + "/export");
  EXPECT_EQ(st6, 200);
  EXPECT_EQ(exported["annotations"].size(), 5u);
  EXPECT_EQ(exported["summary"]["fdr_estimate"], 0.0);
  EXPECT_EQ(exported.dump(), to_json(store->export_annotations(id)).dump());
}

TEST_F(ReviewHttp, ErrorsCarryCodeAndStatus)
{
  post("/api/runs", {{"detections_path", f.detections.string()}, {"checkpoint", "m"}, {"run_id", "r"}});
  auto [s1, e1] = post("/api/runs", {{"detections_path", f.detections.string()}, {"run_id", "r"}});
  EXPECT_EQ(s1, 409);
  EXPECT_EQ(e1["code"], "conflict");
  auto [s2, e2] = get("/api/runs/zzz/pending");
  EXPECT_EQ(s2, 404);
  EXPECT_EQ(e2["code"], "not_found");
  auto [s3, e3] = post("/api/runs/r/verdicts", {{"detection_index", 0}, {"decision", "accept"}, {"dx", 30}, {"dy", 0}});
  EXPECT_EQ(s3, 422);
  EXPECT_EQ(e3["code"], "invalid_verdict");
  auto [s4, e4] = post("/api/runs/r/verdicts", {{"detection_index", 99}, {"decision", "reject"}});
  EXPECT_EQ(s4, 404);
  auto [s5, e5] = post("/api/runs/r/verdicts", {{"detection_index", 0}, {"decision", "maybe"}});
  EXPECT_EQ(s5, 422);
  auto [s6, e6] = get("/api/runs/r/pending?limit=ten");
  EXPECT_EQ(s6, 400);
  EXPECT_EQ(e6["code"], "invalid_argument");
  auto res = client->Post("/api/runs/r/verdicts", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_FALSE(json::parse(res->body)["message"].get<std::string>().empty());
}
