// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include <thread>

#include <fmt/format.h>
#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "qakit/errors.hpp"
#include "qakit/jsonl.hpp"
#include "qakit/review_server.hpp"
#include "qakit/review_service.hpp"
#include "test_support.hpp"

using namespace qakit;
using namespace qakit::review;
using nlohmann::json;
using qakit::testing::error_kind;
using qakit::testing::make_pair;
using qakit::testing::TempDir;

namespace {

std::vector<QAPair> pairs() {
  return {make_pair("p10", "Where is DAL1?", "Dallas.", Method::DNaive, {"d1"}, "network"),
          make_pair("p2", "What is a cage?", "A locked enclosure.", Method::DNaive, {"d2"}, "network"),
          make_pair("p3", "What is a PDU?", "A power strip for racks.", Method::DRag, {"d3"}, "power"),
          make_pair("p1", "How many feeds?", "Two.", Method::DRag, {"d4"}, "power")};
}

std::map<std::string, std::string> labels() {
  return {{"p1", "factual"}, {"p2", "conceptual"}, {"p3", "conceptual"}, {"p10", "factual"}};
}

ReviewDecision decide(std::string id, Verdict v, std::optional<std::string> q = {},
                      std::optional<std::string> a = {}) {
  ReviewDecision d;
  d.pair_id = std::move(id);
  d.reviewer = "rev";
  d.decision = v;
  d.edited_question = std::move(q);
  d.edited_answer = std::move(a);
  d.decided_at = "2026-02-01T00:00:00Z";
  return d;
}

}  // namespace

TEST(ReviewStore, QueueFollowsNaturalOrderAndFilters) {
  TempDir tmp;
  ReviewStore store(pairs(), tmp / "h.jsonl", labels());
  EXPECT_EQ(store.size(), 4u);
  EXPECT_EQ(store.next_pending()->pair_id, "p1");
  EXPECT_EQ(store.next_pending(Filter{Method::DNaive, {}, {}})->pair_id, "p2");
  EXPECT_EQ(store.next_pending(Filter{{}, "CONCEPTUAL", {}})->pair_id, "p2");
  EXPECT_EQ(store.next_pending(Filter{{}, {}, "power"})->pair_id, "p1");
  EXPECT_EQ(store.next_pending(Filter{Method::Manual, {}, {}}), std::nullopt);
  EXPECT_EQ(store.get("p3").label, "conceptual");
}

TEST(ReviewStore, DecisionsUpdateStateAndStats) {
  TempDir tmp;
  ReviewStore store(pairs(), tmp / "h.jsonl", labels());
  EXPECT_EQ(store.stats(), (Stats{4, 0, 0, 0, std::nullopt}));
  EXPECT_EQ(store.submit(decide("p1", Verdict::Accept)), State::Accepted);
  EXPECT_EQ(store.submit(decide("p2", Verdict::Reject)), State::Rejected);
  EXPECT_EQ(store.submit(decide("p3", Verdict::Edit, std::nullopt, "A power distribution unit.")), State::Edited);
  const auto s = store.stats();
  EXPECT_EQ(s.pending, 1u);
  EXPECT_EQ(s.accepted, 1u);
  EXPECT_EQ(s.rejected, 1u);
  EXPECT_EQ(s.edited, 1u);
  ASSERT_TRUE(s.acceptance_rate.has_value());
  EXPECT_DOUBLE_EQ(*s.acceptance_rate, 2.0 / 3.0);
  EXPECT_EQ(store.next_pending()->pair_id, "p10");

  const auto item = store.get("p3");
  EXPECT_EQ(item.original.answer, "A power strip for racks.");
  EXPECT_EQ(item.effective_pair().answer, "A power distribution unit.");
  EXPECT_EQ(item.effective_pair().question, "What is a PDU?");

  // The latest decision wins; history keeps all of them.
  EXPECT_EQ(store.submit(decide("p2", Verdict::Accept)), State::Accepted);
  EXPECT_EQ(store.history("p2").size(), 2u);
  EXPECT_EQ(store.history().size(), 4u);
  const auto accepted = store.accepted_pairs();
  ASSERT_EQ(accepted.size(), 3u);
  EXPECT_EQ(accepted[0].pair_id, "p1");
  EXPECT_EQ(accepted[1].pair_id, "p2");
  EXPECT_EQ(accepted[2].answer, "A power distribution unit.");
}

TEST(ReviewStore, InvalidDecisions) {
  TempDir tmp;
  ReviewStore store(pairs(), tmp / "h.jsonl");
  EXPECT_EQ(error_kind([&] { store.submit(decide("nope", Verdict::Accept)); }), ErrorKind::NotFound);
  EXPECT_EQ(error_kind([&] { store.submit(decide("p1", Verdict::Edit)); }), ErrorKind::Parameter);
  EXPECT_EQ(error_kind([&] { store.submit(decide("p1", Verdict::Edit, "")); }), ErrorKind::Parameter);
  EXPECT_EQ(error_kind([&] { store.submit(decide("p1", Verdict::Edit, "How many feeds?", "Two.")); }),
            ErrorKind::Parameter);
  EXPECT_EQ(error_kind([&] { store.submit(decide("p1", Verdict::Accept, "changed")); }), ErrorKind::Parameter);
  EXPECT_EQ(error_kind([&] { store.get("p99"); }), ErrorKind::NotFound);
  EXPECT_TRUE(store.history().empty());
  EXPECT_EQ(error_kind([&] { decision_from_json(json{{"pair_id", "p1"}, {"decision", "maybe"}}); }),
            ErrorKind::Parameter);
}

TEST(ReviewStore, HistoryReplaysOnRestart) {
  TempDir tmp;
  {
    ReviewStore store(pairs(), tmp / "h.jsonl");
    store.submit(decide("p1", Verdict::Accept));
    store.submit(decide("p3", Verdict::Edit, "What does a PDU do?"));
    auto undated = decide("p2", Verdict::Reject);
    undated.decided_at.clear();
    store.submit(undated);
    EXPECT_FALSE(store.history("p2")[0].decided_at.empty());
  }
  ReviewStore again(pairs(), tmp / "h.jsonl");
  EXPECT_EQ(again.stats(), (Stats{1, 1, 1, 1, 2.0 / 3.0}));
  EXPECT_EQ(again.get("p3").effective_pair().question, "What does a PDU do?");
  EXPECT_EQ(read_jsonl(tmp / "h.jsonl").size(), 3u);

  auto dup = pairs();
  dup.push_back(dup.front());
  EXPECT_EQ(error_kind([&] { ReviewStore(dup, tmp / "other.jsonl"); }), ErrorKind::Conflict);
  EXPECT_EQ(error_kind([&] { ReviewStore(std::vector<QAPair>{make_pair("x1", "q", "a")}, tmp / "h.jsonl"); }),
            ErrorKind::Conflict);
}

TEST(ReviewStore, ExportAccepted) {
  TempDir tmp;
  ReviewStore store(pairs(), tmp / "h.jsonl");
  EXPECT_EQ(error_kind([&] { store.export_accepted(dataset::ExportFormat::QaJsonl, tmp / "e.jsonl"); }),
            ErrorKind::Parameter);
  store.submit(decide("p2", Verdict::Accept));
  store.submit(decide("p10", Verdict::Edit, std::nullopt, "Dallas, Texas."));
  const auto m = store.export_accepted(dataset::ExportFormat::QaJsonl, tmp / "e.jsonl");
  EXPECT_EQ(m.record_count, 2u);
  const auto back = read_pairs(tmp / "e.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].pair_id, "p2");
  EXPECT_EQ(back[1].answer, "Dallas, Texas.");
}

TEST(ReviewStore, ConcurrentSubmitsAreAllRecorded) {
  TempDir tmp;
  std::vector<QAPair> many;
  for (int i = 1; i <= 64; ++i) many.push_back(make_pair(fmt::format("p{}", i), "q", "a"));
  ReviewStore store(many, tmp / "h.jsonl");
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] {
      for (int i = t + 1; i <= 64; i += 4) {
        store.submit(decide(fmt::format("p{}", i), i % 2 ? Verdict::Accept : Verdict::Reject));
        (void)store.stats();
      }
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(store.stats(), (Stats{0, 32, 32, 0, 0.5}));
  EXPECT_EQ(read_jsonl(tmp / "h.jsonl").size(), 64u);
}

class ReviewApi : public ::testing::Test {
 protected:
  void SetUp() override {
    store_ = std::make_unique<ReviewStore>(pairs(), tmp_ / "h.jsonl", labels());
    ServerOptions opt;
    opt.port = 0;
    opt.export_dir = tmp_ / "exports";
    opt.created_at = "2026-02-01T00:00:00Z";
    server_ = std::make_unique<ReviewServer>(*store_, opt);
    const int port = server_->start();
    ASSERT_GT(port, 0);
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port);
    client_->set_connection_timeout(5);
  }
  void TearDown() override { server_->stop(); }

  json get(const std::string& path, int expected_status = 200) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res) << path;
    if (!res) return {};
    EXPECT_EQ(res->status, expected_status) << path << " " << res->body;
    return json::parse(res->body);
  }
  json post(const std::string& path, const std::string& body, int expected_status = 200) {
    auto res = client_->Post(path, body, "application/json");
    EXPECT_TRUE(res) << path;
    if (!res) return {};
    EXPECT_EQ(res->status, expected_status) << path << " " << res->body;
    return json::parse(res->body);
  }

  TempDir tmp_;
  std::unique_ptr<ReviewStore> store_;
  std::unique_ptr<ReviewServer> server_;
  std::unique_ptr<httplib::Client> client_;
};

TEST_F(ReviewApi, ReviewSession) {
  auto next = get("/api/pairs/next");
  EXPECT_EQ(next.at("pair").at("pair_id"), "p1");
  EXPECT_EQ(next.at("label"), "factual");
  EXPECT_EQ(next.at("stats").at("pending"), 4);

  EXPECT_EQ(get("/api/pairs/next?method=d_naive&label=conceptual").at("pair").at("pair_id"), "p2");
  EXPECT_EQ(get("/api/pairs/next?group=power").at("pair").at("pair_id"), "p1");

  auto r = post("/api/decisions", R"({"pair_id":"p1","reviewer":"ana","decision":"accept"})");
  EXPECT_EQ(r.at("state"), "accepted");
  r = post("/api/decisions",
           R"({"pair_id":"p3","reviewer":"ana","decision":"edit","edited_answer":"A power distribution unit."})");
  EXPECT_EQ(r.at("state"), "edited");
  EXPECT_EQ(r.at("stats").at("edited"), 1);

  const auto item = get("/api/pairs/p3");
  EXPECT_EQ(item.at("state"), "edited");
  EXPECT_EQ(item.at("effective").at("answer"), "A power distribution unit.");
  EXPECT_EQ(item.at("history").size(), 1u);

  const auto stats = get("/api/stats");
  EXPECT_EQ(stats.at("accepted"), 1);
  EXPECT_EQ(stats.at("pending"), 2);
  EXPECT_DOUBLE_EQ(stats.at("acceptance_rate").get<double>(), 1.0);

  const auto exported = post("/api/export", R"({"format":"instruct_template_jsonl","name":"round1"})");
  EXPECT_EQ(exported.at("manifest").at("record_count"), 2);
  const auto path = exported.at("path").get<std::string>();
  EXPECT_TRUE(std::filesystem::exists(path));
  EXPECT_TRUE(std::filesystem::exists(path + ".manifest.json"));
  EXPECT_EQ(std::filesystem::path(path).filename(), "round1.instruct_template_jsonl.jsonl");
}

TEST_F(ReviewApi, ErrorsMapToStatusCodes) {
  EXPECT_EQ(get("/api/pairs/p99", 404).at("kind"), "not_found");
  EXPECT_EQ(post("/api/decisions", "{not json", 400).at("kind"), "parameter");
  post("/api/decisions", R"({"pair_id":"p1","decision":"edit"})", 400);
  post("/api/decisions", R"({"pair_id":"zz","decision":"accept"})", 404);
  post("/api/export", R"({"format":"qa_jsonl","name":"x"})", 400);
  post("/api/decisions", R"({"pair_id":"p1","decision":"accept"})");
  post("/api/export", R"({"format":"qa_jsonl","name":"../escape"})", 400);
  post("/api/export", R"({"format":"xml","name":"ok"})", 400);
  const auto next = get("/api/pairs/next?method=manual");
  EXPECT_TRUE(next.at("pair").is_null());
}
