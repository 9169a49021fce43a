#include <gtest/gtest.h>

#include <thread>

#include "glossforge/review_service.hpp"
#include "local_server.hpp"
#include "test_util.hpp"

using namespace glossforge;
using glossforge::testing::fixtures_dir;
using glossforge::testing::LocalServer;
using glossforge::testing::TempDir;

namespace {

nlohmann::json body(const std::string& rater, bool ok, int q) {
  return {{"rater", rater}, {"understandable", ok}, {"quality", q}};
}

class ReviewApi : public ::testing::Test {
 protected:
  void SetUp() override { open(); }

  void open() {
    corpus = load_corpus(fixtures_dir() / "table1_corpus.jsonl");
    ids = load_sample_ids(fixtures_dir() / "table1_samples.txt");
    server.reset();
    service.reset();
    journal = std::make_unique<AnnotationJournal>(dir / "journal.jsonl");
    service = std::make_unique<ReviewService>(review_samples(corpus, ids), *journal, KappaWeighting::none,
                                              [] { return std::string("2025-03-01T09:00:00Z"); });
    server = std::make_unique<LocalServer>();
    service->mount(server->server());
    server->start();
    client = std::make_unique<httplib::Client>("127.0.0.1", server->port());
  }

  httplib::Result post(const std::string& id, const nlohmann::json& b) {
    return client->Post("/api/review/" + id, b.dump(), "application/json");
  }

  TempDir dir;
  Corpus corpus;
  std::vector<std::string> ids;
  std::unique_ptr<AnnotationJournal> journal;
  std::unique_ptr<ReviewService> service;
  std::unique_ptr<LocalServer> server;
  std::unique_ptr<httplib::Client> client;
};

}  // namespace

TEST_F(ReviewApi, NextFollowsSampledOrderAndAdvances) {
  auto res = client->Get("/api/review/next?rater=signer-1");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  auto j = nlohmann::json::parse(res->body);
  EXPECT_EQ(j["sample_id"], ids[0]);
  EXPECT_EQ(j["sentence"], corpus.find(ids[0])->sentence);
  EXPECT_EQ(j["gloss"].get<std::vector<std::string>>(), corpus.find(ids[0])->gloss);

  ASSERT_EQ(post(ids[0], body("signer-1", true, 4))->status, 200);
  j = nlohmann::json::parse(client->Get("/api/review/next?rater=signer-1")->body);
  EXPECT_EQ(j["sample_id"], ids[1]);
  // the other rater's queue is untouched
  j = nlohmann::json::parse(client->Get("/api/review/next?rater=signer-2")->body);
  EXPECT_EQ(j["sample_id"], ids[0]);
}

TEST_F(ReviewApi, ProgressCountsDistinctSamples) {
  auto p = nlohmann::json::parse(client->Get("/api/progress?rater=signer-1")->body);
  EXPECT_EQ(p["done"], 0);
  EXPECT_EQ(p["total"], 150);
  post(ids[3], body("signer-1", true, 4));
  post(ids[3], body("signer-1", false, 2));  // replacement
  post(ids[7], body("signer-1", true, 5));
  p = nlohmann::json::parse(client->Get("/api/progress?rater=signer-1")->body);
  EXPECT_EQ(p["done"], 2);
  EXPECT_EQ(journal->find(ids[3], "signer-1")->quality, 2);
}

TEST_F(ReviewApi, ViolationsAre422AndNotStored) {
  for (const auto& b : {body("signer-1", true, 0), body("signer-1", true, 6), body("", true, 3),
                        nlohmann::json{{"rater", "signer-1"}, {"understandable", "yes"}, {"quality", 3}},
                        nlohmann::json{{"rater", "signer-1"}, {"understandable", true}, {"quality", 2.5}},
                        nlohmann::json{{"rater", "signer-1"}, {"understandable", true}}, nlohmann::json::array()}) {
    auto res = post(ids[0], b);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 422) << b.dump();
    EXPECT_TRUE(nlohmann::json::parse(res->body).contains("error"));
  }
  EXPECT_TRUE(journal->snapshot().empty());
}

TEST_F(ReviewApi, OtherRequestErrors) {
  EXPECT_EQ(post("no-such-sample", body("signer-1", true, 3))->status, 404);
  EXPECT_EQ(client->Post("/api/review/" + ids[0], "{oops", "application/json")->status, 400);
  EXPECT_EQ(client->Get("/api/review/next")->status, 400);
  EXPECT_EQ(client->Get("/api/progress?rater=")->status, 400);
  EXPECT_TRUE(journal->snapshot().empty());
}

TEST_F(ReviewApi, ThirdRaterRejected) {
  ASSERT_EQ(post(ids[0], body("signer-1", true, 3))->status, 200);
  ASSERT_EQ(post(ids[0], body("signer-2", true, 3))->status, 200);
  EXPECT_EQ(post(ids[0], body("signer-3", true, 3))->status, 422);
  EXPECT_EQ(post(ids[1], body("signer-2", true, 3))->status, 200);
}

TEST_F(ReviewApi, ReportUnavailableUntilBothRatersMatch) {
  EXPECT_EQ(client->Get("/api/report")->status, 409);
  post(ids[0], body("signer-1", true, 3));
  post(ids[0], body("signer-2", true, 3));
  post(ids[1], body("signer-1", true, 3));
  auto res = client->Get("/api/report");
  EXPECT_EQ(res->status, 409);
  EXPECT_NE(res->body.find(ids[1]), std::string::npos);
  post(ids[1], body("signer-2", false, 1));
  res = client->Get("/api/report");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(nlohmann::json::parse(res->body)["samples"], 2);
}

TEST_F(ReviewApi, DoneIs204) {
  for (const auto& id : ids) ASSERT_EQ(post(id, body("signer-2", true, 4))->status, 200);
  auto res = client->Get("/api/review/next?rater=signer-2");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_TRUE(res->body.empty());
}

TEST_F(ReviewApi, ConcurrentRatersReproduceTable) {
  // replay the fixture journal through the API, one thread per rater
  const auto fixture = load_journal(fixtures_dir() / "table1_journal.jsonl");
  std::vector<std::thread> threads;
  std::atomic<int> failures{0};
  for (const char* rater : {"signer-1", "signer-2"})
    threads.emplace_back([&, rater] {
      httplib::Client c("127.0.0.1", server->port());
      for (const auto& r : fixture) {
        if (r.rater_id != rater) continue;
        auto res = c.Post("/api/review/" + r.sample_id, body(r.rater_id, r.understandable, r.quality).dump(),
                          "application/json");
        if (!res || res->status != 200) ++failures;
      }
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(failures, 0);

  // every journal line intact
  EXPECT_EQ(load_journal(dir / "journal.jsonl").size(), 300u);
  auto res = client->Get("/api/report");
  ASSERT_EQ(res->status, 200);
  auto j = nlohmann::json::parse(res->body);
  EXPECT_EQ(j["rows"].get<std::vector<std::string>>(), render_report_rows(build_report(fixture)));
  EXPECT_EQ(j["rows"][1], "Validation Rate (%) | 74.7 | 76.0 | 75.3");
}

TEST_F(ReviewApi, RestartResumesFromJournal) {
  post(ids[0], body("signer-1", true, 3));
  post(ids[1], body("signer-1", true, 3));
  open();
  auto p = nlohmann::json::parse(client->Get("/api/progress?rater=signer-1")->body);
  EXPECT_EQ(p["done"], 2);
  EXPECT_EQ(nlohmann::json::parse(client->Get("/api/review/next?rater=signer-1")->body)["sample_id"], ids[2]);
}

TEST(ReviewSamples, RejectsUnknownAndDuplicateIds) {
  auto c = load_corpus(fixtures_dir() / "table1_corpus.jsonl");
  EXPECT_THROW(review_samples(c, {"missing"}), Error);
  EXPECT_THROW(review_samples(c, {c.pairs[0].id, c.pairs[0].id}), Error);
}
