#include <gtest/gtest.h>

#include <fstream>

#include "nerkd/config.hpp"
#include "test_util.hpp"

using namespace nerkd;

TEST(Config, Defaults) {
  ToolkitConfig c;
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.labels, default_labels());
  EXPECT_EQ(c.annotator.temperature, 0.0);
  EXPECT_EQ(c.annotator.cache_mode, CacheMode::read_write);
  EXPECT_TRUE(c.alignment.all_occurrences);
  EXPECT_EQ(c.alignment.flatten_rule, "longest-span-wins");
  EXPECT_EQ(c.schedule.T, 20);
  EXPECT_EQ(c.lr, (LrSpec{1e-5, 1.0}));
  EXPECT_EQ(c.experiment.iterations, 5);
}

TEST(Config, PartialOverrides) {
  auto c = config_from_json(nlohmann::json::parse(R"({
    "seed": 17,
    "prompt": {"mode": "cot"},
    "llm": {"cache_mode": "read_only", "retry": {"max_attempts": 2, "base_delay_ms": 10},
            "endpoint": {"url": "http://localhost:8080/v1/chat"}},
    "schedule": {"kind": "sigmoid", "k": 8},
    "lr": {"decay_factor": 0.95},
    "alignment": {"all_occurrences": false}
  })"));
  EXPECT_EQ(c.seed, 17u);
  EXPECT_EQ(c.prompt_mode, PromptMode::cot);
  EXPECT_EQ(c.annotator.cache_mode, CacheMode::read_only);
  EXPECT_EQ(c.annotator.retry.max_attempts, 2);
  EXPECT_EQ(c.annotator.retry.base_delay.count(), 10);
  EXPECT_EQ(c.annotator.retry.max_delay.count(), 30000);
  EXPECT_EQ(c.endpoint.url, "http://localhost:8080/v1/chat");
  EXPECT_EQ(c.endpoint.prompt_path, "/messages/0/content");
  EXPECT_EQ(c.schedule, (ScheduleSpec{BlendKind::sigmoid, 8, 0, 20}));
  EXPECT_EQ(c.lr, (LrSpec{1e-5, 0.95}));
  EXPECT_FALSE(c.alignment.all_occurrences);
}

TEST(Config, JsonRoundTrip) {
  ToolkitConfig c;
  c.seed = 3;
  c.schedule = {BlendKind::power, 0, 0.5, 20};
  c.annotator.model_name = "local-model";
  c.parallelism = 4;
  c.experiment.trainer = "external";
  c.experiment.command = "./train.sh";
  const auto j = to_json(c);
  EXPECT_EQ(to_json(config_from_json(j)), j);
}

TEST(Config, Errors) {
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"trainer": {}})")), InvalidArgument);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"seed": "seven"})")), InvalidArgument);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"llm": {"cache_mode": "sometimes"}})")),
               InvalidArgument);
  EXPECT_THROW(
      config_from_json(nlohmann::json::parse(R"({"alignment": {"type_tiebreak": ["PER"]}})")),
      InvalidArgument);
  EXPECT_THROW(load_config("/nonexistent/config.json"), InvalidArgument);

  auto dir = nerkd::testing::scratch_dir("config");
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_config((dir / "bad.json").string()), ParseError);
  std::filesystem::remove_all(dir);
}

TEST(Config, ShippedExampleLoadsAsDefaults) {
  auto c = load_config(std::string(NERKD_REPO_DATA) + "/config.example.json");
  EXPECT_EQ(to_json(c), to_json(ToolkitConfig{}));
}
