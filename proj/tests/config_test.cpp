#include <gtest/gtest.h>

#include <cstdlib>

#include "ckgr/config.hpp"
#include "ckgr/errors.hpp"
#include "support.hpp"

namespace ckgr {
namespace {

// Sets an environment variable for the lifetime of the object.
class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) { ::setenv(name, value, 1); }
  ~ScopedEnv() { ::unsetenv(name_); }

 private:
  const char* name_;
};

TEST(Config, Defaults) {
  const ReasonerConfig c;
  EXPECT_EQ(c.max_depth, 3u);
  EXPECT_EQ(c.k_nodes, 10u);
  EXPECT_EQ(c.k_triples, 10u);
  EXPECT_EQ(c.k_answers, 50u);
  EXPECT_EQ(c.beam_width, 32u);
  EXPECT_EQ(c.top_m_relations, 1u);
  EXPECT_TRUE(c.relation_filter);
  EXPECT_EQ(c.epochs, 100u);
  EXPECT_EQ(c.learning_rate, 1e-4);
  EXPECT_EQ(c.lr_decay, 0.9);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ParsesCommentsAndBlankLines) {
  const auto kv = parse_config_text("# header\n\nmax_depth = 2   # inline\n  k_nodes=5\r\n", "a.cfg");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv[0], (std::pair<std::string, std::string>{"max_depth", "2"}));
  EXPECT_EQ(kv[1], (std::pair<std::string, std::string>{"k_nodes", "5"}));
}

TEST(Config, ErrorsCarryLineNumbers) {
  try {
    parse_config_text("max_depth = 2\nno equals sign\n", "a.cfg");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("a.cfg:2"), std::string::npos) << e.what();
  }
  try {
    parse_config_text("\n\nbogus_key = 1\n", "b.cfg");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("b.cfg:3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("bogus_key"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config_text("max_depth = two\n", "c"), ParseError);
  EXPECT_THROW(parse_config_text("relation_filter = maybe\n", "c"), ParseError);
  EXPECT_THROW(parse_config_text("k_nodes =\n", "c"), ParseError);
}

TEST(Config, Validate) {
  ReasonerConfig c;
  c.k_nodes = 0;
  EXPECT_THROW(c.validate(), UsageError);
  c = ReasonerConfig{};
  c.lr_decay = 1.5;
  EXPECT_THROW(c.validate(), UsageError);
  c = ReasonerConfig{};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), UsageError);
  c = ReasonerConfig{};
  c.epochs = 0;
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, RenderRoundTrips) {
  ReasonerConfig c;
  c.max_depth = 5;
  c.learning_rate = 0.0123;
  c.relation_filter = false;
  c.knn_mode = KnnMode::approximate;
  ReasonerConfig back;
  for (const auto& [k, v] : parse_config_text(c.render(), "render")) back.set(k, v);
  EXPECT_EQ(back.render(), c.render());
  EXPECT_EQ(parse_config_text(c.render(), "render").size(), ReasonerConfig::keys().size());
}

TEST(Config, Precedence) {
  testing::TempDir dir;
  const auto file = dir.file("e.cfg", "max_depth = 2\nk_nodes = 7\nk_triples = 4\n");
  {
    const ReasonerConfig c = resolve_config(&file, {}, false);
    EXPECT_EQ(c.max_depth, 2u);
    EXPECT_EQ(c.k_nodes, 7u);
    EXPECT_EQ(c.beam_width, 32u);
  }
  ScopedEnv env("ENGINE_K_NODES", "9");
  ScopedEnv env2("ENGINE_K_TRIPLES", "6");
  {
    const ReasonerConfig c = resolve_config(&file, {{"k_triples", "8"}});
    EXPECT_EQ(c.max_depth, 2u);   // file
    EXPECT_EQ(c.k_nodes, 9u);     // env beats file
    EXPECT_EQ(c.k_triples, 8u);   // flag beats env
  }
  EXPECT_EQ(resolve_config(&file, {}, false).k_nodes, 7u);
  {
    ScopedEnv bad("ENGINE_BEAM_WIDTH", "wide");
    EXPECT_THROW(resolve_config(nullptr, {}), ParseError);
  }
  const auto missing = dir / "nope.cfg";
  EXPECT_THROW(resolve_config(&missing, {}, false), LookupError);
  EXPECT_THROW(resolve_config(nullptr, {{"max_depth", "0"}}, false), UsageError);
}

}  // namespace
}  // namespace ckgr
