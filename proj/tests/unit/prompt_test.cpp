#include <gtest/gtest.h>

#include <random>

#include "lail/prompt.hpp"

using namespace lail;

TEST(Prompt, RendersTemplateExactly) {
  const std::vector<Shot> shots = {{"Add.", "a + b"}};
  EXPECT_EQ(render_prompt(shots, "Sub."),
            "### Requirement:\nAdd.\n### Code:\na + b\n\n### Requirement:\nSub.\n### Code:\n");
  const std::vector<Shot> none;
  EXPECT_EQ(render_prompt(none, "Sub."), "### Requirement:\nSub.\n### Code:\n");
}

TEST(Prompt, ParseInvertsRender) {
  std::mt19937 rng(3);
  const std::string alphabet = "ab #\n:().=+";
  auto random_text = [&](std::size_t len) {
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
    return s;
  };
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Shot> shots(rng() % 4);
    for (auto& shot : shots) shot = {random_text(1 + rng() % 20), random_text(1 + rng() % 30)};
    const std::string test = random_text(1 + rng() % 20);
    const std::string rendered = render_prompt(shots, test);
    const auto parsed = parse_prompt(rendered);
    ASSERT_TRUE(parsed.has_value()) << rendered;
    EXPECT_EQ(parsed->shots, shots);
    EXPECT_EQ(parsed->test_requirement, test);
    EXPECT_EQ(parsed->rendered, rendered);
  }
}

TEST(Prompt, RejectsForeignText) {
  EXPECT_FALSE(parse_prompt("def f(): pass").has_value());
  EXPECT_FALSE(parse_prompt("### Requirement:\nx\n").has_value());
}
