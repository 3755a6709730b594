#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lail {

/// One in-context requirement/program pair.
struct Shot {
  std::string requirement;
  std::string code;

  bool operator==(const Shot&) const = default;
};

/// Shots in prompt order followed by the requirement to solve.
///
/// Rendered form, with no instruction text:
///
///     ### Requirement:\n{x}\n### Code:\n{y}\n\n      (once per shot)
///     ### Requirement:\n{x_t}\n### Code:\n
struct Prompt {
  std::vector<Shot> shots;
  std::string test_requirement;
  std::string rendered;
};

std::string render_prompt(std::span<const Shot> shots, std::string_view test_requirement);

/// Inverse of render_prompt. Returns nullopt when `text` does not follow the
/// template. Exact for texts that do not themselves contain the delimiters.
std::optional<Prompt> parse_prompt(std::string_view text);

}  // namespace lail
