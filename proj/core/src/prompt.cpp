#include "lail/prompt.hpp"

namespace lail {
namespace {

constexpr std::string_view kRequirementHeader = "### Requirement:\n";
constexpr std::string_view kCodeHeader = "\n### Code:\n";
constexpr std::string_view kShotSeparator = "\n\n";

}  // namespace

std::string render_prompt(std::span<const Shot> shots, std::string_view test_requirement) {
  std::string out;
  for (const Shot& shot : shots) {
    out += kRequirementHeader;
    out += shot.requirement;
    out += kCodeHeader;
    out += shot.code;
    out += kShotSeparator;
  }
  out += kRequirementHeader;
  out += test_requirement;
  out += kCodeHeader;
  return out;
}

std::optional<Prompt> parse_prompt(std::string_view text) {
  Prompt prompt;
  std::size_t pos = 0;
  while (true) {
    if (text.substr(pos, kRequirementHeader.size()) != kRequirementHeader) return std::nullopt;
    pos += kRequirementHeader.size();
    const std::size_t code_at = text.find(kCodeHeader, pos);
    if (code_at == std::string_view::npos) return std::nullopt;
    std::string requirement(text.substr(pos, code_at - pos));
    pos = code_at + kCodeHeader.size();
    if (pos == text.size()) {
      prompt.test_requirement = std::move(requirement);
      break;
    }
    std::string next_block(kShotSeparator);
    next_block += kRequirementHeader;
    const std::size_t end = text.find(next_block, pos);
    if (end == std::string_view::npos) return std::nullopt;
    prompt.shots.push_back({std::move(requirement), std::string(text.substr(pos, end - pos))});
    pos = end + kShotSeparator.size();
  }
  prompt.rendered = std::string(text);
  return prompt;
}

}  // namespace lail
