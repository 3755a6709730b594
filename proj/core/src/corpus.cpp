#include "lail/corpus.hpp"

#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "json_io.hpp"
#include "lail/error.hpp"

namespace lail {
namespace {

using detail::Json;

constexpr std::string_view kSplitNames[] = {"train", "dev", "test"};

Example example_from_json(const Json& object, std::string_view source, std::size_t line_no) {
  for (const auto& [key, _] : object.items()) {
    if (key != "id" && key != "requirement" && key != "code" && key != "tests") {
      throw DataError(detail::describe_location(source, line_no) + ": unexpected field \"" + key +
                      "\"");
    }
  }
  Example example;
  example.id = detail::require_string(object, "id", source, line_no);
  example.requirement = detail::require_string(object, "requirement", source, line_no);
  example.code = detail::require_string(object, "code", source, line_no);
  const Json& tests = detail::require_field(object, "tests", source, line_no);
  if (!tests.is_array()) {
    throw DataError(detail::describe_location(source, line_no) +
                    ": field \"tests\" must be an array of strings");
  }
  for (const Json& test : tests) {
    if (!test.is_string()) {
      throw DataError(detail::describe_location(source, line_no) +
                      ": field \"tests\" must be an array of strings");
    }
    example.tests.push_back(test.get<std::string>());
  }
  return example;
}

template <typename D>
auto& split_of(D& dataset, std::string_view name) {
  if (name == "train") return dataset.train;
  if (name == "dev") return dataset.dev;
  if (name == "test") return dataset.test;
  throw DataError("unknown split \"" + std::string(name) + "\" (expected train, dev or test)");
}

}  // namespace

std::vector<Example> parse_examples(std::istream& in, std::string_view source) {
  std::vector<Example> examples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Json object = detail::parse_object_line(line, source, line_no);
    if (object.contains(detail::kMetaKey)) continue;
    examples.push_back(example_from_json(object, source, line_no));
  }
  return examples;
}

std::vector<Example> read_examples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file " + path.string());
  return parse_examples(in, path.string());
}

std::string example_to_json_line(const Example& example) {
  Json object = {{"id", example.id},
                 {"requirement", example.requirement},
                 {"code", example.code},
                 {"tests", example.tests}};
  std::string line = detail::dump_line(object);
  line.pop_back();
  return line;
}

void write_examples(const std::filesystem::path& path, std::span<const Example> examples) {
  std::string content;
  for (const Example& example : examples) {
    content += example_to_json_line(example);
    content.push_back('\n');
  }
  detail::write_file_atomic(path, content);
}

Dataset load_dataset(const DatasetSource& source) {
  Dataset dataset;
  dataset.name = source.name;
  dataset.language_tag = source.language_tag;
  for (const auto& [split, relative] : source.splits) {
    const std::filesystem::path path = relative.is_absolute() ? relative : source.root / relative;
    split_of(dataset, split) = read_examples(path);
  }
  const std::vector<Finding> findings = validate_dataset(dataset);
  if (!findings.empty()) {
    std::ostringstream message;
    message << "dataset \"" << dataset.name << "\" failed validation:";
    for (const Finding& f : findings) {
      message << "\n  " << f.split << " id \"" << f.id << "\": " << f.message;
    }
    throw DataError(message.str());
  }
  return dataset;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  for (std::string_view split : kSplitNames) {
    const auto& examples = split_of(dataset, split);
    if (examples.empty()) continue;
    write_examples(dir / (std::string(split) + ".jsonl"), examples);
  }
}

std::vector<Finding> validate_dataset(const Dataset& dataset) {
  std::vector<Finding> findings;
  std::set<std::string, std::less<>> seen;
  for (std::string_view split : kSplitNames) {
    const auto& examples = split_of(dataset, split);
    for (const Example& example : examples) {
      const std::string name(split);
      if (example.id.empty()) {
        findings.push_back({name, example.id, "empty id"});
      } else if (!seen.insert(example.id).second) {
        findings.push_back({name, example.id, "duplicate id"});
      }
      if (example.requirement.empty()) findings.push_back({name, example.id, "empty requirement"});
      if (example.code.empty()) findings.push_back({name, example.id, "empty code"});
    }
  }
  return findings;
}

ExampleLookup::ExampleLookup(std::span<const Example> examples) : examples_(examples) {
  index_.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) index_.emplace(examples[i].id, i);
}

const Example* ExampleLookup::find(std::string_view id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &examples_[it->second];
}

const Example& ExampleLookup::at(std::string_view id) const {
  if (const Example* example = find(id)) return *example;
  throw InvalidArgument("unknown example id \"" + std::string(id) + "\"");
}

std::size_t ExampleLookup::index_of(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw InvalidArgument("unknown example id \"" + std::string(id) + "\"");
  return it->second;
}

}  // namespace lail
