#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lail {

/// One requirement/program record; the unit of the candidate pool.
struct Example {
  std::string id;
  std::string requirement;
  std::string code;
  std::vector<std::string> tests;

  bool operator==(const Example&) const = default;
};

/// Named train/dev/test splits. `train` is the candidate pool.
struct Dataset {
  std::string name;
  std::string language_tag;
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;

  bool operator==(const Dataset&) const = default;
};

/// Where a dataset lives on disk: split name ("train", "dev", "test") to file,
/// relative paths resolved against `root`.
struct DatasetSource {
  std::string name;
  std::string language_tag = "python";
  std::filesystem::path root;
  std::map<std::string, std::filesystem::path> splits;
};

/// One violated invariant found by validate_dataset.
struct Finding {
  std::string split;
  std::string id;
  std::string message;

  bool operator==(const Finding&) const = default;
};

/// Parses line-delimited Example records. Blank lines are skipped; any other
/// malformed line throws DataError naming `source` and the 1-based line number.
std::vector<Example> parse_examples(std::istream& in, std::string_view source);

/// Reads an Example file; throws DataError if it cannot be opened or parsed.
std::vector<Example> read_examples(const std::filesystem::path& path);

/// Serializes one Example as a single JSON line (no trailing newline).
std::string example_to_json_line(const Example& example);

void write_examples(const std::filesystem::path& path, std::span<const Example> examples);

/// Loads every split in `source` and validates the result; any finding is
/// raised as a DataError listing all findings.
Dataset load_dataset(const DatasetSource& source);

/// Writes each non-empty split of `dataset` to `<dir>/<split>.jsonl`.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Checks Example and Dataset invariants. Never throws: findings are data.
std::vector<Finding> validate_dataset(const Dataset& dataset);

/// Id -> Example lookup over a borrowed sequence. The sequence must outlive it.
class ExampleLookup {
 public:
  ExampleLookup() = default;
  explicit ExampleLookup(std::span<const Example> examples);

  /// Throws InvalidArgument for unknown ids.
  const Example& at(std::string_view id) const;
  const Example* find(std::string_view id) const;
  std::size_t index_of(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != nullptr; }
  std::size_t size() const { return examples_.size(); }
  std::span<const Example> examples() const { return examples_; }

 private:
  std::span<const Example> examples_;
  std::unordered_map<std::string_view, std::size_t> index_;
};

}  // namespace lail
