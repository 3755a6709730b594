#include "lail/evaluation.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>
#include <thread>

#include "json_io.hpp"
#include "lail/error.hpp"
#include "lail/log.hpp"
#include "lail/parallel.hpp"

namespace lail {
namespace {

using detail::Json;

SampleRecord sample_from_json(const Json& object, std::string_view source, std::size_t line_no) {
  SampleRecord record;
  record.test_id = detail::require_string(object, "test_id", source, line_no);
  record.strategy = detail::require_string(object, "strategy", source, line_no);
  const Json& index = detail::require_field(object, "sample_index", source, line_no);
  if (!index.is_number_unsigned()) {
    throw DataError(detail::describe_location(source, line_no) + ": sample_index must be a non-negative integer");
  }
  record.sample_index = index.get<std::size_t>();
  record.program = detail::require_string(object, "program", source, line_no);
  return record;
}

bool on_path(const std::string& program) {
  if (program.find('/') != std::string::npos) return ::access(program.c_str(), X_OK) == 0;
  const char* path = std::getenv("PATH");
  if (path == nullptr) return false;
  std::stringstream dirs(path);
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    if (dir.empty()) dir = ".";
    if (::access((dir + "/" + program).c_str(), X_OK) == 0) return true;
  }
  return false;
}

std::string format_percent(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.2f%%", value);
  return buffer;
}

std::string format_rate(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.4f", value);
  return buffer;
}

std::string pad(const std::string& text, std::size_t width) {
  return text.size() >= width ? text : text + std::string(width - text.size(), ' ');
}

VerdictRecord run_one(const SampleRecord& record, const Example& test, const RunnerConfig& config,
                      const std::filesystem::path& file) {
  VerdictRecord verdict{record.test_id, record.sample_index, false, ""};
  if (test.tests.empty()) {
    verdict.reason = "no tests";
    return verdict;
  }
  std::string source = record.program;
  source.push_back('\n');
  for (const auto& statement : test.tests) {
    source += statement;
    source.push_back('\n');
  }
  detail::write_file_atomic(file, source);

  std::vector<std::string> argv_storage = config.command;
  argv_storage.push_back(file.string());
  std::vector<char*> argv;
  for (auto& arg : argv_storage) argv.push_back(arg.data());
  argv.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) throw Error("fork failed");
  if (pid == 0) {
    ::setpgid(0, 0);
    const int devnull = ::open("/dev/null", O_RDWR);
    if (devnull >= 0) {
      ::dup2(devnull, STDIN_FILENO);
      ::dup2(devnull, STDOUT_FILENO);
      ::dup2(devnull, STDERR_FILENO);
    }
    ::execvp(argv[0], argv.data());
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  const auto deadline = std::chrono::steady_clock::now() + config.timeout;
  int status = 0;
  while (true) {
    const pid_t done = ::waitpid(pid, &status, WNOHANG);
    if (done == pid) break;
    if (done < 0) throw Error("waitpid failed");
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      verdict.reason = "timeout";
      std::filesystem::remove(file);
      return verdict;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  std::filesystem::remove(file);
  if (WIFEXITED(status)) {
    verdict.pass = WEXITSTATUS(status) == 0;
    verdict.reason = verdict.pass ? "passed" : "nonzero exit";
  } else {
    verdict.reason = "signal";
  }
  return verdict;
}

}  // namespace

GenerationRun run_generation(std::span<const Example> testset, std::string_view strategy,
                             const ShotSelector& selector, const ExampleLookup& pool,
                             const Generator& generator, const GenerationOptions& options,
                             const std::optional<SamplesFile>& file) {
  options.params.validate();
  const auto n_samples = static_cast<std::size_t>(options.params.n_samples);
  GenerationRun run;

  std::map<std::string, std::vector<SampleRecord>, std::less<>> done;
  if (file) {
    const auto meta = detail::read_jsonl_meta(file->path);
    std::string kept = detail::dump_line({{std::string(detail::kMetaKey),
                                           {{"artifact", "samples"},
                                            {"strategy", std::string(strategy)},
                                            {"config_hash", file->config_hash},
                                            {"tool_version", file->tool_version}}}});
    if (meta && meta->value("config_hash", "") == file->config_hash) {
      std::map<std::string, std::vector<SampleRecord>, std::less<>> partial;
      const std::string source = file->path.string();
      detail::for_each_jsonl(
          file->path,
          [&](const Json& object, std::size_t line_no) {
            SampleRecord record = sample_from_json(object, source, line_no);
            partial[record.test_id].push_back(std::move(record));
          },
          /*tolerate_torn_tail=*/true);
      for (const Example& test : testset) {
        auto it = partial.find(test.id);
        if (it == partial.end() || it->second.size() != n_samples) continue;
        for (const auto& record : it->second) kept += sample_to_json_line(record) + "\n";
        done.emplace(test.id, std::move(it->second));
      }
    } else if (std::filesystem::exists(file->path)) {
      log_warning("samples file " + file->path.string() + " belongs to another configuration; restarting");
    }
    detail::write_file_atomic(file->path, kept);
  }

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < testset.size(); ++i) {
    if (done.count(testset[i].id) == 0) pending.push_back(i);
  }
  run.resumed_tests = testset.size() - pending.size();

  struct Outcome {
    std::vector<SampleRecord> records;
    std::optional<std::string> error;
  };
  const auto generate_one = [&](std::size_t test_index) {
    Outcome outcome;
    const Example& test = testset[test_index];
    try {
      const auto shots = selector(test);
      const Prompt prompt = assemble_prompt(shots, pool, test.requirement, options.shot_order);
      GenerationParams params = options.params;
      const auto programs = generator.generate(prompt.rendered, params);
      if (programs.size() != n_samples) throw ProtocolError("generator returned the wrong number of samples");
      for (std::size_t s = 0; s < programs.size(); ++s) {
        outcome.records.push_back({test.id, std::string(strategy), s, programs[s]});
      }
    } catch (const ProviderError& e) {
      outcome.error = e.what();
    }
    return outcome;
  };

  std::size_t workers = options.workers == 0 ? generator.concurrency() : options.workers;
  workers = std::max<std::size_t>(workers, 1);
  const std::size_t chunk = std::max<std::size_t>(workers * 4, 16);
  for (std::size_t begin = 0; begin < pending.size(); begin += chunk) {
    const std::size_t end = std::min(pending.size(), begin + chunk);
    std::vector<Outcome> outcomes(end - begin);
    parallel_for(outcomes.size(), workers,
                 [&](std::size_t i) { outcomes[i] = generate_one(pending[begin + i]); });
    std::string lines;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      const std::string& test_id = testset[pending[begin + i]].id;
      if (outcomes[i].error) {
        run.failures.push_back({test_id, *outcomes[i].error});
        continue;
      }
      for (const auto& record : outcomes[i].records) lines += sample_to_json_line(record) + "\n";
      done.emplace(test_id, std::move(outcomes[i].records));
    }
    if (file && !lines.empty()) detail::append_file(file->path, lines);
  }

  for (const Example& test : testset) {
    auto it = done.find(test.id);
    if (it == done.end()) continue;
    run.records.insert(run.records.end(), it->second.begin(), it->second.end());
  }
  return run;
}

double pass_at_k(const VerdictMatrix& verdicts, std::size_t k) {
  if (k == 0) throw InvalidArgument("pass_at_k: k must be at least 1");
  if (verdicts.rows.empty()) throw InvalidArgument("pass_at_k: no test items");
  std::size_t solved = 0;
  for (const auto& [test_id, row] : verdicts.rows) {
    if (row.size() < k) {
      throw InvalidArgument("pass_at_k: k = " + std::to_string(k) + " exceeds the " +
                            std::to_string(row.size()) + " samples of " + test_id);
    }
    if (std::any_of(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), [](bool b) { return b; })) {
      ++solved;
    }
  }
  return static_cast<double>(solved) / static_cast<double>(verdicts.rows.size());
}

EvalReport make_report(std::string strategy, const VerdictMatrix& verdicts,
                       std::span<const std::size_t> ks, std::string config_snapshot) {
  EvalReport report;
  report.strategy = std::move(strategy);
  report.n_test = verdicts.rows.size();
  for (const auto& [test_id, _] : verdicts.rows) report.test_ids.push_back(test_id);
  for (std::size_t k : ks) report.pass_at[k] = pass_at_k(verdicts, k);
  report.config = std::move(config_snapshot);
  return report;
}

VerdictMatrix verdicts_for(std::span<const SampleRecord> records,
                           std::span<const VerdictRecord> verdicts) {
  std::map<std::pair<std::string, std::size_t>, bool> lookup;
  for (const auto& v : verdicts) lookup[{v.test_id, v.sample_index}] = v.pass;
  std::map<std::string, std::map<std::size_t, bool>> ordered;
  for (const auto& record : records) {
    auto it = lookup.find({record.test_id, record.sample_index});
    if (it == lookup.end()) {
      throw DataError("no verdict for test " + record.test_id + " sample " +
                      std::to_string(record.sample_index));
    }
    ordered[record.test_id][record.sample_index] = it->second;
  }
  VerdictMatrix matrix;
  for (const auto& [test_id, samples] : ordered) {
    auto& row = matrix.rows[test_id];
    for (const auto& [_, pass] : samples) row.push_back(pass);
  }
  return matrix;
}

std::vector<VerdictRecord> run_subprocess_verdicts(std::span<const SampleRecord> records,
                                                   const ExampleLookup& tests,
                                                   const RunnerConfig& config) {
  if (!config.acknowledged_execution_risk) {
    throw ConfigError(
        "the subprocess runner executes generated code; pass --i-understand-execution-risk to enable it");
  }
  if (config.command.empty()) throw ConfigError("runner command is empty");
  if (!on_path(config.command.front())) {
    throw ConfigError("runner \"" + config.command.front() + "\" not found");
  }
  static std::atomic<unsigned long> counter{0};
  const auto dir = std::filesystem::temp_directory_path();
  std::vector<VerdictRecord> out(records.size());
  parallel_for(records.size(), std::max<std::size_t>(config.max_processes, 1), [&](std::size_t i) {
    const auto name = "lail-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) +
                      config.file_suffix;
    out[i] = run_one(records[i], tests.at(records[i].test_id), config, dir / name);
  });
  return out;
}

ComparisonDocument compare_report(std::span<const EvalReport> reports, std::string_view baseline) {
  if (reports.empty()) throw InvalidArgument("compare_report: no reports");
  ComparisonDocument doc;
  std::set<std::size_t> ks;
  for (const auto& report : reports) {
    for (const auto& [k, _] : report.pass_at) ks.insert(k);
  }
  const EvalReport* base = nullptr;
  for (const auto& report : reports) {
    if (report.strategy == baseline) base = &report;
  }
  const auto& reference_ids = reports.front().test_ids;
  for (const auto& report : reports) {
    if (report.test_ids != reference_ids) {
      doc.warnings.push_back("test set of " + report.strategy + " differs from " +
                             reports.front().strategy);
    }
    for (auto a = report.pass_at.begin(); a != report.pass_at.end(); ++a) {
      for (auto b = std::next(a); b != report.pass_at.end(); ++b) {
        if (a->second > b->second) {
          doc.warnings.push_back(report.strategy + ": Pass@" + std::to_string(a->first) + " > Pass@" +
                                 std::to_string(b->first));
        }
      }
    }
  }
  if (base == nullptr && reports.size() > 1) {
    doc.warnings.push_back("baseline " + std::string(baseline) + " not among the reports");
  }

  std::vector<std::string> header = {"strategy", "n_test"};
  for (std::size_t k : ks) header.push_back("Pass@" + std::to_string(k));
  if (base != nullptr) {
    for (std::size_t k : ks) header.push_back("Rel@" + std::to_string(k));
  }
  std::vector<std::vector<std::string>> rows;
  Json json_rows = Json::array();
  for (const auto& report : reports) {
    std::vector<std::string> row = {report.strategy, std::to_string(report.n_test)};
    Json pass_at = Json::object();
    Json relative = Json::object();
    for (std::size_t k : ks) {
      auto it = report.pass_at.find(k);
      row.push_back(it == report.pass_at.end() ? "-" : format_rate(it->second));
      if (it != report.pass_at.end()) pass_at[std::to_string(k)] = it->second;
    }
    if (base != nullptr) {
      for (std::size_t k : ks) {
        auto it = report.pass_at.find(k);
        auto bt = base->pass_at.find(k);
        if (it == report.pass_at.end() || bt == base->pass_at.end() || bt->second == 0.0) {
          row.push_back("n/a");
          continue;
        }
        const double improvement = (it->second - bt->second) / bt->second * 100.0;
        row.push_back(format_percent(improvement));
        relative[std::to_string(k)] = improvement;
      }
    }
    rows.push_back(std::move(row));
    json_rows.push_back({{"strategy", report.strategy},
                         {"n_test", report.n_test},
                         {"pass_at", pass_at},
                         {"relative_improvement", relative}});
  }
  std::vector<std::size_t> widths(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    widths[c] = header[c].size();
    for (const auto& row : rows) widths[c] = std::max(widths[c], row[c].size());
  }
  const auto emit = [&](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      line += c + 1 == cells.size() ? cells[c] : pad(cells[c], widths[c] + 2);
    }
    doc.table += line + "\n";
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  doc.json = Json{{"baseline", std::string(baseline)}, {"rows", json_rows}, {"warnings", doc.warnings}}
                 .dump(2) + "\n";
  return doc;
}

EvalReport average_reports(std::span<const EvalReport> runs) {
  if (runs.empty()) throw InvalidArgument("average_reports: no runs");
  EvalReport mean = runs.front();
  for (const auto& run : runs.subspan(1)) {
    if (run.strategy != mean.strategy || run.test_ids != mean.test_ids) {
      throw InvalidArgument("average_reports: runs differ in strategy or test set");
    }
    for (auto& [k, value] : mean.pass_at) {
      auto it = run.pass_at.find(k);
      if (it == run.pass_at.end()) throw InvalidArgument("average_reports: runs differ in k values");
      value += it->second;
    }
  }
  for (auto& [k, value] : mean.pass_at) value /= static_cast<double>(runs.size());
  return mean;
}

std::string sample_to_json_line(const SampleRecord& record) {
  std::string line = detail::dump_line({{"test_id", record.test_id},
                                        {"strategy", record.strategy},
                                        {"sample_index", record.sample_index},
                                        {"program", record.program}});
  line.pop_back();
  return line;
}

std::vector<SampleRecord> read_samples(const std::filesystem::path& path) {
  std::vector<SampleRecord> out;
  const std::string source = path.string();
  detail::for_each_jsonl(path, [&](const Json& object, std::size_t line_no) {
    out.push_back(sample_from_json(object, source, line_no));
  });
  return out;
}

std::string verdict_to_json_line(const VerdictRecord& verdict) {
  std::string line = detail::dump_line({{"test_id", verdict.test_id},
                                        {"sample_index", verdict.sample_index},
                                        {"pass", verdict.pass},
                                        {"reason", verdict.reason}});
  line.pop_back();
  return line;
}

std::vector<VerdictRecord> read_verdicts(const std::filesystem::path& path) {
  std::vector<VerdictRecord> out;
  const std::string source = path.string();
  detail::for_each_jsonl(path, [&](const Json& object, std::size_t line_no) {
    VerdictRecord verdict;
    verdict.test_id = detail::require_string(object, "test_id", source, line_no);
    const Json& index = detail::require_field(object, "sample_index", source, line_no);
    const Json& pass = detail::require_field(object, "pass", source, line_no);
    if (!index.is_number_unsigned() || !pass.is_boolean()) {
      throw DataError(detail::describe_location(source, line_no) +
                      ": sample_index must be a non-negative integer and pass a boolean");
    }
    verdict.sample_index = index.get<std::size_t>();
    verdict.pass = pass.get<bool>();
    if (auto it = object.find("reason"); it != object.end() && it->is_string()) {
      verdict.reason = it->get<std::string>();
    }
    out.push_back(std::move(verdict));
  });
  return out;
}

void write_verdicts(const std::filesystem::path& path, std::span<const VerdictRecord> verdicts,
                    const std::optional<Provenance>& provenance) {
  std::string content;
  if (provenance) {
    content = detail::dump_line({{std::string(detail::kMetaKey),
                                  {{"artifact", "verdicts"},
                                   {"config_hash", provenance->config_hash},
                                   {"tool_version", provenance->tool_version}}}});
  }
  for (const auto& verdict : verdicts) content += verdict_to_json_line(verdict) + "\n";
  detail::write_file_atomic(path, content);
}

std::vector<VerdictRecord> exact_match_verdicts(std::span<const SampleRecord> records,
                                                const ExampleLookup& tests) {
  std::vector<VerdictRecord> out;
  out.reserve(records.size());
  for (const auto& record : records) {
    const bool same = record.program == tests.at(record.test_id).code;
    out.push_back({record.test_id, record.sample_index, same, same ? "exact match" : "mismatch"});
  }
  return out;
}

std::string report_to_json(const EvalReport& report) {
  Json pass_at = Json::object();
  for (const auto& [k, value] : report.pass_at) pass_at[std::to_string(k)] = value;
  Json config;
  try {
    config = Json::parse(report.config);
  } catch (const Json::parse_error&) {
    config = report.config;
  }
  return Json{{"strategy", report.strategy},
              {"pass_at", pass_at},
              {"n_test", report.n_test},
              {"test_ids", report.test_ids},
              {"config", config},
              {"config_hash", report.config_hash},
              {"tool_version", report.tool_version}}
             .dump(2) + "\n";
}

EvalReport report_from_json(std::string_view text) {
  try {
    const Json document = Json::parse(text);
    EvalReport report;
    report.strategy = document.at("strategy").get<std::string>();
    for (const auto& [k, value] : document.at("pass_at").items()) {
      report.pass_at[std::stoul(k)] = value.get<double>();
    }
    report.n_test = document.at("n_test").get<std::size_t>();
    report.test_ids = document.at("test_ids").get<std::vector<std::string>>();
    report.config = document.contains("config") ? document.at("config").dump() : "{}";
    report.config_hash = document.value("config_hash", "");
    report.tool_version = document.value("tool_version", "");
    return report;
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  } catch (const std::logic_error& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

}  // namespace lail
