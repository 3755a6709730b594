// Acceptance suite: one PASS/FAIL line per criterion; exits nonzero on any failure.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli_support.hpp"
#include "lail/error.hpp"
#include "lail/evaluation.hpp"
#include "lail/http_provider.hpp"
#include "lail/labeling.hpp"
#include "lail/lexical.hpp"
#include "lail/retriever.hpp"
#include "lail/selection.hpp"
#include "lail/synthetic.hpp"
#include "oracles.hpp"
#include "stub_server.hpp"
#include "support.hpp"

#include <json.hpp>

namespace fs = std::filesystem;
using namespace lail;
using lail::testing::CommandResult;
using lail::testing::TempDir;
using nlohmann::json;

namespace {

/// Collects failed expectations for one criterion.
class Checks {
 public:
  void expect(bool condition, const std::string& message) {
    if (!condition && failures_.size() < 5) failures_.push_back(message);
    if (!condition) ++failed_;
  }
  void note(const std::string& text) { notes_.push_back(text); }
  bool ok() const { return failed_ == 0; }
  std::string summary() const {
    std::string text;
    for (const auto& n : notes_) text += (text.empty() ? "" : "; ") + n;
    for (const auto& f : failures_) text += (text.empty() ? "" : "; ") + f;
    if (failed_ > failures_.size()) text += "; (" + std::to_string(failed_ - failures_.size()) + " more)";
    return text;
  }

 private:
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
  std::size_t failed_ = 0;
};

std::string fixed(double value, int digits = 4) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << value;
  return out.str();
}

std::string random_text(std::mt19937_64& rng, std::size_t vocabulary, std::size_t min_len,
                        std::size_t max_len) {
  std::string text;
  const std::size_t length = min_len + rng() % (max_len - min_len + 1);
  for (std::size_t i = 0; i < length; ++i) {
    if (!text.empty()) text += ' ';
    text += "w" + std::to_string(rng() % vocabulary);
  }
  return text;
}

Vector random_unit(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v.normalized();
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

// ---------------------------------------------------------------------------
// 1. Formula oracles

void formula_oracles(Checks& c) {
  std::mt19937_64 rng(101);
  constexpr int kInstances = 25;

  double worst_bm25 = 0;
  for (int trial = 0; trial < kInstances; ++trial) {
    const std::size_t n_docs = 3 + rng() % 6;
    std::vector<std::string> ids;
    std::vector<std::string> texts;
    std::vector<std::vector<std::string>> docs;
    for (std::size_t d = 0; d < n_docs; ++d) {
      ids.push_back("d" + std::to_string(d));
      texts.push_back(random_text(rng, 8, 1, 10));
      docs.push_back(oracle::words(texts.back()));
    }
    const Bm25Index index(ids, texts);
    const auto query = oracle::words(random_text(rng, 10, 1, 4));
    for (std::size_t d = 0; d < n_docs; ++d) {
      const double diff = std::abs(index.score_at(query, d) - oracle::bm25(docs, query, d));
      worst_bm25 = std::max(worst_bm25, diff);
    }
  }
  c.expect(worst_bm25 <= 1e-9, "bm25 deviates by " + std::to_string(worst_bm25));

  double worst_m = 0;
  const MockScorer scorer(0.01);
  for (int trial = 0; trial < kInstances; ++trial) {
    const Example anchor{"a", random_text(rng, 12, 3, 8), random_text(rng, 12, 1, 12), {}};
    const Example candidate{"b", random_text(rng, 12, 3, 8), random_text(rng, 12, 1, 12), {}};
    const double expected = std::log(0.01 + 0.99 * oracle::jaccard(anchor.code, candidate.code));
    worst_m = std::max(worst_m, std::abs(metric_m(anchor, candidate, scorer) - expected));
  }
  c.expect(worst_m <= 1e-9, "metric_m deviates by " + std::to_string(worst_m));

  double worst_bleu = 0;
  for (int trial = 0; trial < kInstances; ++trial) {
    const auto hyp = oracle::words(random_text(rng, 6, 1, 14));
    const auto ref = oracle::words(random_text(rng, 6, 1, 14));
    worst_bleu = std::max(worst_bleu, std::abs(bleu4(hyp, ref) - oracle::bleu(hyp, ref)));
  }
  c.expect(worst_bleu <= 1e-6, "BLEU deviates by " + std::to_string(worst_bleu));

  double worst_nce = 0;
  for (int trial = 0; trial < kInstances; ++trial) {
    const Eigen::Index dim = 2 + static_cast<Eigen::Index>(rng() % 7);
    const Vector a = random_unit(rng, dim);
    const Vector p = random_unit(rng, dim);
    std::vector<Vector> negatives;
    std::vector<std::vector<double>> raw_negatives;
    for (std::size_t i = 0, n = 1 + rng() % 5; i < n; ++i) {
      negatives.push_back(random_unit(rng, dim));
      raw_negatives.push_back(to_std(negatives.back()));
    }
    const double tau = 0.05 + 0.95 * std::uniform_real_distribution<double>()(rng);
    for (bool include : {true, false}) {
      const double diff = std::abs(infonce_loss(a, p, negatives, tau, include) -
                                   oracle::infonce(to_std(a), to_std(p), raw_negatives, tau, include));
      worst_nce = std::max(worst_nce, diff);
    }
  }
  c.expect(worst_nce <= 1e-9, "infonce_loss deviates by " + std::to_string(worst_nce));

  double worst_pass = 0;
  for (int trial = 0; trial < kInstances; ++trial) {
    std::vector<std::vector<bool>> rows(1 + rng() % 12);
    VerdictMatrix m;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      rows[i].resize(6);
      for (std::size_t j = 0; j < 6; ++j) rows[i][j] = rng() % 3 == 0;
      m.rows["t" + std::to_string(i)] = rows[i];
    }
    for (std::size_t k = 1; k <= 6; ++k) {
      worst_pass = std::max(worst_pass, std::abs(pass_at_k(m, k) - oracle::pass_at(rows, k)));
    }
  }
  c.expect(worst_pass <= 1e-9, "pass_at_k deviates by " + std::to_string(worst_pass));
  c.note(std::to_string(kInstances) + " instances per formula");
}

// ---------------------------------------------------------------------------
// 2. Gradient check

void gradient_check(Checks& c) {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> normal;
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    ProjectionHead head = ProjectionHead::random(8, 4, rng());
    for (Eigen::Index i = 0; i < head.bias.size(); ++i) head.bias[i] = 0.1 * normal(rng);
    auto raw = [&] {
      Vector v(8);
      for (Eigen::Index i = 0; i < 8; ++i) v[i] = normal(rng);
      return v;
    };
    const Vector a = raw();
    const Vector p = raw();
    const std::vector<Vector> negatives = {raw(), raw(), raw()};
    const double tau = trial % 2 == 0 ? 0.07 : 0.5;
    const HeadGradient analytic = infonce_grad(head, a, p, negatives, tau);
    const HeadGradient numeric = oracle::finite_difference(
        head, [&](const Matrix& w, const Vector& b) { return oracle::head_loss(w, b, a, p, negatives, tau); },
        1e-6);
    worst = std::max(worst, oracle::relative_error(analytic, numeric));
  }
  c.expect(worst < 1e-4, "relative error " + std::to_string(worst));
  c.note("50 instances, worst relative error " + fixed(worst * 1e6, 3) + "e-6");
}

// ---------------------------------------------------------------------------
// 3. Labeling correctness

void labeling_correctness(Checks& c) {
  SyntheticSpec spec;
  spec.clusters = 8;
  spec.train_size = 64;
  spec.test_size = 0;
  spec.code_noise_operations = 2;
  const auto pool = make_synthetic_corpus(spec).dataset.train;
  const ExampleLookup lookup(pool);
  const MockScorer scorer;
  const LabelingConfig config;
  const auto report = build_labeled_dataset(pool, config, {&scorer, nullptr});
  c.expect(report.anchors.size() == pool.size(), "not every anchor was labeled");

  std::vector<std::vector<std::string>> docs;
  for (const auto& e : pool) docs.push_back(oracle::words(e.requirement));
  for (std::size_t i = 0; i < report.anchors.size(); ++i) {
    const auto& anchor = report.anchors[i];
    const Example& self = lookup.at(anchor.anchor_id);
    std::vector<std::pair<double, std::string>> lexical;
    for (std::size_t d = 0; d < pool.size(); ++d) {
      if (pool[d].id == self.id) continue;
      lexical.push_back({-oracle::bm25(docs, oracle::words(self.requirement), d), pool[d].id});
    }
    std::sort(lexical.begin(), lexical.end());
    std::vector<std::string> stage_one;
    for (std::size_t k = 0; k < std::min(config.t, lexical.size()); ++k) stage_one.push_back(lexical[k].second);
    std::vector<std::string> got_stage_one = anchor.stage_one_ids;
    std::sort(got_stage_one.begin(), got_stage_one.end());
    std::sort(stage_one.begin(), stage_one.end());
    c.expect(got_stage_one == stage_one, anchor.anchor_id + ": stage-one set differs from brute force");

    std::vector<std::pair<double, std::string>> by_code;
    for (const auto& id : anchor.stage_one_ids) {
      by_code.push_back({-oracle::jaccard(lookup.at(id).code, self.code), id});
    }
    std::sort(by_code.begin(), by_code.end());
    std::vector<std::string> expected;
    for (std::size_t k = 0; k < config.z; ++k) expected.push_back(by_code[k].second);
    std::vector<std::string> positives;
    for (const auto& p : anchor.positives) positives.push_back(p.candidate_id);
    c.expect(positives == expected, anchor.anchor_id + ": positives differ from brute force");
  }
  c.note(std::to_string(report.anchors.size()) + " anchors checked");
}

// ---------------------------------------------------------------------------
// 4. Learning works

void learning_works(Checks& c) {
  SyntheticSpec spec;
  spec.clusters = 10;
  spec.train_size = 200;
  spec.test_size = 50;
  spec.code_noise_operations = 2;
  spec.seed = 44;
  const auto corpus = make_synthetic_corpus(spec);
  const auto& pool = corpus.dataset.train;
  const auto& queries = corpus.dataset.test;

  const MockScorer scorer;
  const auto labels = build_labeled_dataset(pool, LabelingConfig{}, {&scorer, nullptr}).anchors;
  const HashEmbedder embedder;
  TrainConfig config;  // 64 negatives, one hard negative, batch 32, lr 5e-5
  config.epochs = 200;
  config.seed = 2024;
  const auto checkpoint = train_retriever(labels, pool, embedder, config);
  const double first = checkpoint.epoch_losses.front();
  const double last = checkpoint.epoch_losses.back();
  c.expect(last < 0.5 * first, "loss " + fixed(first) + " -> " + fixed(last) + " is not below half");

  const auto index = build_embedding_index(pool, embedder, checkpoint);
  const auto raw_index = build_raw_index(pool, embedder);
  const ExampleLookup lookup(pool);
  const auto oracle_positive = [&](const Example& query, const std::string& id) {
    return oracle::jaccard(lookup.at(id).code, query.code) >= 0.5;
  };
  const auto precision = [&](const std::vector<RankedId>& shots, const Example& query) {
    double hits = 0;
    for (const auto& s : shots) hits += oracle_positive(query, s.id) ? 1 : 0;
    return hits / static_cast<double>(shots.size());
  };
  double p_lail = 0;
  double p_random = 0;
  double p_embed = 0;
  for (const auto& q : queries) {
    p_lail += precision(retrieve(index, q.requirement, 5, checkpoint, embedder), q);
    SelectionContext context;
    context.seed = 99;
    context.random_key = q.id;
    context.raw_index = &raw_index;
    context.embedder = &embedder;
    p_random += precision(select_baseline(Strategy::random, pool, q.requirement, 5, context), q);
    p_embed += precision(select_baseline(Strategy::embed_topk, pool, q.requirement, 5, context), q);
  }
  const double n = static_cast<double>(queries.size());
  p_lail /= n;
  p_random /= n;
  p_embed /= n;
  c.expect(p_lail >= p_random + 0.20, "precision@5 margin over random below 20pp");
  c.expect(p_lail >= p_embed + 0.20, "precision@5 margin over embed_topk below 20pp");
  c.note("loss " + fixed(first) + " -> " + fixed(last) + " over " + std::to_string(config.epochs) +
         " epochs; precision@5 lail " + fixed(p_lail, 3) + ", random " + fixed(p_random, 3) +
         ", embed_topk " + fixed(p_embed, 3));
}

// ---------------------------------------------------------------------------
// 5-7. CLI workflows over mock providers

struct Pipeline {
  fs::path config;
  fs::path test_split;
};

CommandResult lail_run(const Pipeline& p, std::vector<std::string> args) {
  args.insert(args.begin() + 1, {"--config", p.config.string()});
  return lail::testing::run_lail(std::move(args));
}

/// Runs `command` (eval or transfer-eval), supplies exact-match verdicts for
/// every samples file it leaves behind, and runs it again.
CommandResult eval_with_verdicts(const Pipeline& p, const fs::path& out, const fs::path& tests_file,
                                 std::vector<std::string> args, Checks& c) {
  const auto first = lail_run(p, args);
  if (first.code != kExitMissingArtifact) return first;
  const auto tests = read_examples(tests_file);
  const ExampleLookup lookup(tests);
  for (const auto& entry : fs::directory_iterator(out)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("samples_", 0) != 0) continue;
    const std::string strategy = name.substr(8, name.size() - 8 - 6);
    const auto samples = read_samples(entry.path());
    write_verdicts(out / ("verdicts_" + strategy + ".jsonl"), exact_match_verdicts(samples, lookup));
  }
  const auto second = lail_run(p, args);
  c.expect(second.code == kExitOk, args[0] + " failed after verdicts: " + second.err);
  return second;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) {
      files[fs::relative(entry.path(), dir).string()] = lail::testing::read_text(entry.path());
    }
  }
  return files;
}

SyntheticSpec corpus_a() {
  SyntheticSpec spec;
  spec.name = "corpus-a";
  spec.clusters = 10;
  spec.train_size = 200;
  spec.test_size = 50;
  spec.code_noise_operations = 0;
  spec.seed = 5;
  return spec;
}

const char* kPipelineExtra =
    "  \"train\": {\"epochs\": 200},\n"
    "  \"eval\": {\"k\": [1, 3, 5], \"generation\": {\"n_samples\": 5}}";

struct SharedRun {
  SharedRun() {
    corpus_root = lail::testing::write_corpus(dir.path(), corpus_a());
    pipeline.config = lail::testing::write_config(dir / "config.json", corpus_root, kPipelineExtra);
    pipeline.test_split = corpus_root / "test.jsonl";
  }
  TempDir dir{"lail-accept"};
  fs::path corpus_root;
  Pipeline pipeline;
};

SharedRun& shared() {
  static SharedRun run;
  return run;
}

fs::path full_run(const std::string& name, Checks& c) {
  auto& s = shared();
  const fs::path out = s.dir / name;
  const std::vector<std::string> extra = {"--output-dir", out.string()};
  for (std::string stage : {"label", "train", "index", "retrieve"}) {
    std::vector<std::string> args = {stage};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto result = lail_run(s.pipeline, args);
    c.expect(result.code == kExitOk, stage + " failed: " + result.err);
  }
  std::vector<std::string> eval = {"eval"};
  eval.insert(eval.end(), extra.begin(), extra.end());
  eval_with_verdicts(s.pipeline, out, s.pipeline.test_split, eval, c);
  std::vector<std::string> report = {"report"};
  report.insert(report.end(), extra.begin(), extra.end());
  c.expect(lail_run(s.pipeline, report).code == kExitOk, "report failed");
  return out;
}

void end_to_end(Checks& c) {
  const fs::path first = full_run("run-1", c);
  const fs::path second = full_run("run-2", c);
  if (!c.ok()) return;
  const auto lail = report_from_json(lail::testing::read_text(first / "report_lail.json"));
  const auto random = report_from_json(lail::testing::read_text(first / "report_random.json"));
  c.expect(lail.pass_at.at(1) > random.pass_at.at(1), "Pass@1 lail " + fixed(lail.pass_at.at(1)) +
                                                          " is not above random " + fixed(random.pass_at.at(1)));
  const auto a = snapshot(first);
  const auto b = snapshot(second);
  c.expect(a.size() == b.size(), "runs produced different file sets");
  std::size_t identical = 0;
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    const bool same = it != b.end() && it->second == bytes;
    c.expect(same, name + " differs between runs");
    identical += same ? 1 : 0;
  }
  c.note("Pass@1 lail " + fixed(lail.pass_at.at(1)) + " vs random " + fixed(random.pass_at.at(1)) + "; " +
         std::to_string(identical) + "/" + std::to_string(a.size()) + " files identical");
}

void sweeps(Checks& c) {
  auto& s = shared();
  std::vector<EvalReport> reports;
  std::size_t finite_epochs = 0;
  for (std::size_t negatives : {32, 64, 128}) {
    for (std::size_t hard : {1, 5, 10}) {
      const std::string tag = "neg" + std::to_string(negatives) + "_ne" + std::to_string(hard);
      const fs::path out = s.dir / ("sweep-" + tag);
      const std::vector<std::string> common = {
          "--output-dir", out.string(),
          "--set", "train.negatives_total=" + std::to_string(negatives),
          "--set", "train.tau_ne=" + std::to_string(hard),
          "--set", "train.epochs=20",
          "--set", "label.v=" + std::to_string(std::max<std::size_t>(5, hard)),
          "--set", "select.strategies=[\"lail\"]"};
      bool ok = true;
      for (std::string stage : {"label", "train", "index", "retrieve"}) {
        std::vector<std::string> args = {stage};
        args.insert(args.end(), common.begin(), common.end());
        const auto result = lail_run(s.pipeline, args);
        c.expect(result.code == kExitOk, tag + " " + stage + " failed: " + result.err);
        ok = ok && result.code == kExitOk;
      }
      if (!ok) continue;
      std::vector<std::string> eval = {"eval"};
      eval.insert(eval.end(), common.begin(), common.end());
      eval_with_verdicts(s.pipeline, out, s.pipeline.test_split, eval, c);
      const auto checkpoint = read_checkpoint(out / "checkpoint.json");
      for (double loss : checkpoint.epoch_losses) {
        c.expect(std::isfinite(loss), tag + ": non-finite loss");
        finite_epochs += std::isfinite(loss) ? 1 : 0;
      }
      if (!fs::exists(out / "report_lail.json")) {
        c.expect(false, tag + ": no report");
        continue;
      }
      EvalReport report = report_from_json(lail::testing::read_text(out / "report_lail.json"));
      report.strategy = tag;
      reports.push_back(std::move(report));
    }
  }
  c.expect(reports.size() == 9, "expected 9 sweep reports, got " + std::to_string(reports.size()));
  if (reports.empty()) return;
  const auto doc = compare_report(reports, reports.front().strategy);
  for (const auto& w : doc.warnings) c.expect(w.find("differs") == std::string::npos, w);
  c.note(std::to_string(reports.size()) + " configurations, " + std::to_string(finite_epochs) +
         " finite epoch losses");
}

void transfer(Checks& c) {
  auto& s = shared();
  const fs::path source = s.dir / "run-1";
  const fs::path checkpoint = source / "checkpoint.json";
  if (!fs::exists(checkpoint)) {
    c.expect(false, "no checkpoint from corpus A");
    return;
  }
  const std::string before = lail::testing::read_text(checkpoint);

  SyntheticSpec spec = corpus_a();
  spec.name = "corpus-b";
  spec.vocabulary_tag = "b";
  spec.id_prefix = "b-";
  spec.train_size = 120;
  spec.test_size = 30;
  spec.seed = 77;
  const fs::path root_b = lail::testing::write_corpus(s.dir.path(), spec);
  const fs::path out = s.dir / "transfer";
  const std::vector<std::string> args = {"transfer-eval", "--checkpoint", checkpoint.string(),
                                         "--dataset",     root_b.string(),     "--output-dir",
                                         out.string(),    "--set",             "select.strategies=[\"lail\"]"};
  eval_with_verdicts(s.pipeline, out, root_b / "test.jsonl", args, c);
  c.expect(lail::testing::read_text(checkpoint) == before, "checkpoint was modified");
  c.expect(!fs::exists(out / "labels.jsonl") && !fs::exists(out / "checkpoint.json"),
           "transfer run trained a retriever");
  if (!fs::exists(out / "report_lail.json")) {
    c.expect(false, "no report on corpus B");
    return;
  }
  const auto report = report_from_json(lail::testing::read_text(out / "report_lail.json"));
  c.expect(report.n_test == 30 && report.test_ids.size() == 30, "report does not cover corpus B");
  c.expect(report.pass_at.size() == 3, "report lacks Pass@k entries");
  for (const auto& [k, v] : report.pass_at) c.expect(v >= 0 && v <= 1, "Pass@k out of range");
  const auto selections = read_selections(out / "selections_lail.jsonl");
  bool from_b = !selections.empty();
  for (const auto& sel : selections) {
    for (const auto& shot : sel.shots) from_b = from_b && shot.id.rfind("b-", 0) == 0;
  }
  c.expect(from_b, "shots were not drawn from corpus B");
  c.note("Pass@1 on corpus B " + fixed(report.pass_at.at(1)));
}

// ---------------------------------------------------------------------------
// 8. Pass@k properties

void pass_at_k_properties(Checks& c) {
  VerdictMatrix fixed_matrix;
  fixed_matrix.rows = {{"a", {true, false}}, {"b", {false, true}}, {"c", {false, false}}, {"d", {true, true}}};
  c.expect(pass_at_k(fixed_matrix, 1) == 0.5, "Pass@1 of the fixed matrix is not 0.5");
  c.expect(pass_at_k(fixed_matrix, 2) == 0.75, "Pass@2 of the fixed matrix is not 0.75");
  std::mt19937_64 rng(808);
  for (int trial = 0; trial < 200; ++trial) {
    VerdictMatrix m;
    const std::size_t n = 1 + rng() % 10;
    for (std::size_t i = 0; i < 1 + rng() % 20; ++i) {
      std::vector<bool> row(n);
      for (std::size_t j = 0; j < n; ++j) row[j] = rng() % 5 == 0;
      m.rows["t" + std::to_string(i)] = row;
    }
    double previous = 0;
    for (std::size_t k = 1; k <= n; ++k) {
      const double value = pass_at_k(m, k);
      c.expect(value >= 0 && value <= 1, "Pass@k outside [0,1]");
      c.expect(value >= previous, "Pass@k not monotone in k");
      previous = value;
    }
  }
  c.note("fixed matrix 0.50/0.75; 200 random matrices");
}

// ---------------------------------------------------------------------------
// 9. Wire protocol

template <typename E, typename F>
bool throws(F&& f) {
  try {
    f();
  } catch (const E&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

void wire_protocol(Checks& c) {
  using lail::testing::StubServer;
  std::string mode = "ok";
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body);
    json reply;
    if (req.path == "/v1/embeddings") {
      json data = json::array();
      const std::size_t n = body.at("input").is_array() ? body.at("input").size() : 1;
      for (std::size_t i = 0; i < n; ++i) data.push_back({{"index", i}, {"embedding", {1.0, double(i), 0.5}}});
      reply = {{"data", data}};
    } else if (body.value("echo", false)) {
      const std::string prompt = body.at("prompt");
      if (mode == "no-logprobs") {
        reply = {{"choices", {{{"text", prompt}, {"logprobs", nullptr}}}}};
      } else if (mode == "truncated") {
        reply = {{"choices", {{{"text", prompt.substr(0, 3)},
                               {"logprobs", {{"token_logprobs", {nullptr, -0.1}}, {"text_offset", {0, 2}}}}}}}};
      } else if (mode == "garbage") {
        res.set_content("{\"choices\": 5}", "application/json");
        return;
      } else {
        // Prompt "def f" + continuation "(): ok": tokens at offsets 0, 3, 5, 8.
        reply = {{"choices",
                  {{{"text", prompt},
                    {"logprobs", {{"token_logprobs", {nullptr, -0.5, -0.25, -0.75}}, {"text_offset", {0, 3, 5, 8}}}}}}}};
      }
    } else {
      json choices = json::array();
      for (int i = body.at("n").get<int>() - 1; i >= 0; --i) {
        choices.push_back({{"index", i}, {"text", "completion " + std::to_string(i)}});
      }
      if (mode == "short") choices.erase(choices.begin());
      reply = {{"choices", choices}};
    }
    res.set_content(reply.dump(), "application/json");
  });

  ProviderConfig config;
  config.kind = ProviderKind::http;
  config.endpoint = server.url();
  config.model_name = "stub";
  config.retry.max_attempts = 1;
  HttpProvider provider(config);

  const auto score = provider.score_continuation("def f", "(): ok");
  c.expect(score.token_logprobs == std::vector<double>{-0.25, -0.75}, "continuation span is wrong");
  GenerationParams params;
  params.n_samples = 4;
  const auto completions = provider.generate("prompt", params);
  c.expect(completions.size() == 4 && completions[0] == "completion 0" && completions[3] == "completion 3",
           "generate did not return n ordered completions");
  const std::vector<std::string> texts = {"x", "y"};
  const auto vectors = provider.embed_batch(texts);
  c.expect(vectors.size() == 2 && vectors[1][1] == 1.0 && provider.dimension() == 3, "embeddings misread");

  mode = "no-logprobs";
  c.expect(throws<CapabilityError>([&] { provider.score_continuation("def f", "(): ok"); }),
           "missing logprobs not reported as a capability error");
  mode = "truncated";
  c.expect(throws<TruncationError>([&] { provider.score_continuation("def f", "(): ok"); }),
           "truncated echo not reported as a truncation error");
  mode = "garbage";
  c.expect(throws<ProtocolError>([&] { provider.score_continuation("def f", "(): ok"); }),
           "malformed body not reported as a protocol error");
  mode = "short";
  c.expect(throws<ProtocolError>([&] { provider.generate("prompt", params); }),
           "wrong completion count not reported as a protocol error");
  c.note("span, n completions, embeddings and 4 malformed shapes");
}

struct Criterion {
  int number;
  std::string name;
  double budget_seconds;
  std::function<void(Checks&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "formula oracles", 10, formula_oracles},
      {2, "gradient check", 30, gradient_check},
      {3, "labeling correctness", 10, labeling_correctness},
      {4, "retriever learns", 300, learning_works},
      {5, "end-to-end mock pipeline", 600, end_to_end},
      {6, "hyperparameter sweeps", 600, sweeps},
      {7, "transfer evaluation", 600, transfer},
      {8, "Pass@k properties", 10, pass_at_k_properties},
      {9, "wire protocol", 30, wire_protocol},
  };
  int failed = 0;
  for (const auto& criterion : criteria) {
    Checks checks;
    const auto start = std::chrono::steady_clock::now();
    try {
      criterion.run(checks);
    } catch (const std::exception& e) {
      checks.expect(false, std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    checks.expect(seconds < criterion.budget_seconds, "took " + fixed(seconds, 1) + " s");
    const bool ok = checks.ok();
    failed += ok ? 0 : 1;
    std::cout << (ok ? "PASS" : "FAIL") << " " << criterion.number << " " << criterion.name << " ("
              << fixed(seconds, 2) << " s): " << checks.summary() << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
  return failed == 0 ? 0 : 1;
}
