#include "lail/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "config_json.hpp"
#include "json_io.hpp"
#include "lail/error.hpp"
#include "lail/lexical.hpp"
#include "lail/log.hpp"
#include "lail/random.hpp"
#include "lail/version.hpp"

namespace lail {

using detail::Json;
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kDefaultSplits[] = {"train", "dev", "test"};

std::string hash_text(std::string_view text) { return hex64(fnv1a64(text)); }
std::string hash_json(const Json& value) { return hash_text(value.dump()); }
std::string hash_file(const fs::path& path) { return hash_text(detail::read_file(path)); }

std::string hash_examples(std::span<const Example> examples) {
  std::string text;
  for (const Example& example : examples) {
    text += example_to_json_line(example);
    text += '\n';
  }
  return hash_text(text);
}

/// Only the fields that change what a provider returns.
Json provider_identity(const ProviderConfig& config) {
  Json out = {{"kind", std::string(to_string(config.kind))}};
  switch (config.kind) {
    case ProviderKind::http:
      out["endpoint"] = config.endpoint;
      out["model_name"] = config.model_name;
      break;
    case ProviderKind::mock_scorer:
      out["epsilon"] = config.epsilon;
      break;
    case ProviderKind::hash_embedder:
      out["dimension"] = config.dimension;
      break;
    case ProviderKind::mock_generator:
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

void apply_override(Json& document, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override \"" + std::string(assignment) + "\" is not key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  Json value = Json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;

  Json* node = &document;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw ConfigError("override key \"" + key + "\" has an empty component");
    if (!node->is_object()) throw ConfigError("override key \"" + key + "\" crosses a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

const Json& section_or_empty(const Json& document, std::string_view key) {
  static const Json kEmpty = Json::object();
  auto it = document.find(key);
  if (it == document.end()) return kEmpty;
  if (!it->is_object()) throw ConfigError(std::string(key) + " must be a JSON object");
  return *it;
}

template <typename T>
T get_or(const Json& object, std::string_view key, T fallback, std::string_view section) {
  auto it = object.find(key);
  if (it == object.end()) return fallback;
  if constexpr (std::is_unsigned_v<T>) {
    if (it->is_number_integer() && !it->is_number_unsigned()) {
      throw ConfigError(std::string(section) + "." + std::string(key) + " must not be negative");
    }
  }
  try {
    return it->get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string(section) + "." + std::string(key) + " has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const fs::path& path) {
  return path.is_absolute() ? path : base / path;
}

/// Split files found under `root` with the conventional <split>.jsonl names.
std::map<std::string, fs::path> default_splits(const fs::path& root) {
  std::map<std::string, fs::path> splits;
  for (std::string_view split : kDefaultSplits) {
    const fs::path file = std::string(split) + ".jsonl";
    if (split != "dev" || fs::exists(root / file)) splits[std::string(split)] = file;
  }
  return splits;
}

DatasetSource parse_dataset(const Json& object, const fs::path& base_dir) {
  constexpr std::string_view kSection = "dataset";
  detail::reject_unknown_keys(object, {"name", "language", "root", "splits"}, kSection);
  DatasetSource source;
  const auto root = get_or<std::string>(object, "root", "", kSection);
  if (root.empty()) throw ConfigError("dataset.root is required");
  source.root = resolve(base_dir, root);
  source.name = get_or<std::string>(object, "name", source.root.filename().string(), kSection);
  source.language_tag = get_or<std::string>(object, "language", "python", kSection);
  if (auto it = object.find("splits"); it != object.end()) {
    if (!it->is_object()) throw ConfigError("dataset.splits must map split names to files");
    for (const auto& [split, file] : it->items()) {
      if (std::find(std::begin(kDefaultSplits), std::end(kDefaultSplits), split) ==
          std::end(kDefaultSplits)) {
        throw ConfigError("unknown split \"" + split + "\" (expected train, dev or test)");
      }
      if (!file.is_string()) throw ConfigError("dataset.splits." + split + " must be a path");
      source.splits[split] = file.get<std::string>();
    }
  } else {
    source.splits = default_splits(source.root);
  }
  if (source.splits.count("train") == 0) throw ConfigError("dataset.splits needs a train file");
  return source;
}

ProviderConfig parse_provider(const Json& providers, std::string_view role, ProviderKind fallback) {
  auto it = providers.find(role);
  if (it == providers.end()) {
    ProviderConfig config;
    config.kind = fallback;
    return config;
  }
  return detail::provider_config_from_json(*it);
}

VerdictConfig parse_verdicts(const Json& object) {
  constexpr std::string_view kSection = "eval.verdicts";
  detail::reject_unknown_keys(
      object, {"provider", "path", "command", "timeout_s", "max_processes", "file_suffix"}, kSection);
  VerdictConfig config;
  const auto provider = get_or<std::string>(object, "provider", "external_file", kSection);
  if (provider == "external_file") {
    config.provider = VerdictProvider::external_file;
  } else if (provider == "subprocess_runner") {
    config.provider = VerdictProvider::subprocess_runner;
  } else {
    throw ConfigError("eval.verdicts.provider must be external_file or subprocess_runner");
  }
  config.path = get_or<std::string>(object, "path", config.path, kSection);
  config.runner.command = get_or(object, "command", config.runner.command, kSection);
  const double timeout_s =
      get_or<double>(object, "timeout_s",
                     std::chrono::duration<double>(config.runner.timeout).count(), kSection);
  if (!(timeout_s > 0)) throw ConfigError("eval.verdicts.timeout_s must be positive");
  config.runner.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0));
  config.runner.max_processes =
      get_or<std::size_t>(object, "max_processes", config.runner.max_processes, kSection);
  config.runner.file_suffix = get_or(object, "file_suffix", config.runner.file_suffix, kSection);
  return config;
}

}  // namespace

void PipelineConfig::validate() const {
  if (dataset.root.empty()) throw ConfigError("dataset.root is required");
  if (r < 1 || r > 16) throw ConfigError("select.r must be between 1 and 16");
  if (strategies.empty()) throw ConfigError("select.strategies is empty");
  if (ks.empty()) throw ConfigError("eval.k is empty");
  try {
    generation.validate();
    scorer.validate();
    generator.validate();
    embedder.validate();
    train.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  for (std::size_t k : ks) {
    if (k < 1 || k > static_cast<std::size_t>(generation.n_samples)) {
      throw ConfigError("eval.k value " + std::to_string(k) + " is outside 1..n_samples (" +
                        std::to_string(generation.n_samples) + ")");
    }
  }
  if (label.z < 1 || label.v < 1 || label.t < label.z + label.v) {
    throw ConfigError("label: need z, v >= 1 and t >= z + v");
  }
  if (train.tau_ne > label.v) {
    throw ConfigError("train.tau_ne (" + std::to_string(train.tau_ne) +
                      ") exceeds label.v (" + std::to_string(label.v) + ")");
  }
  if (verdicts.provider == VerdictProvider::subprocess_runner &&
      (verdicts.runner.command.empty() || verdicts.runner.max_processes < 1)) {
    throw ConfigError("eval.verdicts needs a command and max_processes >= 1");
  }
}

PipelineConfig parse_pipeline_config(std::string_view json_text, const fs::path& base_dir,
                                     std::span<const std::string> overrides) {
  Json document = Json::parse(json_text, nullptr, /*allow_exceptions=*/false);
  if (document.is_discarded() || !document.is_object()) {
    throw ConfigError("configuration is not a JSON object");
  }
  for (const std::string& assignment : overrides) apply_override(document, assignment);
  detail::reject_unknown_keys(
      document, {"seed", "output_dir", "dataset", "providers", "label", "train", "select", "eval"},
      "configuration");

  PipelineConfig config;
  config.seed = get_or<std::uint64_t>(document, "seed", 0, "configuration");
  config.output_dir =
      resolve(base_dir, get_or<std::string>(document, "output_dir", "lail-out", "configuration"));

  auto dataset = document.find("dataset");
  if (dataset == document.end() || !dataset->is_object()) {
    throw ConfigError("configuration needs a dataset section");
  }
  config.dataset = parse_dataset(*dataset, base_dir);

  const Json& providers = section_or_empty(document, "providers");
  detail::reject_unknown_keys(providers, {"scorer", "generator", "embedder"}, "providers");
  config.scorer = parse_provider(providers, "scorer", ProviderKind::mock_scorer);
  config.generator = parse_provider(providers, "generator", ProviderKind::mock_generator);
  config.embedder = parse_provider(providers, "embedder", ProviderKind::hash_embedder);

  config.label = detail::labeling_config_from_json(section_or_empty(document, "label"));

  const Json& train = section_or_empty(document, "train");
  config.train = detail::train_config_from_json(train);
  if (!train.contains("seed")) config.train.seed = derive_seed(config.seed, "train");

  const Json& select = section_or_empty(document, "select");
  detail::reject_unknown_keys(select, {"r", "shot_order", "strategies"}, "select");
  config.r = get_or<std::size_t>(select, "r", config.r, "select");
  config.shot_order = shot_order_from_string(
      get_or<std::string>(select, "shot_order", std::string(to_string(config.shot_order)), "select"));
  if (select.contains("strategies")) {
    config.strategies.clear();
    for (const auto& name : get_or<std::vector<std::string>>(select, "strategies", {}, "select")) {
      const Strategy strategy = strategy_from_string(name);
      if (std::find(config.strategies.begin(), config.strategies.end(), strategy) ==
          config.strategies.end()) {
        config.strategies.push_back(strategy);
      }
    }
  }

  const Json& eval = section_or_empty(document, "eval");
  detail::reject_unknown_keys(eval, {"k", "generation", "verdicts", "baseline", "workers", "run"},
                              "eval");
  config.ks = get_or(eval, "k", config.ks, "eval");
  config.generation = detail::generation_params_from_json(section_or_empty(eval, "generation"));
  config.verdicts = parse_verdicts(section_or_empty(eval, "verdicts"));
  config.baseline = get_or(eval, "baseline", config.baseline, "eval");
  config.workers = get_or<std::size_t>(eval, "workers", 0, "eval");
  config.run = get_or<std::uint64_t>(eval, "run", 0, "eval");

  config.validate();
  return config;
}

PipelineConfig load_pipeline_config(const fs::path& path, std::span<const std::string> overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open configuration file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_pipeline_config(buffer.str(), path.parent_path(), overrides);
}

namespace artifact {
std::string selections(Strategy s) { return "selections_" + std::string(to_string(s)) + ".jsonl"; }
std::string samples(Strategy s) { return "samples_" + std::string(to_string(s)) + ".jsonl"; }
std::string verdicts(Strategy s) { return "verdicts_" + std::string(to_string(s)) + ".jsonl"; }
std::string report(Strategy s) { return "report_" + std::string(to_string(s)) + ".json"; }
}  // namespace artifact

void write_index(const fs::path& path, const EmbeddingIndex& index, const Provenance& provenance) {
  std::string content = detail::dump_line(
      {{std::string(detail::kMetaKey),
        {{"artifact", "embedding_index"},
         {"checkpoint_fingerprint", index.checkpoint_fingerprint},
         {"config_hash", provenance.config_hash},
         {"tool_version", provenance.tool_version}}}});
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto row = index.vectors.row(static_cast<Eigen::Index>(i));
    content += detail::dump_line(
        {{"id", index.ids[i]}, {"vector", std::vector<double>(row.begin(), row.end())}});
  }
  detail::write_file_atomic(path, content);
}

EmbeddingIndex read_index(const fs::path& path) {
  const auto meta = detail::read_jsonl_meta(path);
  if (!meta) throw DataError(path.string() + ": missing index header");
  EmbeddingIndex index;
  index.checkpoint_fingerprint = meta->value("checkpoint_fingerprint", "");
  std::vector<std::vector<double>> rows;
  const std::string source = path.string();
  detail::for_each_jsonl(path, [&](const Json& object, std::size_t line_no) {
    index.ids.push_back(detail::require_string(object, "id", source, line_no));
    const Json& vector = detail::require_field(object, "vector", source, line_no);
    if (!vector.is_array()) {
      throw DataError(detail::describe_location(source, line_no) + ": vector must be an array");
    }
    rows.push_back(vector.get<std::vector<double>>());
    if (rows.back().size() != rows.front().size()) {
      throw DataError(detail::describe_location(source, line_no) + ": inconsistent dimension");
    }
  });
  const Eigen::Index d = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
  index.vectors.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Vector row = Eigen::Map<const Vector>(rows[i].data(), d);
    index.vectors.row(static_cast<Eigen::Index>(i)) = row.transpose();
    index.zero_rows.push_back(row.squaredNorm() == 0.0);
  }
  return index;
}

namespace {

// ---------------------------------------------------------------------------
// Stage manifest

class Manifest {
 public:
  explicit Manifest(fs::path path) : path_(std::move(path)) {
    if (!fs::exists(path_)) return;
    const Json document = Json::parse(detail::read_file(path_), nullptr, false);
    if (document.is_object() && document.contains("stages") && document["stages"].is_object()) {
      stages_ = document["stages"];
    }
  }

  bool fresh(const std::string& stage, const std::string& hash,
             std::initializer_list<fs::path> outputs) const {
    auto it = stages_.find(stage);
    if (it == stages_.end() || !it->is_string() || it->get<std::string>() != hash) return false;
    return std::all_of(outputs.begin(), outputs.end(), [](const fs::path& p) { return fs::exists(p); });
  }

  void record(const std::string& stage, const std::string& hash) {
    stages_[stage] = hash;
    Json document = {{"tool_version", std::string(kToolVersion)}, {"stages", stages_}};
    detail::write_file_atomic(path_, document.dump(2) + "\n");
  }

 private:
  fs::path path_;
  Json stages_ = Json::object();
};

// ---------------------------------------------------------------------------
// Session: configuration plus lazily built shared resources

struct CommandOptions {
  bool use_cache = true;
  bool force = false;
  std::optional<fs::path> checkpoint;
};

class Session {
 public:
  Session(PipelineConfig config, CommandOptions options, std::ostream& out, std::ostream& err)
      : config_(std::move(config)),
        options_(std::move(options)),
        out_(out),
        err_(err),
        manifest_((fs::create_directories(config_.output_dir), config_.output_dir / kManifestName)) {}

  const PipelineConfig& config() const { return config_; }
  std::ostream& out() { return out_; }
  std::ostream& err() { return err_; }
  bool force() const { return options_.force; }

  fs::path file(std::string_view name) const { return config_.output_dir / fs::path(name); }

  fs::path checkpoint_path() const {
    return options_.checkpoint ? *options_.checkpoint : file(artifact::kCheckpoint);
  }

  Provenance provenance(std::string hash) const { return {std::move(hash), std::string(kToolVersion)}; }

  bool cached(const std::string& stage, const std::string& hash,
              std::initializer_list<fs::path> outputs) {
    if (!options_.use_cache || !manifest_.fresh(stage, hash, outputs)) return false;
    out_ << stage << ": cached (" << hash << ")\n";
    return true;
  }

  void record(const std::string& stage, const std::string& hash) { manifest_.record(stage, hash); }

  const Dataset& dataset() {
    if (!dataset_) dataset_ = load_dataset(config_.dataset);
    return *dataset_;
  }

  std::span<const Example> pool() {
    const auto& train = dataset().train;
    if (train.empty()) throw ConfigError("dataset " + config_.dataset.name + " has no train examples");
    return train;
  }

  std::span<const Example> testset() {
    const auto& test = dataset().test;
    if (test.empty()) throw ConfigError("dataset " + config_.dataset.name + " has no test examples");
    return test;
  }

  const std::string& pool_hash() {
    if (pool_hash_.empty()) pool_hash_ = hash_examples(pool());
    return pool_hash_;
  }

  const std::string& test_hash() {
    if (test_hash_.empty()) test_hash_ = hash_examples(testset());
    return test_hash_;
  }

  const Scorer& scorer() {
    if (!scorer_) scorer_ = make_scorer(config_.scorer);
    return *scorer_;
  }

  const Generator& generator() {
    if (!generator_) generator_ = make_generator(config_.generator);
    return *generator_;
  }

  const Embedder& embedder() {
    if (!embedder_) embedder_ = make_embedder(config_.embedder);
    return *embedder_;
  }

  /// Pool embedding cache; keyed by embedder and pool contents so a different
  /// corpus in the same output directory never reuses stale vectors.
  EmbeddingCache& embedding_cache() {
    if (!cache_) {
      cache_ = std::make_unique<EmbeddingCache>(EmbeddingCache::load(
          file(artifact::kEmbeddings), embedder().fingerprint() + "@pool:" + pool_hash()));
    }
    return *cache_;
  }

  void save_embedding_cache(const std::string& hash) {
    if (!cache_) return;
    cache_->set_provenance(provenance(hash));
    cache_->save();
  }

  RetrieverCheckpoint& checkpoint() {
    if (!checkpoint_) {
      const fs::path path = checkpoint_path();
      if (!fs::exists(path)) {
        throw ArtifactMissingError("checkpoint " + path.string() + " not found; run `lail train` first");
      }
      checkpoint_ = read_checkpoint(path);
      check_embedder_fingerprint(*checkpoint_, embedder(), options_.force);
    }
    return *checkpoint_;
  }

 private:
  static constexpr std::string_view kManifestName = artifact::kManifest;

  PipelineConfig config_;
  CommandOptions options_;
  std::ostream& out_;
  std::ostream& err_;
  Manifest manifest_;
  std::optional<Dataset> dataset_;
  std::string pool_hash_;
  std::string test_hash_;
  std::shared_ptr<Scorer> scorer_;
  std::shared_ptr<Generator> generator_;
  std::shared_ptr<Embedder> embedder_;
  std::unique_ptr<EmbeddingCache> cache_;
  std::optional<RetrieverCheckpoint> checkpoint_;
};

void require_artifact(const fs::path& path, std::string_view producer) {
  if (!fs::exists(path)) {
    throw ArtifactMissingError(path.string() + " not found; run `lail " + std::string(producer) +
                               "` first");
  }
}

// ---------------------------------------------------------------------------
// Stages

void stage_validate(Session& session) {
  const PipelineConfig& config = session.config();
  Dataset dataset;
  dataset.name = config.dataset.name;
  dataset.language_tag = config.dataset.language_tag;
  for (const auto& [split, file] : config.dataset.splits) {
    auto examples = read_examples(resolve(config.dataset.root, file));
    if (split == "train") dataset.train = std::move(examples);
    if (split == "dev") dataset.dev = std::move(examples);
    if (split == "test") dataset.test = std::move(examples);
  }
  const auto findings = validate_dataset(dataset);
  for (const Finding& f : findings) {
    session.err() << "finding: " << f.split << " " << f.id << ": " << f.message << "\n";
  }
  if (!findings.empty()) {
    throw DataError(std::to_string(findings.size()) + " dataset finding(s)");
  }
  if (dataset.train.empty()) throw ConfigError("dataset has no train examples");
  (void)make_scorer(config.scorer);
  (void)make_generator(config.generator);
  (void)make_embedder(config.embedder);
  session.out() << "dataset " << dataset.name << ": train " << dataset.train.size() << ", dev "
                << dataset.dev.size() << ", test " << dataset.test.size() << "\n"
                << "configuration ok\n";
}

void stage_label(Session& session) {
  const PipelineConfig& config = session.config();
  const bool by_probability = config.label.scorer_kind == ScorerKind::probability;
  Json label_config = detail::to_json(config.label);
  label_config.erase("workers");
  const std::string hash = hash_json(
      {{"stage", "label"},
       {"pool", session.pool_hash()},
       {"provider", provider_identity(by_probability ? config.scorer : config.generator)},
       {"label", label_config}});
  const fs::path labels = session.file(artifact::kLabels);
  if (session.cached("label", hash, {labels})) return;

  LabelingProviders providers;
  if (by_probability) {
    providers.scorer = &session.scorer();
  } else {
    providers.generator = &session.generator();
  }
  const LabelingReport report =
      build_labeled_dataset(session.pool(), config.label, providers,
                            LabelsFile{labels, hash, std::string(kToolVersion)});
  session.out() << "label: " << report.anchors.size() << " anchors labeled ("
                << report.resumed_anchors << " resumed, " << report.dropped_anchors.size()
                << " dropped), " << report.scorer_calls << " scorer calls -> " << labels.string()
                << "\n";
  if (!report.failures.empty()) {
    for (const auto& f : report.failures) {
      session.err() << "scoring failed: anchor " << f.anchor_id << ", candidate " << f.candidate_id
                    << ": " << f.message << "\n";
    }
    throw ProviderError(std::to_string(report.failures.size()) +
                        " candidate scoring(s) failed; rerun to resume");
  }
  session.record("label", hash);
}

void stage_train(Session& session) {
  const PipelineConfig& config = session.config();
  const fs::path labels_path = session.file(artifact::kLabels);
  require_artifact(labels_path, "label");
  const std::string hash = hash_json({{"stage", "train"},
                                      {"labels", hash_file(labels_path)},
                                      {"pool", session.pool_hash()},
                                      {"embedder", provider_identity(config.embedder)},
                                      {"train", detail::to_json(config.train)}});
  const fs::path checkpoint_path = session.file(artifact::kCheckpoint);
  if (session.cached("train", hash, {checkpoint_path})) return;

  const auto labels = read_labels(labels_path);
  if (labels.empty()) throw DataError(labels_path.string() + " holds no labeled anchors");
  RetrieverCheckpoint checkpoint = train_retriever(labels, session.pool(), session.embedder(),
                                                   config.train, &session.embedding_cache());
  session.save_embedding_cache(hash);
  checkpoint.source_dataset = config.dataset.name;
  checkpoint.source_scorer =
      (config.label.scorer_kind == ScorerKind::probability ? session.scorer().describe()
                                                           : session.generator().describe()) +
      "/" + std::string(to_string(config.label.scorer_kind));
  checkpoint.config_hash = hash;
  checkpoint.tool_version = std::string(kToolVersion);
  write_checkpoint(checkpoint_path, checkpoint);

  session.out() << "train: " << labels.size() << " anchors, " << config.train.epochs
                << " epochs, loss " << checkpoint.epoch_losses.front() << " -> "
                << checkpoint.epoch_losses.back() << " -> " << checkpoint_path.string() << "\n";
  session.record("train", hash);
}

std::string index_hash(Session& session) {
  return hash_json({{"stage", "index"},
                    {"checkpoint", session.checkpoint().fingerprint()},
                    {"pool", session.pool_hash()},
                    {"embedder", provider_identity(session.config().embedder)}});
}

void stage_index(Session& session) {
  const std::string hash = index_hash(session);
  const fs::path index_path = session.file(artifact::kIndex);
  if (session.cached("index", hash, {index_path})) return;
  const EmbeddingIndex index =
      build_embedding_index(session.pool(), session.embedder(), session.checkpoint(),
                            session.force(), &session.embedding_cache());
  session.save_embedding_cache(hash);
  write_index(index_path, index, session.provenance(hash));
  session.out() << "index: " << index.size() << " rows -> " << index_path.string() << "\n";
  session.record("index", hash);
}

class Selectors {
 public:
  explicit Selectors(Session& session) : session_(session) {}

  /// Everything a strategy's selections depend on.
  Json identity(Strategy strategy) {
    const PipelineConfig& config = session_.config();
    Json id = {{"stage", "retrieve"},
               {"strategy", std::string(to_string(strategy))},
               {"pool", session_.pool_hash()},
               {"test", session_.test_hash()},
               {"r", config.r}};
    switch (strategy) {
      case Strategy::random:
        id["seed"] = random_seed();
        break;
      case Strategy::bm25:
        id["bm25"] = {config.label.bm25.k1, config.label.bm25.b};
        break;
      case Strategy::embed_topk:
        id["embedder"] = provider_identity(config.embedder);
        break;
      case Strategy::uncertainty:
        id["scorer"] = provider_identity(config.scorer);
        break;
      case Strategy::lail: {
        const fs::path index_path = session_.file(artifact::kIndex);
        require_artifact(index_path, "index");
        id["index"] = hash_file(index_path);
        id["checkpoint"] = session_.checkpoint().fingerprint();
        id["embedder"] = provider_identity(config.embedder);
        break;
      }
    }
    return id;
  }

  std::vector<RankedId> select(Strategy strategy, const Example& test) {
    const std::size_t r = session_.config().r;
    if (strategy == Strategy::lail) {
      return retrieve(lail_index(), test.requirement, r, session_.checkpoint(), session_.embedder());
    }
    SelectionContext context;
    context.seed = random_seed();
    context.random_key = test.id;
    if (strategy == Strategy::bm25) context.bm25 = &bm25();
    if (strategy == Strategy::embed_topk) {
      context.raw_index = &raw_index();
      context.embedder = &session_.embedder();
    }
    if (strategy == Strategy::uncertainty) context.uncertainty = &uncertainty();
    return select_baseline(strategy, session_.pool(), test.requirement, r, context);
  }

 private:
  std::uint64_t random_seed() const { return derive_seed(session_.config().seed, "select.random"); }

  const Bm25Index& bm25() {
    if (!bm25_) {
      std::vector<std::string> ids;
      std::vector<std::string> texts;
      for (const Example& e : session_.pool()) {
        ids.push_back(e.id);
        texts.push_back(e.requirement);
      }
      bm25_.emplace(std::move(ids), texts, session_.config().label.bm25);
    }
    return *bm25_;
  }

  const EmbeddingIndex& raw_index() {
    if (!raw_index_) {
      raw_index_ = build_raw_index(session_.pool(), session_.embedder(), &session_.embedding_cache());
      session_.save_embedding_cache(hash_json(identity(Strategy::embed_topk)));
    }
    return *raw_index_;
  }

  const std::vector<RankedId>& uncertainty() {
    if (!uncertainty_) {
      uncertainty_ = uncertainty_ranking(session_.pool(), session_.scorer(), session_.config().r);
    }
    return *uncertainty_;
  }

  const EmbeddingIndex& lail_index() {
    if (!lail_index_) {
      lail_index_ = read_index(session_.file(artifact::kIndex));
      if (lail_index_->checkpoint_fingerprint != session_.checkpoint().fingerprint()) {
        throw ArtifactMissingError("index.jsonl was built from another checkpoint; run `lail index`");
      }
    }
    return *lail_index_;
  }

  Session& session_;
  std::optional<Bm25Index> bm25_;
  std::optional<EmbeddingIndex> raw_index_;
  std::optional<std::vector<RankedId>> uncertainty_;
  std::optional<EmbeddingIndex> lail_index_;
};

void stage_retrieve(Session& session) {
  Selectors selectors(session);
  for (Strategy strategy : session.config().strategies) {
    const std::string name(to_string(strategy));
    const std::string hash = hash_json(selectors.identity(strategy));
    const fs::path path = session.file(artifact::selections(strategy));
    if (session.cached("retrieve:" + name, hash, {path})) continue;

    std::string content = detail::dump_line({{std::string(detail::kMetaKey),
                                              {{"artifact", "selections"},
                                               {"strategy", name},
                                               {"config_hash", hash},
                                               {"tool_version", std::string(kToolVersion)}}}});
    for (const Example& test : session.testset()) {
      content += selection_to_json_line({test.id, name, selectors.select(strategy, test)});
      content += '\n';
    }
    detail::write_file_atomic(path, content);
    session.out() << "retrieve " << name << ": " << session.testset().size() << " selections -> "
                  << path.string() << "\n";
    session.record("retrieve:" + name, hash);
  }
}

fs::path external_verdict_path(const Session& session, Strategy strategy) {
  std::string pattern = session.config().verdicts.path;
  const std::string token = "{strategy}";
  for (auto pos = pattern.find(token); pos != std::string::npos; pos = pattern.find(token)) {
    pattern.replace(pos, token.size(), to_string(strategy));
  }
  return resolve(session.config().output_dir, pattern);
}

void stage_eval(Session& session) {
  const PipelineConfig& config = session.config();
  GenerationParams params = config.generation;
  if (!params.seed) params.seed = derive_seed(derive_seed(config.seed, "eval.generate"), "run" + std::to_string(config.run));

  const ExampleLookup pool(session.pool());
  const ExampleLookup tests(session.testset());
  std::vector<EvalReport> reports;
  std::vector<std::string> provider_failures;
  std::vector<std::string> missing;

  for (Strategy strategy : config.strategies) {
    const std::string name(to_string(strategy));
    const fs::path selections_path = session.file(artifact::selections(strategy));
    require_artifact(selections_path, "retrieve");

    const std::string gen_hash = hash_json({{"stage", "generate"},
                                            {"selections", hash_file(selections_path)},
                                            {"pool", session.pool_hash()},
                                            {"test", session.test_hash()},
                                            {"generator", provider_identity(config.generator)},
                                            {"params", detail::to_json(params)},
                                            {"shot_order", std::string(to_string(config.shot_order))}});
    const fs::path samples_path = session.file(artifact::samples(strategy));
    std::vector<SampleRecord> records;
    if (session.cached("generate:" + name, gen_hash, {samples_path})) {
      records = read_samples(samples_path);
    } else {
      std::map<std::string, std::vector<RankedId>, std::less<>> chosen;
      for (auto& selection : read_selections(selections_path)) {
        chosen[selection.test_id] = std::move(selection.shots);
      }
      const ShotSelector selector = [&](const Example& test) {
        auto it = chosen.find(test.id);
        if (it == chosen.end()) {
          throw DataError(selections_path.string() + " has no selection for test " + test.id);
        }
        return it->second;
      };
      GenerationOptions options{params, config.shot_order, config.workers};
      GenerationRun run =
          run_generation(session.testset(), name, selector, pool, session.generator(), options,
                         SamplesFile{samples_path, gen_hash, std::string(kToolVersion)});
      if (!run.failures.empty()) {
        for (const auto& f : run.failures) {
          session.err() << "generation failed: " << name << " " << f.test_id << ": " << f.message << "\n";
        }
        provider_failures.push_back(name);
        continue;
      }
      session.out() << "generate " << name << ": " << run.records.size() << " samples ("
                    << run.resumed_tests << " tests resumed) -> " << samples_path.string() << "\n";
      records = std::move(run.records);
      session.record("generate:" + name, gen_hash);
    }

    std::vector<VerdictRecord> verdicts;
    std::string verdict_hash;
    if (config.verdicts.provider == VerdictProvider::external_file) {
      const fs::path path = external_verdict_path(session, strategy);
      if (!fs::exists(path)) {
        missing.push_back(path.string());
        continue;
      }
      verdicts = read_verdicts(path);
      verdict_hash = hash_file(path);
    } else {
      const RunnerConfig& runner = config.verdicts.runner;
      verdict_hash = hash_json({{"stage", "verdicts"},
                                {"samples", hash_file(samples_path)},
                                {"test", session.test_hash()},
                                {"command", runner.command},
                                {"timeout_ms", runner.timeout.count()},
                                {"file_suffix", runner.file_suffix}});
      const fs::path path = session.file(artifact::verdicts(strategy));
      if (session.cached("verdicts:" + name, verdict_hash, {path})) {
        verdicts = read_verdicts(path);
      } else {
        verdicts = run_subprocess_verdicts(records, tests, runner);
        write_verdicts(path, verdicts, session.provenance(verdict_hash));
        session.record("verdicts:" + name, verdict_hash);
      }
    }

    const VerdictMatrix matrix = verdicts_for(records, verdicts);
    const Json snapshot = {{"strategy", name},
                           {"dataset", config.dataset.name},
                           {"r", config.r},
                           {"shot_order", std::string(to_string(config.shot_order))},
                           {"k", config.ks},
                           {"seed", config.seed},
                           {"run", config.run},
                           {"generator", provider_identity(config.generator)},
                           {"generation", detail::to_json(params)},
                           {"verdicts", config.verdicts.provider == VerdictProvider::external_file
                                            ? "external_file"
                                            : "subprocess_runner"}};
    EvalReport report = make_report(name, matrix, config.ks, snapshot.dump());
    report.config_hash = hash_json({{"generate", gen_hash}, {"verdicts", verdict_hash}, {"k", config.ks}});
    report.tool_version = std::string(kToolVersion);
    detail::write_file_atomic(session.file(artifact::report(strategy)), report_to_json(report));
    reports.push_back(std::move(report));
  }

  if (!reports.empty()) {
    const ComparisonDocument doc = compare_report(reports, config.baseline);
    session.out() << doc.table;
    for (const auto& warning : doc.warnings) session.err() << "warning: " << warning << "\n";
  }
  if (!provider_failures.empty()) {
    throw ProviderError("generation failed for strategy " + provider_failures.front() +
                        "; samples kept, rerun to resume");
  }
  if (!missing.empty()) {
    std::string message = "verdict file(s) missing:";
    for (const auto& path : missing) message += " " + path;
    throw ArtifactMissingError(message + " (samples are written; supply verdicts and rerun eval)");
  }
}

void stage_report(Session& session, const std::vector<fs::path>& runs) {
  const PipelineConfig& config = session.config();
  std::vector<fs::path> dirs = runs;
  if (dirs.empty()) dirs.push_back(config.output_dir);
  std::vector<EvalReport> reports;
  for (Strategy strategy : config.strategies) {
    std::vector<EvalReport> repeats;
    for (const fs::path& dir : dirs) {
      const fs::path path = dir / artifact::report(strategy);
      require_artifact(path, "eval");
      repeats.push_back(report_from_json(detail::read_file(path)));
    }
    reports.push_back(repeats.size() == 1 ? std::move(repeats.front()) : average_reports(repeats));
  }
  const ComparisonDocument doc = compare_report(reports, config.baseline);
  session.out() << doc.table;
  for (const auto& warning : doc.warnings) session.err() << "warning: " << warning << "\n";
  detail::write_file_atomic(session.file(artifact::kComparison), doc.json + "\n");
}

// ---------------------------------------------------------------------------
// Command line

struct Arguments {
  std::string config;
  std::vector<std::string> sets;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::string shot_order;
  bool force = false;
  bool no_cache = false;
  bool execution_risk = false;
  bool verbose = false;
  std::string checkpoint;
  std::string dataset;
  std::vector<std::string> runs;
};

void add_common_options(CLI::App& sub, Arguments& args) {
  sub.add_option("--config", args.config, "Pipeline configuration file (JSON)")->required();
  sub.add_option("--set", args.sets, "Override a configuration key: dotted.key=value");
  sub.add_option("--output-dir", args.output_dir, "Directory for stage artifacts");
  sub.add_option("--seed", args.seed, "Top-level seed");
  sub.add_option("--shot-order", args.shot_order, "Prompt shot order")->check(CLI::IsMember({"asc", "desc"}));
  sub.add_flag("--force", args.force, "Use a checkpoint trained over a different embedder");
  sub.add_flag("--no-cache", args.no_cache, "Rerun stages whose outputs are up to date");
  sub.add_flag("--i-understand-execution-risk", args.execution_risk,
               "Allow the subprocess runner to execute generated programs");
  sub.add_flag("--verbose", args.verbose, "Print progress messages");
}

class LogRedirect {
 public:
  LogRedirect(std::ostream& err, bool verbose) {
    previous_ = set_log_sink([&err, verbose](LogLevel level, std::string_view message) {
      if (level == LogLevel::warning) {
        err << "warning: " << message << "\n";
      } else if (verbose) {
        err << message << "\n";
      }
    });
  }
  ~LogRedirect() { set_log_sink(previous_); }
  LogRedirect(const LogRedirect&) = delete;
  LogRedirect& operator=(const LogRedirect&) = delete;

 private:
  LogSink previous_;
};

}  // namespace

int run_command(std::span<const std::string> argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"LLM-aware in-context example selection for code generation", "lail"};
  app.require_subcommand(1, 1);
  app.fallthrough(false);
  Arguments args;

  struct Entry {
    const char* name;
    const char* help;
  };
  constexpr Entry kSubcommands[] = {
      {"validate", "Check the configuration and dataset"},
      {"label", "Score stage-one candidates and write labels"},
      {"train", "Train the projection head on the labels"},
      {"index", "Encode the candidate pool with the checkpoint"},
      {"retrieve", "Select shots for every test item and strategy"},
      {"eval", "Generate programs, collect verdicts and report Pass@k"},
      {"report", "Compare per-strategy reports"},
      {"transfer-eval", "index + retrieve + eval with an external checkpoint"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const Entry& entry : kSubcommands) {
    CLI::App* sub = app.add_subcommand(entry.name, entry.help);
    add_common_options(*sub, args);
    subs[entry.name] = sub;
  }
  subs["report"]->add_option("--runs", args.runs, "Output directories of repeated runs to average");
  subs["transfer-eval"]->add_option("--checkpoint", args.checkpoint, "Checkpoint trained elsewhere")->required();
  subs["transfer-eval"]->add_option("--dataset", args.dataset, "Dataset directory to evaluate on");

  std::vector<std::string> storage = {"lail"};
  storage.insert(storage.end(), argv.begin(), argv.end());
  std::vector<char*> raw;
  for (auto& s : storage) raw.push_back(s.data());

  try {
    app.parse(static_cast<int>(raw.size()), raw.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitConfig;
  }

  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }

  LogRedirect redirect(err, args.verbose);
  set_log_verbose(args.verbose);
  try {
    std::vector<std::string> overrides = args.sets;
    if (args.seed) overrides.push_back("seed=" + std::to_string(*args.seed));
    if (!args.shot_order.empty()) overrides.push_back("select.shot_order=\"" + args.shot_order + "\"");
    if (command == "transfer-eval" && !args.dataset.empty()) {
      const fs::path root = fs::absolute(args.dataset);
      Json dataset = {{"root", root.string()}, {"name", root.filename().string()}};
      overrides.push_back("dataset=" + dataset.dump());
    }
    PipelineConfig config = load_pipeline_config(args.config, overrides);
    if (!args.output_dir.empty()) config.output_dir = args.output_dir;
    config.verdicts.runner.acknowledged_execution_risk = args.execution_risk;

    CommandOptions options;
    options.use_cache = !args.no_cache;
    options.force = args.force;
    if (!args.checkpoint.empty()) options.checkpoint = fs::path(args.checkpoint);
    Session session(std::move(config), std::move(options), out, err);

    if (command == "validate") {
      stage_validate(session);
    } else if (command == "label") {
      stage_label(session);
    } else if (command == "train") {
      stage_train(session);
    } else if (command == "index") {
      stage_index(session);
    } else if (command == "retrieve") {
      stage_retrieve(session);
    } else if (command == "eval") {
      stage_eval(session);
    } else if (command == "report") {
      std::vector<fs::path> runs(args.runs.begin(), args.runs.end());
      stage_report(session, runs);
    } else if (command == "transfer-eval") {
      if (!fs::exists(session.checkpoint_path())) {
        throw ArtifactMissingError("checkpoint " + session.checkpoint_path().string() + " not found");
      }
      stage_index(session);
      stage_retrieve(session);
      stage_eval(session);
    }
    return kExitOk;
  } catch (const ArtifactMissingError& e) {
    err << "error: " << e.what() << "\n";
    return kExitMissingArtifact;
  } catch (const ProviderError& e) {
    err << "error: provider failure: " << e.what() << "\n";
    return kExitProvider;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace lail
