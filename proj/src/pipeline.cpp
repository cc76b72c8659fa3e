#include "auxcal/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "auxcal/error.hpp"
#include "auxcal/random.hpp"
#include "auxcal/report.hpp"

namespace auxcal {

namespace {

constexpr std::array<std::pair<Stage, std::string_view>, 10> kStageNames{{
    {Stage::split, "split"},
    {Stage::generate, "generate"},
    {Stage::grade, "grade"},
    {Stage::embed, "embed"},
    {Stage::cluster, "cluster"},
    {Stage::targets, "targets"},
    {Stage::train, "train"},
    {Stage::baselines, "baselines"},
    {Stage::evaluate, "evaluate"},
    {Stage::report, "report"},
}};

// Reads known keys from one config object and rejects the rest.
class Section {
 public:
  Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ValidationError("config section '" + name_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& dst) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      dst = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("config key '" + name_ + "." + key + "': " + e.what());
    }
  }

  template <typename T, typename Parse>
  void read_enum(const char* key, T& dst, Parse parse) {
    std::string text;
    bool present = j_.contains(key);
    read(key, text);
    if (present) dst = parse(text);
  }

  void read_path(const char* key, std::filesystem::path& dst) {
    std::string text;
    read(key, text);
    if (!text.empty()) dst = text;
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ValidationError("unknown config key '" + name_ + "." + k + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

GenerationParams confidence_params(const PipelineConfig& cfg) {
  GenerationParams p = cfg.generate.params;
  p.logprobs = false;
  return p;
}

std::size_t icl_count(const PipelineConfig& cfg) {
  return cfg.generate.icl.value_or(cfg.generate.style == PromptStyle::trivia ? 10 : 0);
}

Corpus train_pool_of(const Corpus& corpus) {
  Corpus pool;
  for (const auto& r : corpus) {
    if (r.split == Split::train) pool.push_back(r);
  }
  return pool;
}

std::string group_of(const CalibrationRecord& r, ClusterScope scope) {
  if (!r.split) return "unsplit";
  if (scope == ClusterScope::joint) return *r.split == Split::test ? "test" : "train+validation";
  return std::string(to_string(*r.split));
}

std::map<std::string, std::vector<std::size_t>> cluster_groups(const Corpus& corpus, ClusterScope scope) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < corpus.size(); ++i) groups[group_of(corpus[i], scope)].push_back(i);
  return groups;
}

Matrix embeddings_of(const Corpus& corpus, std::span<const std::size_t> rows) {
  std::vector<std::vector<double>> data;
  data.reserve(rows.size());
  for (auto i : rows) {
    const auto& r = corpus[i];
    if (!r.embedding) throw MissingFieldError("embedding", r.id);
    data.push_back(*r.embedding);
  }
  return Matrix::from_rows(data);
}

double seq_likelihood_of(const CalibrationRecord& r) {
  if (!r.token_logprobs) throw MissingFieldError("token_logprobs", r.id);
  return normalized_seq_likelihood(*r.token_logprobs);
}

bool correct_of(const CalibrationRecord& r) {
  if (!r.correct) throw MissingFieldError("correct", r.id);
  return *r.correct;
}

void require_path(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw PreconditionError(std::string(what) + " path is not set");
}

}  // namespace

std::string_view to_string(Stage stage) {
  for (const auto& [s, name] : kStageNames) {
    if (s == stage) return name;
  }
  return "?";
}

Stage parse_stage(std::string_view text) {
  for (const auto& [s, name] : kStageNames) {
    if (name == text) return s;
  }
  throw PreconditionError("unknown stage '" + std::string(text) + "'");
}

std::filesystem::path PipelineConfig::series_path() const {
  if (!paths.series.empty()) return paths.series;
  if (paths.metrics_csv.empty()) return {};
  auto p = paths.metrics_csv;
  return p.replace_extension(".series.jsonl");
}

PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  Section top(j, "config");
  top.read("seed", c.seed);

  if (auto* p = top.child("paths")) {
    Section s(*p, "paths");
    s.read_path("corpus", c.paths.corpus);
    s.read_path("out", c.paths.out);
    s.read_path("checkpoint", c.paths.checkpoint);
    s.read_path("baselines", c.paths.baselines);
    s.read_path("metrics_csv", c.paths.metrics_csv);
    s.read_path("series", c.paths.series);
    s.read_path("report_dir", c.paths.report_dir);
    s.finish();
  }
  if (auto* p = top.child("split")) {
    Section s(*p, "split");
    s.read("train", c.split.train_size);
    s.read("validation", c.split.validation_size);
    s.read("test", c.split.test_size);
    s.finish();
  }
  if (auto* p = top.child("gateway")) {
    Section s(*p, "gateway");
    s.read("base_url", c.gateway.base_url);
    s.read("chat_model", c.gateway.chat_model);
    s.read("embedding_model", c.gateway.embedding_model);
    s.read_path("fixture_path", c.gateway.fixture_path);
    s.read_enum("mode", c.gateway.mode, parse_gateway_mode);
    s.read("max_retries", c.gateway.max_retries);
    s.read("backoff_seconds", c.gateway.backoff_seconds);
    s.read("parallelism", c.gateway.parallelism);
    s.read("timeout_seconds", c.gateway.timeout_seconds);
    s.read("embedding_batch", c.gateway.embedding_batch);
    s.finish();
  }
  if (auto* p = top.child("generate")) {
    Section s(*p, "generate");
    s.read_enum("style", c.generate.style, parse_prompt_style);
    s.read("cot", c.generate.cot);
    s.read("cot_answer", c.generate.cot_answer);
    if (s.child("icl")) {
      std::size_t icl = 0;
      s.read("icl", icl);
      c.generate.icl = icl;
    }
    s.read("verbalized", c.generate.verbalized);
    s.read("max_new_tokens", c.generate.params.max_new_tokens);
    s.read("stop_sequences", c.generate.params.stop_sequences);
    s.read("temperature", c.generate.params.temperature);
    s.read("logprobs", c.generate.params.logprobs);
    s.finish();
    validate_params(c.generate.params);
  }
  if (auto* p = top.child("grade")) {
    Section s(*p, "grade");
    s.read("rouge_threshold", c.grade.rouge_threshold);
    s.read("normalize_case", c.grade.normalize_case);
    s.read("strip_punctuation", c.grade.strip_punctuation);
    s.finish();
  }
  if (auto* p = top.child("embed")) {
    Section s(*p, "embed");
    s.read("max_tokens", c.embed_max_tokens);
    s.finish();
  }
  if (auto* p = top.child("cluster")) {
    Section s(*p, "cluster");
    s.read("min_cluster_size", c.cluster.params.min_cluster_size);
    s.read("min_samples", c.cluster.params.min_samples);
    s.read_enum("normalization", c.cluster.normalization, parse_normalization);
    s.read_enum("scope", c.cluster.scope, [](const std::string& t) {
      if (t == "per_split") return ClusterScope::per_split;
      if (t == "joint") return ClusterScope::joint;
      throw ValidationError("cluster.scope must be per_split or joint");
    });
    s.finish();
  }
  if (auto* p = top.child("train")) {
    Section s(*p, "train");
    s.read_enum("mode", c.train.mode, parse_target_mode);
    if (auto* f = s.child("features")) {
      Section fs(*f, "train.features");
      fs.read("use_question_embedding", c.train.features.use_question_embedding);
      fs.read("use_answer_embedding", c.train.features.use_answer_embedding);
      fs.read("use_cot_answer", c.train.features.use_cot_answer);
      fs.read_enum("use_verbalized", c.train.features.use_verbalized, parse_verbalized_feature);
      fs.read("answer_length", c.train.features.answer_length);
      fs.read("max_tokens", c.train.features.max_tokens);
      fs.finish();
    }
    auto& t = c.train.config;
    s.read("learning_rate", t.learning_rate);
    s.read("weight_decay", t.weight_decay);
    s.read("batch_size", t.batch_size);
    s.read("max_steps", t.max_steps);
    s.read("grad_clip_norm", t.grad_clip_norm);
    s.read("eval_every", t.eval_every);
    s.read("hidden", t.hidden);
    s.read("search", c.train.search);
    s.read("search_trials", c.train.search_trials);
    s.read("search_steps", c.train.search_steps);
    s.read("lr_min", c.train.space.lr_min);
    s.read("lr_max", c.train.space.lr_max);
    s.read("wd_min", c.train.space.wd_min);
    s.read("wd_max", c.train.space.wd_max);
    s.read("workers", c.train.workers);
    s.finish();
  }
  if (auto* p = top.child("platt")) {
    Section s(*p, "platt");
    s.read("learning_rate", c.platt.learning_rate);
    s.read("iterations", c.platt.iterations);
    s.finish();
  }
  if (auto* p = top.child("evaluate")) {
    Section s(*p, "evaluate");
    s.read("n_bins", c.evaluate.report.n_bins);
    s.read("bootstrap_resamples", c.evaluate.report.bootstrap.n_resamples);
    s.read("workers", c.evaluate.report.bootstrap.workers);
    s.read("smece_grid", c.evaluate.report.smece.grid_size);
    s.read("include_cluster_target", c.evaluate.include_cluster_target);
    if (auto* cal = s.child("calibrators")) {
      if (!cal->is_object()) throw ValidationError("evaluate.calibrators must map labels to checkpoint paths");
      for (const auto& [label, path] : cal->items()) {
        c.evaluate.calibrators.emplace_back(label, path.get<std::string>());
      }
    }
    s.finish();
  }
  if (auto* p = top.child("quality")) {
    Section s(*p, "quality");
    s.read("n_rouge", c.quality.n_rouge);
    s.read("n_cos", c.quality.n_cos);
    s.read("per_cluster", c.quality.per_cluster);
    s.finish();
  }
  if (auto* p = top.child("synth")) {
    Section s(*p, "synth");
    auto& sp = c.synth.spec;
    s.read("clusters", sp.clusters);
    s.read("per_cluster", sp.per_cluster);
    s.read("cluster_sizes", sp.cluster_sizes);
    s.read("dim", sp.dim);
    s.read("center_scale", sp.center_scale);
    s.read("spread", sp.spread);
    s.read("exact_counts", sp.exact_counts);
    s.read("likelihood_bias", sp.likelihood_bias);
    s.read("likelihood_slope", sp.likelihood_slope);
    s.read("likelihood_noise", sp.likelihood_noise);
    s.read("verbalized_failure_rate", sp.verbalized_failure_rate);
    s.read_path("fixtures", c.synth.fixtures);
    s.finish();
  }
  top.finish();

  c.split.seed = c.seed;
  c.train.config.seed = c.seed;
  c.evaluate.report.bootstrap.seed = c.seed;
  c.quality.seed = c.seed;
  c.synth.spec.seed = c.seed;
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string trim(std::string_view text) {
  const auto b = text.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(b, e - b + 1));
}

std::string qa_prompt_for(const CalibrationRecord& record, std::span<const CalibrationRecord> train_pool,
                          const PipelineConfig& cfg, bool cot) {
  PromptSpec spec;
  spec.style = cfg.generate.style;
  spec.cot = cot;
  const std::size_t k = icl_count(cfg);
  if (k > 0) {
    if (!record.split) throw MissingFieldError("split", record.id);
    for (const auto& d : sample_icl(train_pool, k, cfg.seed, record.id)) {
      spec.icl_examples.push_back({d.question, d.gold_answers.front()});
    }
  }
  return build_qa_prompt(record, spec);
}

std::vector<std::size_t> evaluation_rows(const Corpus& corpus, Split split) {
  const bool any_split = std::any_of(corpus.begin(), corpus.end(), [](const auto& r) { return r.split.has_value(); });
  if (!any_split) {
    std::vector<std::size_t> all(corpus.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  return indices_in_split(corpus, split);
}

Corpus stage_split(Corpus corpus, const PipelineConfig& cfg) { return split_corpus(std::move(corpus), cfg.split); }

Corpus stage_generate(Corpus corpus, const PipelineConfig& cfg, LlmClient& client) {
  const Corpus pool = train_pool_of(corpus);
  const auto params = cfg.generate.params;

  std::vector<std::string> prompts;
  prompts.reserve(corpus.size());
  for (const auto& r : corpus) prompts.push_back(qa_prompt_for(r, pool, cfg, cfg.generate.cot));
  const auto answers = client.generate_batch(prompts, params);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    corpus[i].model_answer = trim(answers[i].text);
    corpus[i].token_logprobs = answers[i].token_logprobs;
  }

  if (cfg.generate.cot_answer) {
    prompts.clear();
    for (const auto& r : corpus) prompts.push_back(qa_prompt_for(r, pool, cfg, true));
    const auto cot = client.generate_batch(prompts, params);
    for (std::size_t i = 0; i < corpus.size(); ++i) corpus[i].cot_answer = trim(cot[i].text);
  }

  if (cfg.generate.verbalized) {
    const auto cparams = confidence_params(cfg);
    std::vector<std::size_t> rows;
    std::vector<std::string> pct, qual;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      // An empty answer has nothing to be confident about.
      if (corpus[i].model_answer->empty()) continue;
      rows.push_back(i);
      pct.push_back(build_confidence_prompt(corpus[i].question, *corpus[i].model_answer, ConfidenceMode::percent));
      qual.push_back(
          build_confidence_prompt(corpus[i].question, *corpus[i].model_answer, ConfidenceMode::qualitative));
    }
    const auto pct_out = client.generate_batch(pct, cparams);
    const auto qual_out = client.generate_batch(qual, cparams);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      corpus[rows[k]].verbalized_percent_raw = trim(pct_out[k].text);
      corpus[rows[k]].verbalized_qual_raw = trim(qual_out[k].text);
    }
  }
  return corpus;
}

Corpus stage_grade(Corpus corpus, const PipelineConfig& cfg) {
  for (auto& r : corpus) {
    if (!r.model_answer) throw MissingFieldError("model_answer", r.id);
    r.correct = grade_answer(*r.model_answer, r.gold_answers, cfg.grade);
  }
  return corpus;
}

Corpus stage_embed(Corpus corpus, const PipelineConfig& cfg, LlmClient& client) {
  if (corpus.empty()) return corpus;
  std::vector<std::string> texts;
  texts.reserve(corpus.size());
  for (const auto& r : corpus) texts.push_back(truncate_tokens(r.question, cfg.embed_max_tokens));
  const Matrix m = client.embed_texts(texts);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto row = m.row(i);
    corpus[i].embedding = std::vector<double>(row.begin(), row.end());
  }
  return corpus;
}

Corpus stage_cluster(Corpus corpus, const PipelineConfig& cfg) {
  for (const auto& [group, rows] : cluster_groups(corpus, cfg.cluster.scope)) {
    const EmbeddingMatrix raw{embeddings_of(corpus, rows), Normalization::raw, {}};
    const auto points = normalize_embeddings(raw, cfg.cluster.normalization);
    const auto assignment = cluster_questions(points.data, cfg.cluster.params);
    for (std::size_t k = 0; k < rows.size(); ++k) corpus[rows[k]].cluster_id = assignment.labels[k];
  }
  return corpus;
}

Corpus stage_targets(Corpus corpus, const PipelineConfig& cfg) {
  for (const auto& [group, rows] : cluster_groups(corpus, cfg.cluster.scope)) {
    std::vector<int> labels;
    std::vector<std::optional<bool>> correct;
    for (auto i : rows) {
      const auto& r = corpus[i];
      if (!r.cluster_id) throw MissingFieldError("cluster_id", r.id);
      if (!r.correct) throw MissingFieldError("correct", r.id);
      labels.push_back(*r.cluster_id);
      correct.push_back(r.correct);
    }
    const auto targets = assign_calibration_targets(labels, correct);
    for (std::size_t k = 0; k < rows.size(); ++k) corpus[rows[k]].target = targets[k];
  }
  return corpus;
}

Embedder make_embedder(const PipelineConfig& cfg) {
  auto client = std::make_shared<std::unique_ptr<LlmClient>>();
  auto gateway = apply_environment(cfg.gateway);
  const std::size_t max_tokens = cfg.embed_max_tokens;
  return [client, gateway, max_tokens](const std::vector<std::string>& texts) {
    if (!*client) *client = std::make_unique<LlmClient>(gateway);
    std::vector<std::string> cut;
    cut.reserve(texts.size());
    for (const auto& t : texts) cut.push_back(truncate_tokens(t, max_tokens));
    return (*client)->embed_texts(cut);
  };
}

Dataset build_dataset(const Corpus& corpus, std::span<const std::size_t> rows, TargetMode mode,
                      const FeatureConfig& features, const Embedder& embedder) {
  Corpus subset;
  Dataset d;
  subset.reserve(rows.size());
  for (auto i : rows) {
    const auto& r = corpus[i];
    if (mode == TargetMode::clustering) {
      if (!r.target) throw MissingFieldError("target", r.id);
      d.targets.push_back(*r.target);
    } else {
      d.targets.push_back(correct_of(r) ? 1.0 : 0.0);
    }
    subset.push_back(r);
  }
  d.features = featurize_records(subset, features, embedder);
  return d;
}

CalibratorModel stage_train(const Corpus& corpus, const PipelineConfig& cfg, const Embedder& embedder) {
  const auto train_rows = indices_in_split(corpus, Split::train);
  const auto val_rows = indices_in_split(corpus, Split::validation);
  if (train_rows.empty()) throw PreconditionError("train stage needs records in the train split");
  if (val_rows.empty()) throw PreconditionError("train stage needs records in the validation split");
  const auto& t = cfg.train;
  const Dataset train = build_dataset(corpus, train_rows, t.mode, t.features, embedder);
  const Dataset val = build_dataset(corpus, val_rows, t.mode, t.features, embedder);
  TrainConfig tc = t.config;
  if (t.search) {
    const auto result = search_hyperparameters(train, val, tc, t.mode, t.space, t.search_trials, t.search_steps,
                                               derive_seed(cfg.seed, std::uint64_t{7}), t.workers);
    tc = result.best;
  }
  return train_calibrator(train, val, tc, t.mode, t.features);
}

BaselineArtifacts stage_baselines(const Corpus& corpus, const PipelineConfig& cfg) {
  const auto rows = evaluation_rows(corpus, Split::validation);
  if (rows.empty()) throw PreconditionError("baselines stage needs records in the validation split");
  std::vector<double> conf;
  std::vector<bool> correct;
  for (auto i : rows) {
    conf.push_back(seq_likelihood_of(corpus[i]));
    correct.push_back(correct_of(corpus[i]));
  }
  BaselineArtifacts b;
  b.platt = fit_platt(conf, correct, cfg.platt);
  b.fit_records = rows.size();
  return b;
}

void save_baselines(const std::filesystem::path& path, const BaselineArtifacts& b) {
  nlohmann::ordered_json j;
  j["platt"] = {{"a", b.platt.params.a},
                {"b", b.platt.params.b},
                {"initial_mse", b.platt.initial_mse},
                {"fitted_mse", b.platt.fitted_mse},
                {"best_iteration", b.platt.best_iteration},
                {"single_class", b.platt.single_class}};
  j["fit_records"] = b.fit_records;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PreconditionError("cannot write '" + path.string() + "'");
  out << j.dump(1) << '\n';
}

BaselineArtifacts load_baselines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open baselines '" + path.string() + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    BaselineArtifacts b;
    const auto& p = j.at("platt");
    b.platt.params = {p.at("a").get<double>(), p.at("b").get<double>()};
    b.platt.initial_mse = p.at("initial_mse");
    b.platt.fitted_mse = p.at("fitted_mse");
    b.platt.best_iteration = p.at("best_iteration");
    b.platt.single_class = p.at("single_class");
    b.fit_records = j.at("fit_records");
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("baselines '" + path.string() + "' is malformed: " + e.what());
  }
}

Evaluation stage_evaluate(const Corpus& corpus, const PipelineConfig& cfg, const Embedder& embedder) {
  const auto rows = evaluation_rows(corpus, Split::test);
  if (rows.empty()) throw PreconditionError("evaluate stage needs records in the test split");
  std::vector<bool> correct;
  for (auto i : rows) {
    const auto& r = corpus[i];
    if (!r.target) throw MissingFieldError("target", r.id);
    correct.push_back(correct_of(r));
  }
  Evaluation ev;
  auto add = [&](std::string label, std::vector<double> conf, std::vector<bool> corr,
                 std::optional<double> success = std::nullopt, std::size_t excluded = 0) {
    ConfidenceSeries s{std::move(conf), std::move(corr), std::move(label)};
    ReportOptions opts = cfg.evaluate.report;
    opts.bootstrap.seed = derive_seed(cfg.seed, std::string_view(s.label));
    ev.rows.push_back(evaluate_series(s, opts, success, excluded));
    ev.series.push_back(std::move(s));
  };

  const bool have_lp = std::any_of(rows.begin(), rows.end(), [&](auto i) { return corpus[i].token_logprobs; });
  if (have_lp) {
    std::vector<double> lik;
    for (auto i : rows) lik.push_back(seq_likelihood_of(corpus[i]));
    add("seq_likelihood", lik, correct);
    if (!cfg.paths.baselines.empty()) {
      const auto b = load_baselines(cfg.paths.baselines);
      std::vector<double> platt;
      for (double p : lik) platt.push_back(apply_platt(b.platt.params, p));
      add("platt", platt, correct);
    }
  }

  auto verbalized = [&](const char* label, auto field, auto parse) {
    if (std::none_of(rows.begin(), rows.end(), [&](auto i) { return (corpus[i].*field).has_value(); })) return;
    std::vector<double> conf;
    std::vector<bool> corr;
    for (auto i : rows) {
      const auto& raw = corpus[i].*field;
      const auto v = raw ? parse(*raw) : std::nullopt;
      if (!v) continue;
      conf.push_back(*v);
      corr.push_back(*corpus[i].correct);
    }
    const std::size_t excluded = rows.size() - conf.size();
    const double success = static_cast<double>(conf.size()) / static_cast<double>(rows.size());
    if (conf.empty()) {
      std::cerr << "warning: no parseable " << label << " confidences; row skipped\n";
      return;
    }
    add(label, conf, corr, success, excluded);
  };
  verbalized("verbalized_percent", &CalibrationRecord::verbalized_percent_raw,
             [](const std::string& t) { return parse_verbalized_percent(t); });
  verbalized("verbalized_qual", &CalibrationRecord::verbalized_qual_raw,
             [](const std::string& t) { return parse_verbalized_qualitative(t); });

  if (!cfg.evaluate.calibrators.empty()) {
    Corpus subset;
    for (auto i : rows) subset.push_back(corpus[i]);
    for (const auto& [label, path] : cfg.evaluate.calibrators) {
      const auto model = load_checkpoint(path);
      add(label, predict(model, featurize_records(subset, model.features, embedder)), correct);
    }
  }

  if (cfg.evaluate.include_cluster_target) {
    std::vector<double> targets;
    for (auto i : rows) targets.push_back(*corpus[i].target);
    add("cluster_target", targets, correct);
  }
  return ev;
}

void save_series(const std::filesystem::path& path, const std::vector<ConfidenceSeries>& series) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PreconditionError("cannot write '" + path.string() + "'");
  for (const auto& s : series) {
    nlohmann::ordered_json j;
    j["method"] = s.label;
    j["confidences"] = s.confidences;
    j["correct"] = s.correct;
    out << j.dump() << '\n';
  }
}

std::vector<ConfidenceSeries> load_series(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open series file '" + path.string() + "'");
  std::vector<ConfidenceSeries> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ConfidenceSeries s;
      s.label = j.at("method").get<std::string>();
      s.confidences = j.at("confidences").get<std::vector<double>>();
      for (const auto& c : j.at("correct")) s.correct.push_back(c.get<bool>());
      validate_series(s);
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(n, path.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::filesystem::path> stage_report(const Corpus& corpus, const std::vector<ConfidenceSeries>& series,
                                                const PipelineConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto write = [&](const std::filesystem::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw PreconditionError("cannot write '" + p.string() + "'");
    out << body;
    written.push_back(p);
  };
  for (const auto& s : series) {
    const auto bins = reliability_table(s, cfg.evaluate.report.n_bins);
    write(dir / ("reliability_" + file_stem(s.label) + ".svg"), render_reliability_svg(bins, s.label));
  }

  std::vector<QualityRow> quality;
  for (const auto& [group, rows] : cluster_groups(corpus, cfg.cluster.scope)) {
    ClusterAssignment a;
    std::vector<std::string> questions;
    bool complete = true;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto& r = corpus[rows[k]];
      if (!r.cluster_id || !r.embedding) {
        complete = false;
        break;
      }
      a.labels.push_back(*r.cluster_id);
      if (*r.cluster_id != kNoise) a.clusters[*r.cluster_id].push_back(k);
      questions.push_back(r.question);
    }
    if (!complete) continue;
    try {
      quality.emplace_back(group, evaluate_cluster_quality(a, questions, embeddings_of(corpus, rows), cfg.quality));
    } catch (const PreconditionError& e) {
      std::cerr << "warning: cluster quality skipped for " << group << ": " << e.what() << '\n';
    }
  }
  std::ostringstream csv, md;
  write_cluster_quality_csv(csv, quality);
  write_cluster_quality_markdown(md, quality);
  write(dir / "cluster_quality.csv", csv.str());
  write(dir / "cluster_quality.md", md.str());
  return written;
}

void run_stage(Stage stage, const PipelineConfig& cfg) {
  require_path(cfg.paths.corpus, "corpus");
  const Corpus corpus = load_corpus(cfg.paths.corpus);
  auto out_or = [&](const std::filesystem::path& fallback, const char* what) {
    const auto p = cfg.paths.out.empty() ? fallback : cfg.paths.out;
    require_path(p, what);
    return p;
  };
  switch (stage) {
    case Stage::split:
    case Stage::grade:
    case Stage::cluster:
    case Stage::targets: {
      const auto out = out_or({}, "output");
      Corpus result = stage == Stage::split   ? stage_split(corpus, cfg)
                      : stage == Stage::grade ? stage_grade(corpus, cfg)
                      : stage == Stage::cluster ? stage_cluster(corpus, cfg)
                                                : stage_targets(corpus, cfg);
      save_corpus(out, result);
      return;
    }
    case Stage::generate:
    case Stage::embed: {
      const auto out = out_or({}, "output");
      LlmClient client(apply_environment(cfg.gateway));
      save_corpus(out, stage == Stage::generate ? stage_generate(corpus, cfg, client)
                                                : stage_embed(corpus, cfg, client));
      return;
    }
    case Stage::train:
      save_checkpoint(out_or(cfg.paths.checkpoint, "checkpoint"), stage_train(corpus, cfg, make_embedder(cfg)));
      return;
    case Stage::baselines:
      save_baselines(out_or(cfg.paths.baselines, "baselines"), stage_baselines(corpus, cfg));
      return;
    case Stage::evaluate: {
      PipelineConfig c = cfg;
      c.paths.metrics_csv = out_or(cfg.paths.metrics_csv, "metrics_csv");
      if (!cfg.paths.out.empty()) c.paths.series.clear();
      const auto ev = stage_evaluate(corpus, c, make_embedder(c));
      if (c.paths.metrics_csv.has_parent_path()) std::filesystem::create_directories(c.paths.metrics_csv.parent_path());
      std::ofstream out(c.paths.metrics_csv, std::ios::binary | std::ios::trunc);
      if (!out) throw PreconditionError("cannot write '" + c.paths.metrics_csv.string() + "'");
      write_metric_csv(out, ev.rows);
      save_series(c.series_path(), ev.series);
      return;
    }
    case Stage::report: {
      const auto dir = out_or(cfg.paths.report_dir, "report_dir");
      const auto series_path = cfg.series_path();
      require_path(series_path, "series");
      stage_report(corpus, load_series(series_path), cfg, dir);
      return;
    }
  }
}

void synthesize_fixture_run(const PipelineConfig& cfg, const std::filesystem::path& corpus_out,
                            const std::filesystem::path& fixtures_out) {
  const auto synth = make_synthetic_corpus(cfg.synth.spec);
  const Corpus raw = strip_to_inputs(synth.records);
  save_corpus(corpus_out, raw);

  std::filesystem::remove(fixtures_out);
  FixtureStore store(fixtures_out);
  const EndpointConfig& gw = cfg.gateway;
  const Corpus split = stage_split(raw, cfg);
  const Corpus pool = train_pool_of(split);
  std::map<std::string, const CalibrationRecord*> by_id;
  for (const auto& r : synth.records) by_id[r.id] = &r;

  auto chat = [&](const std::string& prompt, const GenerationParams& params, const std::string& content,
                  std::optional<double> logprob) {
    nlohmann::ordered_json message = {{"role", "assistant"}, {"content", content}};
    nlohmann::ordered_json choice = {{"index", 0}, {"message", message}};
    if (logprob) {
      // The answer is followed by a stray prompt fragment that the stop
      // rule must cut away.
      const std::string answer = content.substr(0, content.find(" Question:"));
      choice["logprobs"] = {{"content",
                             {{{"token", answer}, {"logprob", *logprob}},
                              {{"token", " Question"}, {"logprob", -0.05}},
                              {{"token", ":"}, {"logprob", -0.01}}}}};
    } else {
      choice["logprobs"] = nullptr;
    }
    nlohmann::ordered_json response = {{"object", "chat.completion"}, {"choices", {choice}}};
    const nlohmann::json plain = nlohmann::json::parse(response.dump());
    store.append(chat_request_hash(gw, prompt, params), chat_request_body(gw, prompt, params), plain);
    return trim(parse_chat_response(plain, params).text);
  };

  const auto params = cfg.generate.params;
  const auto cparams = confidence_params(cfg);
  for (const auto& r : split) {
    const CalibrationRecord& s = *by_id.at(r.id);
    const double lp = s.token_logprobs->front();
    const std::string answer =
        chat(qa_prompt_for(r, pool, cfg, cfg.generate.cot), params, *s.model_answer + " Question:", lp);
    if (cfg.generate.cot_answer) {
      chat(qa_prompt_for(r, pool, cfg, true), params, "Thinking it through, " + *s.model_answer + " Question:", lp);
    }
    if (cfg.generate.verbalized && !answer.empty()) {
      chat(build_confidence_prompt(r.question, answer, ConfidenceMode::percent), cparams, *s.verbalized_percent_raw,
           std::nullopt);
      chat(build_confidence_prompt(r.question, answer, ConfidenceMode::qualitative), cparams, *s.verbalized_qual_raw,
           std::nullopt);
    }
    const std::string text = truncate_tokens(r.question, cfg.embed_max_tokens);
    store.append(embedding_request_hash(gw, text), {{"model", gw.embedding_model}, {"input", text}},
                 {{"embedding", *s.embedding}});
  }
}

void run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& workdir) {
  require_path(cfg.paths.corpus, "corpus");
  std::filesystem::create_directories(workdir);
  PipelineConfig c = cfg;
  auto step = [&](Stage stage, const std::filesystem::path& in, const std::filesystem::path& out) {
    c.paths.corpus = in;
    c.paths.out = out;
    run_stage(stage, c);
  };
  const auto w = [&](const char* name) { return workdir / name; };
  step(Stage::split, cfg.paths.corpus, w("split.jsonl"));
  step(Stage::generate, w("split.jsonl"), w("generated.jsonl"));
  step(Stage::grade, w("generated.jsonl"), w("graded.jsonl"));
  step(Stage::embed, w("graded.jsonl"), w("embedded.jsonl"));
  step(Stage::cluster, w("embedded.jsonl"), w("clustered.jsonl"));
  step(Stage::targets, w("clustered.jsonl"), w("targets.jsonl"));

  c.train.mode = TargetMode::clustering;
  step(Stage::train, w("targets.jsonl"), w("calibrator_clustering.json"));
  c.train.mode = TargetMode::binary;
  step(Stage::train, w("targets.jsonl"), w("calibrator_binary.json"));
  c.train.mode = cfg.train.mode;
  step(Stage::baselines, w("targets.jsonl"), w("baselines.json"));

  c.paths.baselines = w("baselines.json");
  c.evaluate.calibrators = {{"auxiliary_clustering", w("calibrator_clustering.json")},
                            {"auxiliary_binary", w("calibrator_binary.json")}};
  c.paths.series = w("metrics.series.jsonl");
  step(Stage::evaluate, w("targets.jsonl"), w("metrics.csv"));
  step(Stage::report, w("targets.jsonl"), w("report"));
}

}  // namespace auxcal
