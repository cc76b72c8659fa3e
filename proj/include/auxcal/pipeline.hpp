#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "auxcal/baselines.hpp"
#include "auxcal/calibrator.hpp"
#include "auxcal/clustering.hpp"
#include "auxcal/corpus.hpp"
#include "auxcal/gateway.hpp"
#include "auxcal/grading.hpp"
#include "auxcal/metrics.hpp"
#include "auxcal/synthetic.hpp"

namespace auxcal {

enum class Stage { split, generate, grade, embed, cluster, targets, train, baselines, evaluate, report };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view text);

// per_split clusters each split on its own; joint clusters train and
// validation together and test on its own.
enum class ClusterScope { per_split, joint };

struct PipelineConfig {
  std::uint64_t seed = 0;

  struct Paths {
    std::filesystem::path corpus;
    std::filesystem::path out;
    std::filesystem::path checkpoint;
    std::filesystem::path baselines;
    std::filesystem::path metrics_csv;
    // Defaults to metrics_csv with the extension replaced by .series.jsonl.
    std::filesystem::path series;
    std::filesystem::path report_dir;
  } paths;

  SplitSpec split;
  EndpointConfig gateway;

  struct Generate {
    PromptStyle style = PromptStyle::trivia;
    bool cot = false;
    // Also collect a chain-of-thought answer for use as a feature.
    bool cot_answer = false;
    // Demonstrations per prompt; unset means 10 for trivia and 0 for coqa.
    std::optional<std::size_t> icl;
    bool verbalized = true;
    GenerationParams params;
  } generate;

  GradeConfig grade;
  std::size_t embed_max_tokens = 512;

  struct Cluster {
    HdbscanParams params;
    Normalization normalization = Normalization::per_feature_z;
    ClusterScope scope = ClusterScope::per_split;
  } cluster;

  struct Train {
    TargetMode mode = TargetMode::clustering;
    FeatureConfig features;
    TrainConfig config;
    bool search = false;
    std::size_t search_trials = 50;
    std::size_t search_steps = 250;
    SearchSpace space;
    std::size_t workers = 1;
  } train;

  PlattOptions platt;

  struct Evaluate {
    ReportOptions report;
    // Auxiliary calibrators to score: label -> checkpoint path.
    std::vector<std::pair<std::string, std::filesystem::path>> calibrators;
    bool include_cluster_target = true;
  } evaluate;

  ClusterQualityOptions quality;

  struct Synth {
    SyntheticSpec spec;
    std::filesystem::path fixtures;
  } synth;

  std::filesystem::path series_path() const;
};

// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

std::string trim(std::string_view text);

// Prompt the generate stage sends for `record`. `train_pool` supplies the
// demonstrations.
std::string qa_prompt_for(const CalibrationRecord& record, std::span<const CalibrationRecord> train_pool,
                          const PipelineConfig& cfg, bool cot);

// Records of `split`, or every record when none carries a split label.
std::vector<std::size_t> evaluation_rows(const Corpus& corpus, Split split);

Corpus stage_split(Corpus corpus, const PipelineConfig& cfg);
Corpus stage_generate(Corpus corpus, const PipelineConfig& cfg, LlmClient& client);
Corpus stage_grade(Corpus corpus, const PipelineConfig& cfg);
Corpus stage_embed(Corpus corpus, const PipelineConfig& cfg, LlmClient& client);
Corpus stage_cluster(Corpus corpus, const PipelineConfig& cfg);
Corpus stage_targets(Corpus corpus, const PipelineConfig& cfg);

// Embedder that opens a gateway client on first use.
Embedder make_embedder(const PipelineConfig& cfg);

Dataset build_dataset(const Corpus& corpus, std::span<const std::size_t> rows, TargetMode mode,
                      const FeatureConfig& features, const Embedder& embedder);
CalibratorModel stage_train(const Corpus& corpus, const PipelineConfig& cfg, const Embedder& embedder);

struct BaselineArtifacts {
  PlattFit platt;
  std::size_t fit_records = 0;
};
BaselineArtifacts stage_baselines(const Corpus& corpus, const PipelineConfig& cfg);
void save_baselines(const std::filesystem::path& path, const BaselineArtifacts& b);
BaselineArtifacts load_baselines(const std::filesystem::path& path);

struct Evaluation {
  std::vector<MethodReport> rows;
  std::vector<ConfidenceSeries> series;
};
Evaluation stage_evaluate(const Corpus& corpus, const PipelineConfig& cfg, const Embedder& embedder);
void save_series(const std::filesystem::path& path, const std::vector<ConfidenceSeries>& series);
std::vector<ConfidenceSeries> load_series(const std::filesystem::path& path);

// Writes reliability_<method>.svg for each series plus cluster_quality.csv
// and cluster_quality.md into `dir`. Returns the files written.
std::vector<std::filesystem::path> stage_report(const Corpus& corpus, const std::vector<ConfidenceSeries>& series,
                                                const PipelineConfig& cfg, const std::filesystem::path& dir);

// File-level stage: reads paths.corpus, writes paths.out (or the stage's own
// artifact path).
void run_stage(Stage stage, const PipelineConfig& cfg);

// Writes a raw synthetic corpus (ids, questions, gold answers) and a fixture
// file holding every chat and embedding response the pipeline will request
// for it under `cfg`.
void synthesize_fixture_run(const PipelineConfig& cfg, const std::filesystem::path& corpus_out,
                            const std::filesystem::path& fixtures_out);

// All stages in order inside `workdir`, starting from paths.corpus. Trains
// both a clustering-target and a binary-target calibrator.
void run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& workdir);

}  // namespace auxcal
