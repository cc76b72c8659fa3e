#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "auxcal/corpus.hpp"
#include "auxcal/embedding.hpp"

namespace auxcal {

enum class VerbalizedFeature { none, percent, qualitative };
enum class TargetMode { clustering, binary };

std::string_view to_string(VerbalizedFeature v);
VerbalizedFeature parse_verbalized_feature(std::string_view text);
std::string_view to_string(TargetMode mode);
TargetMode parse_target_mode(std::string_view text);

struct FeatureConfig {
  bool use_question_embedding = true;
  bool use_answer_embedding = false;
  bool use_cot_answer = false;
  VerbalizedFeature use_verbalized = VerbalizedFeature::none;
  // Appends the whitespace token count of the model answer.
  bool answer_length = false;
  // Text is cut to this many whitespace tokens before embedding.
  std::size_t max_tokens = 512;

  bool operator==(const FeatureConfig&) const = default;
};

// Maps a batch of texts to one embedding row per text.
using Embedder = std::function<Matrix(const std::vector<std::string>&)>;

std::string truncate_tokens(std::string_view text, std::size_t max_tokens);

// Feature layout: question ‖ answer ‖ CoT answer ‖ answer length ‖
// verbalized confidence (−1 when it does not parse). Throws
// MissingFieldError when an enabled source is absent.
Matrix featurize_records(std::span<const CalibrationRecord> records, const FeatureConfig& cfg,
                         const Embedder& embedder);
std::vector<double> featurize_record(const CalibrationRecord& record, const FeatureConfig& cfg,
                                     const Embedder& embedder);

struct EvalPoint {
  std::size_t step = 0;
  double validation_loss = 0.0;
};

// Two tanh hidden layers and a logistic output over standardized features.
// Parameters are stored flat: W1 (H×D), b1, W2 (H×H), b2, w3 (H), b3.
struct CalibratorModel {
  FeatureConfig features;
  TargetMode mode = TargetMode::clustering;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
  std::vector<double> params;
  double best_validation_loss = 0.0;
  std::size_t best_step = 0;
  std::vector<EvalPoint> history;

  static std::size_t parameter_count(std::size_t input_dim, std::size_t hidden);
};

// Fan-in scaled uniform initialization; standardization is the identity.
CalibratorModel init_model(std::size_t input_dim, std::size_t hidden, std::uint64_t seed);

double forward_logit(const CalibratorModel& model, std::span<const double> features);
// Confidence in (0,1). Throws PreconditionError on a dimension mismatch.
double forward(const CalibratorModel& model, std::span<const double> features);
std::vector<double> predict(const CalibratorModel& model, const Matrix& features);

struct ClassWeights {
  double incorrect = 1.0;
  double correct = 1.0;
};

// n / (2 * n_c) for each class present; absent classes keep weight 1.
ClassWeights balanced_class_weights(std::span<const double> binary_targets);

struct LossResult {
  double loss = 0.0;
  // d loss / d logit for every batch element.
  std::vector<double> dlogits;
};

// clustering: mean squared error of sigmoid(logit) against the targets.
// binary: class-weighted binary cross-entropy, averaged over the batch.
LossResult compute_loss(std::span<const double> logits, std::span<const double> targets, TargetMode mode,
                        const ClassWeights& weights = {});

struct Dataset {
  Matrix features;
  std::vector<double> targets;
};

// Loss over `rows` of `data` and its gradient with respect to model.params.
double loss_and_gradient(const CalibratorModel& model, const Dataset& data, std::span<const std::size_t> rows,
                         const ClassWeights& weights, std::span<double> grad);

double dataset_loss(const CalibratorModel& model, const Dataset& data, const ClassWeights& weights);

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max);

// Rescales `grads` in place to global L2 norm at most max_norm and returns
// the norm before clipping.
double clip_grad_norm(std::span<double> grads, double max_norm);

struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;
};

struct AdamWHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// One decoupled-weight-decay Adam update with bias-corrected moments.
// Throws NumericError on a non-finite gradient.
void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                const AdamWHyper& hyper);

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  std::size_t batch_size = 32;
  std::size_t max_steps = 1000;
  double grad_clip_norm = 10.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t eval_every = 25;
  std::size_t hidden = 128;
};

// Mini-batch AdamW with a cosine schedule and global-norm clipping.
// Validation loss is measured at step 0, every eval_every steps and at the
// last step; the parameters with the lowest validation loss are returned.
CalibratorModel train_calibrator(const Dataset& train, const Dataset& validation, const TrainConfig& config,
                                 TargetMode mode, const FeatureConfig& features = {});

struct SearchSpace {
  double lr_min = 1e-5;
  double lr_max = 1e-2;
  double wd_min = 1e-4;
  double wd_max = 0.05;
};

struct SearchTrial {
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  double validation_loss = 0.0;
};

struct SearchResult {
  TrainConfig best;
  double best_loss = 0.0;
  std::vector<SearchTrial> trials;
};

// Random search: learning rate log-uniform and weight decay uniform over
// `space`, each trial trained for steps_per_trial steps.
SearchResult search_hyperparameters(const Dataset& train, const Dataset& validation, const TrainConfig& base,
                                    TargetMode mode, const SearchSpace& space = {}, std::size_t trials = 50,
                                    std::size_t steps_per_trial = 250, std::uint64_t seed = 0,
                                    std::size_t workers = 1);

void save_checkpoint(const std::filesystem::path& path, const CalibratorModel& model);
CalibratorModel load_checkpoint(const std::filesystem::path& path);

}  // namespace auxcal
