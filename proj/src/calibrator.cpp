#include "auxcal/calibrator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <tuple>

#include <json.hpp>

#include "auxcal/baselines.hpp"
#include "auxcal/error.hpp"
#include "auxcal/grading.hpp"
#include "auxcal/parallel.hpp"
#include "auxcal/random.hpp"

namespace auxcal {

std::string_view to_string(VerbalizedFeature v) {
  switch (v) {
    case VerbalizedFeature::none: return "none";
    case VerbalizedFeature::percent: return "percent";
    case VerbalizedFeature::qualitative: return "qualitative";
  }
  return "none";
}

VerbalizedFeature parse_verbalized_feature(std::string_view text) {
  if (text == "none") return VerbalizedFeature::none;
  if (text == "percent") return VerbalizedFeature::percent;
  if (text == "qualitative") return VerbalizedFeature::qualitative;
  throw PreconditionError("unknown verbalized feature '" + std::string(text) + "'");
}

std::string_view to_string(TargetMode mode) {
  return mode == TargetMode::clustering ? "clustering" : "binary";
}

TargetMode parse_target_mode(std::string_view text) {
  if (text == "clustering") return TargetMode::clustering;
  if (text == "binary") return TargetMode::binary;
  throw PreconditionError("unknown target mode '" + std::string(text) + "'");
}

std::string truncate_tokens(std::string_view text, std::size_t max_tokens) {
  std::size_t count = 0;
  std::size_t i = 0;
  std::size_t token_end = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == text.size()) break;
    // Cut right after the last kept token.
    if (count == max_tokens) return std::string(text.substr(0, token_end));
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    token_end = i;
    ++count;
  }
  return std::string(text);
}

namespace {

bool any_source(const FeatureConfig& cfg) {
  return cfg.use_question_embedding || cfg.use_answer_embedding || cfg.use_cot_answer ||
         cfg.use_verbalized != VerbalizedFeature::none || cfg.answer_length;
}

const std::string& need(const std::optional<std::string>& field, const char* name, const CalibrationRecord& r) {
  if (!field) throw MissingFieldError(name, r.id);
  return *field;
}

}  // namespace

Matrix featurize_records(std::span<const CalibrationRecord> records, const FeatureConfig& cfg,
                         const Embedder& embedder) {
  if (!any_source(cfg)) throw PreconditionError("feature config enables no source");
  const std::size_t n = records.size();

  // Collect texts that still need embedding, in a fixed order.
  std::vector<std::string> texts;
  std::vector<std::size_t> question_slot(n), answer_slot(n), cot_slot(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = records[i];
    if (cfg.use_question_embedding && !r.embedding) {
      question_slot[i] = texts.size();
      texts.push_back(truncate_tokens(r.question, cfg.max_tokens));
    }
    if (cfg.use_answer_embedding) {
      answer_slot[i] = texts.size();
      texts.push_back(truncate_tokens(need(r.model_answer, "model_answer", r), cfg.max_tokens));
    }
    if (cfg.use_cot_answer) {
      cot_slot[i] = texts.size();
      texts.push_back(truncate_tokens(need(r.cot_answer, "cot_answer", r), cfg.max_tokens));
    }
    if (cfg.use_verbalized == VerbalizedFeature::percent) need(r.verbalized_percent_raw, "verbalized_percent_raw", r);
    if (cfg.use_verbalized == VerbalizedFeature::qualitative) need(r.verbalized_qual_raw, "verbalized_qual_raw", r);
    if (cfg.answer_length) need(r.model_answer, "model_answer", r);
  }
  Matrix embedded;
  if (!texts.empty()) {
    if (!embedder) throw PreconditionError("features need text embeddings but no embedder was given");
    embedded = embedder(texts);
    if (embedded.rows() != texts.size()) throw ValidationError("embedder returned the wrong number of rows");
  }

  std::size_t dim_q = 0;
  if (cfg.use_question_embedding) {
    for (const auto& r : records) {
      if (r.embedding) {
        dim_q = r.embedding->size();
        break;
      }
    }
    if (dim_q == 0) dim_q = embedded.cols();
  }
  const std::size_t dim_text = embedded.cols();
  const std::size_t width = dim_q + (cfg.use_answer_embedding ? dim_text : 0) + (cfg.use_cot_answer ? dim_text : 0) +
                            (cfg.answer_length ? 1 : 0) + (cfg.use_verbalized != VerbalizedFeature::none ? 1 : 0);
  Matrix out(n, width);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = records[i];
    auto row = out.row(i);
    std::size_t col = 0;
    auto put = [&](std::span<const double> v, std::size_t expect) {
      if (v.size() != expect) throw ValidationError("embedding dimension mismatch on record '" + r.id + "'");
      std::copy(v.begin(), v.end(), row.begin() + static_cast<std::ptrdiff_t>(col));
      col += v.size();
    };
    if (cfg.use_question_embedding) {
      if (r.embedding) {
        put(*r.embedding, dim_q);
      } else {
        put(embedded.row(question_slot[i]), dim_q);
      }
    }
    if (cfg.use_answer_embedding) put(embedded.row(answer_slot[i]), dim_text);
    if (cfg.use_cot_answer) put(embedded.row(cot_slot[i]), dim_text);
    if (cfg.answer_length) row[col++] = static_cast<double>(tokenize(*r.model_answer).size());
    if (cfg.use_verbalized != VerbalizedFeature::none) {
      const auto parsed = cfg.use_verbalized == VerbalizedFeature::percent
                              ? parse_verbalized_percent(*r.verbalized_percent_raw)
                              : parse_verbalized_qualitative(*r.verbalized_qual_raw);
      row[col++] = parsed.value_or(-1.0);
    }
  }
  return out;
}

std::vector<double> featurize_record(const CalibrationRecord& record, const FeatureConfig& cfg,
                                     const Embedder& embedder) {
  const Matrix m = featurize_records(std::span(&record, 1), cfg, embedder);
  return {m.row(0).begin(), m.row(0).end()};
}

std::size_t CalibratorModel::parameter_count(std::size_t d, std::size_t h) {
  return h * d + h + h * h + h + h + 1;
}

namespace {

struct ParamView {
  std::span<const double> w1, b1, w2, b2, w3;
  double b3;
};

struct GradView {
  std::span<double> w1, b1, w2, b2, w3;
  double* b3;
};

template <typename Span>
auto carve(Span flat, std::size_t d, std::size_t h) {
  std::size_t at = 0;
  auto take = [&](std::size_t len) {
    auto s = flat.subspan(at, len);
    at += len;
    return s;
  };
  auto w1 = take(h * d);
  auto b1 = take(h);
  auto w2 = take(h * h);
  auto b2 = take(h);
  auto w3 = take(h);
  return std::tuple{w1, b1, w2, b2, w3, flat.subspan(at, 1)};
}

// Activations of one forward pass, kept for backprop.
struct Trace {
  std::vector<double> x, h1, h2;
};

double run_forward(const CalibratorModel& m, std::span<const double> features, Trace& t) {
  const std::size_t d = m.input_dim, h = m.hidden;
  auto [w1, b1, w2, b2, w3, b3] = carve(std::span<const double>(m.params), d, h);
  t.x.resize(d);
  for (std::size_t j = 0; j < d; ++j) t.x[j] = (features[j] - m.feature_mean[j]) / m.feature_scale[j];
  t.h1.resize(h);
  for (std::size_t i = 0; i < h; ++i) {
    double a = b1[i];
    const double* w = w1.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) a += w[j] * t.x[j];
    t.h1[i] = std::tanh(a);
  }
  t.h2.resize(h);
  for (std::size_t i = 0; i < h; ++i) {
    double a = b2[i];
    const double* w = w2.data() + i * h;
    for (std::size_t j = 0; j < h; ++j) a += w[j] * t.h1[j];
    t.h2[i] = std::tanh(a);
  }
  double z = b3[0];
  for (std::size_t i = 0; i < h; ++i) z += w3[i] * t.h2[i];
  return z;
}

void run_backward(const CalibratorModel& m, const Trace& t, double dz, std::span<double> grad,
                  std::vector<double>& scratch) {
  const std::size_t d = m.input_dim, h = m.hidden;
  auto [w1, b1, w2, b2, w3, b3] = carve(std::span<const double>(m.params), d, h);
  auto [gw1, gb1, gw2, gb2, gw3, gb3] = carve(grad, d, h);
  gb3[0] += dz;
  scratch.assign(2 * h, 0.0);
  double* da2 = scratch.data();
  double* da1 = scratch.data() + h;
  for (std::size_t i = 0; i < h; ++i) {
    gw3[i] += dz * t.h2[i];
    da2[i] = dz * w3[i] * (1.0 - t.h2[i] * t.h2[i]);
  }
  for (std::size_t i = 0; i < h; ++i) {
    gb2[i] += da2[i];
    double* g = gw2.data() + i * h;
    const double* w = w2.data() + i * h;
    for (std::size_t j = 0; j < h; ++j) {
      g[j] += da2[i] * t.h1[j];
      da1[j] += da2[i] * w[j];
    }
  }
  for (std::size_t j = 0; j < h; ++j) da1[j] *= 1.0 - t.h1[j] * t.h1[j];
  for (std::size_t i = 0; i < h; ++i) {
    gb1[i] += da1[i];
    double* g = gw1.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) g[j] += da1[i] * t.x[j];
  }
}

void check_dim(const CalibratorModel& m, std::size_t got) {
  if (got != m.input_dim) {
    throw PreconditionError("feature length " + std::to_string(got) + " does not match model input " +
                            std::to_string(m.input_dim));
  }
}

}  // namespace

CalibratorModel init_model(std::size_t input_dim, std::size_t hidden, std::uint64_t seed) {
  if (input_dim == 0 || hidden == 0) throw PreconditionError("model dimensions must be positive");
  CalibratorModel m;
  m.input_dim = input_dim;
  m.hidden = hidden;
  m.feature_mean.assign(input_dim, 0.0);
  m.feature_scale.assign(input_dim, 1.0);
  m.params.resize(CalibratorModel::parameter_count(input_dim, hidden));
  Rng rng(seed);
  auto [w1, b1, w2, b2, w3, b3] = carve(std::span<double>(m.params), input_dim, hidden);
  auto fill = [&](std::span<double> s, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& x : s) x = u(rng);
  };
  fill(w1, input_dim);
  fill(b1, input_dim);
  fill(w2, hidden);
  fill(b2, hidden);
  fill(w3, hidden);
  fill(b3, hidden);
  return m;
}

double forward_logit(const CalibratorModel& model, std::span<const double> features) {
  check_dim(model, features.size());
  Trace t;
  return run_forward(model, features, t);
}

double forward(const CalibratorModel& model, std::span<const double> features) {
  return logistic(forward_logit(model, features));
}

std::vector<double> predict(const CalibratorModel& model, const Matrix& features) {
  check_dim(model, features.cols());
  std::vector<double> out(features.rows());
  Trace t;
  for (std::size_t i = 0; i < features.rows(); ++i) out[i] = logistic(run_forward(model, features.row(i), t));
  return out;
}

ClassWeights balanced_class_weights(std::span<const double> targets) {
  std::size_t pos = 0, neg = 0;
  for (double y : targets) (y >= 0.5 ? pos : neg) += 1;
  const double n = static_cast<double>(targets.size());
  ClassWeights w;
  if (pos > 0) w.correct = n / (2.0 * static_cast<double>(pos));
  if (neg > 0) w.incorrect = n / (2.0 * static_cast<double>(neg));
  return w;
}

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

LossResult compute_loss(std::span<const double> logits, std::span<const double> targets, TargetMode mode,
                        const ClassWeights& weights) {
  if (logits.empty()) throw PreconditionError("loss of an empty batch");
  if (logits.size() != targets.size()) throw PreconditionError("logits and targets differ in length");
  const double n = static_cast<double>(logits.size());
  LossResult out;
  out.dlogits.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i], t = targets[i];
    if (!(t >= 0.0 && t <= 1.0)) throw PreconditionError("target outside [0,1]");
    const double p = logistic(z);
    if (mode == TargetMode::clustering) {
      const double r = p - t;
      out.loss += r * r;
      out.dlogits[i] = 2.0 * r * p * (1.0 - p) / n;
    } else {
      if (t != 0.0 && t != 1.0) throw PreconditionError("binary mode needs targets in {0,1}");
      const double w = t == 1.0 ? weights.correct : weights.incorrect;
      // -t log p - (1-t) log(1-p) = softplus(z) - t z
      out.loss += w * (softplus(z) - t * z);
      out.dlogits[i] = w * (p - t) / n;
    }
  }
  out.loss /= n;
  return out;
}

double loss_and_gradient(const CalibratorModel& model, const Dataset& data, std::span<const std::size_t> rows,
                         const ClassWeights& weights, std::span<double> grad) {
  check_dim(model, data.features.cols());
  if (grad.size() != model.params.size()) throw PreconditionError("gradient buffer has the wrong size");
  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<Trace> traces(rows.size());
  std::vector<double> logits(rows.size()), targets(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    logits[k] = run_forward(model, data.features.row(rows[k]), traces[k]);
    targets[k] = data.targets[rows[k]];
  }
  const LossResult loss = compute_loss(logits, targets, model.mode, weights);
  std::vector<double> scratch;
  for (std::size_t k = 0; k < rows.size(); ++k) run_backward(model, traces[k], loss.dlogits[k], grad, scratch);
  return loss.loss;
}

double dataset_loss(const CalibratorModel& model, const Dataset& data, const ClassWeights& weights) {
  check_dim(model, data.features.cols());
  std::vector<double> logits(data.features.rows());
  Trace t;
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = run_forward(model, data.features.row(i), t);
  return compute_loss(logits, data.targets, model.mode, weights).loss;
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max) {
  if (step > total_steps) throw PreconditionError("step beyond the schedule length");
  if (total_steps == 0) return lr_max;
  constexpr double kPi = 3.14159265358979323846;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_max * 0.5 * (1.0 + std::cos(kPi * progress));
}

double clip_grad_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                const AdamWHyper& hyper) {
  if (params.size() != grads.size()) throw PreconditionError("parameter and gradient shapes differ");
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient");
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw PreconditionError("optimizer state has the wrong shape");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grads[i];
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= hyper.lr * (m_hat / (std::sqrt(v_hat) + hyper.eps) + hyper.weight_decay * params[i]);
  }
}

namespace {

void check_dataset(const Dataset& d, const char* name) {
  if (d.features.rows() != d.targets.size()) {
    throw PreconditionError(std::string(name) + " features and targets differ in length");
  }
}

void standardize_from(CalibratorModel& m, const Matrix& x) {
  const std::size_t n = x.rows();
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    m.feature_mean[c] = mean;
    m.feature_scale[c] = sd > 1e-12 ? sd : 1.0;
  }
}

}  // namespace

CalibratorModel train_calibrator(const Dataset& train, const Dataset& validation, const TrainConfig& config,
                                 TargetMode mode, const FeatureConfig& features) {
  check_dataset(train, "training");
  check_dataset(validation, "validation");
  if (train.targets.empty()) throw PreconditionError("empty training set");
  if (validation.targets.empty()) throw PreconditionError("empty validation set");
  if (!(config.learning_rate > 0.0)) throw PreconditionError("learning_rate must be positive");
  if (config.batch_size < 1) throw PreconditionError("batch_size must be at least 1");
  if (validation.features.cols() != train.features.cols()) {
    throw PreconditionError("training and validation feature widths differ");
  }
  if (mode == TargetMode::binary) {
    for (double t : train.targets) {
      if (t != 0.0 && t != 1.0) throw PreconditionError("binary mode needs targets in {0,1}");
    }
  }

  CalibratorModel model = init_model(train.features.cols(), config.hidden, config.seed);
  model.mode = mode;
  model.features = features;
  standardize_from(model, train.features);
  const ClassWeights weights =
      mode == TargetMode::binary ? balanced_class_weights(train.targets) : ClassWeights{};

  auto evaluate = [&](std::size_t step, CalibratorModel& best) {
    const double loss = dataset_loss(model, validation, weights);
    model.history.push_back({step, loss});
    if (std::isfinite(loss) && (!std::isfinite(best.best_validation_loss) || loss < best.best_validation_loss)) {
      best.params = model.params;
      best.best_validation_loss = loss;
      best.best_step = step;
    }
  };

  CalibratorModel best = model;
  best.best_validation_loss = std::numeric_limits<double>::infinity();
  evaluate(0, best);

  const std::size_t n = train.targets.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(config.seed, std::uint64_t{1}));
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  AdamWState state;
  AdamWHyper hyper{config.learning_rate, config.beta1, config.beta2, config.eps, config.weight_decay};
  std::vector<double> grad(model.params.size());
  std::vector<std::size_t> batch(std::min(config.batch_size, n));

  for (std::size_t step = 1; step <= config.max_steps; ++step) {
    for (auto& idx : batch) {
      if (cursor == n) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      idx = order[cursor++];
    }
    loss_and_gradient(model, train, batch, weights, grad);
    clip_grad_norm(grad, config.grad_clip_norm);
    hyper.lr = cosine_lr(step - 1, config.max_steps, config.learning_rate);
    adamw_step(model.params, grad, state, hyper);
    if (step % config.eval_every == 0 || step == config.max_steps) evaluate(step, best);
  }

  if (!std::isfinite(best.best_validation_loss)) throw NumericError("no finite validation loss during training");
  best.history = model.history;
  return best;
}

SearchResult search_hyperparameters(const Dataset& train, const Dataset& validation, const TrainConfig& base,
                                    TargetMode mode, const SearchSpace& space, std::size_t trials,
                                    std::size_t steps_per_trial, std::uint64_t seed, std::size_t workers) {
  if (trials < 1) throw PreconditionError("need at least one search trial");
  SearchResult result;
  result.trials.resize(trials);
  Rng rng(seed);
  std::uniform_real_distribution<double> log_lr(std::log(space.lr_min), std::log(space.lr_max));
  std::uniform_real_distribution<double> wd(space.wd_min, space.wd_max);
  for (auto& t : result.trials) {
    t.learning_rate = std::exp(log_lr(rng));
    t.weight_decay = wd(rng);
  }
  parallel_for(trials, workers, [&](std::size_t i) {
    TrainConfig cfg = base;
    cfg.learning_rate = result.trials[i].learning_rate;
    cfg.weight_decay = result.trials[i].weight_decay;
    cfg.max_steps = steps_per_trial;
    try {
      result.trials[i].validation_loss = train_calibrator(train, validation, cfg, mode).best_validation_loss;
    } catch (const NumericError&) {
      result.trials[i].validation_loss = std::numeric_limits<double>::infinity();
    }
  });
  std::size_t best = trials;
  for (std::size_t i = 0; i < trials; ++i) {
    const double loss = result.trials[i].validation_loss;
    if (!std::isfinite(loss)) continue;
    if (best == trials || loss < result.trials[best].validation_loss) best = i;
  }
  if (best == trials) throw NumericError("every search trial diverged");
  result.best = base;
  result.best.learning_rate = result.trials[best].learning_rate;
  result.best.weight_decay = result.trials[best].weight_decay;
  result.best_loss = result.trials[best].validation_loss;
  return result;
}

namespace {

constexpr const char* kCheckpointFormat = "auxcal.calibrator";
constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CalibratorModel& m) {
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["target_mode"] = std::string(to_string(m.mode));
  j["features"] = {
      {"use_question_embedding", m.features.use_question_embedding},
      {"use_answer_embedding", m.features.use_answer_embedding},
      {"use_cot_answer", m.features.use_cot_answer},
      {"use_verbalized", std::string(to_string(m.features.use_verbalized))},
      {"answer_length", m.features.answer_length},
      {"max_tokens", m.features.max_tokens},
  };
  j["input_dim"] = m.input_dim;
  j["hidden"] = m.hidden;
  j["feature_mean"] = m.feature_mean;
  j["feature_scale"] = m.feature_scale;
  j["params"] = m.params;
  j["best_validation_loss"] = m.best_validation_loss;
  j["best_step"] = m.best_step;
  auto& hist = j["history"] = nlohmann::ordered_json::array();
  for (const auto& e : m.history) hist.push_back({{"step", e.step}, {"validation_loss", e.validation_loss}});
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PreconditionError("cannot write checkpoint '" + path.string() + "'");
  out << j.dump(1) << '\n';
}

CalibratorModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open checkpoint '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
  }
  try {
    if (j.at("format") != kCheckpointFormat || j.at("version") != kCheckpointVersion) {
      throw ValidationError("unsupported checkpoint format in '" + path.string() + "'");
    }
    CalibratorModel m;
    m.mode = parse_target_mode(j.at("target_mode").get<std::string>());
    const auto& f = j.at("features");
    m.features.use_question_embedding = f.at("use_question_embedding");
    m.features.use_answer_embedding = f.at("use_answer_embedding");
    m.features.use_cot_answer = f.at("use_cot_answer");
    m.features.use_verbalized = parse_verbalized_feature(f.at("use_verbalized").get<std::string>());
    m.features.answer_length = f.at("answer_length");
    m.features.max_tokens = f.at("max_tokens");
    m.input_dim = j.at("input_dim");
    m.hidden = j.at("hidden");
    m.feature_mean = j.at("feature_mean").get<std::vector<double>>();
    m.feature_scale = j.at("feature_scale").get<std::vector<double>>();
    m.params = j.at("params").get<std::vector<double>>();
    m.best_validation_loss = j.at("best_validation_loss");
    m.best_step = j.at("best_step");
    for (const auto& e : j.at("history")) m.history.push_back({e.at("step"), e.at("validation_loss")});
    if (m.params.size() != CalibratorModel::parameter_count(m.input_dim, m.hidden) ||
        m.feature_mean.size() != m.input_dim || m.feature_scale.size() != m.input_dim) {
      throw ValidationError("checkpoint shapes are inconsistent");
    }
    for (double p : m.params) {
      if (!std::isfinite(p)) throw ValidationError("checkpoint holds non-finite parameters");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint '" + path.string() + "' is malformed: " + e.what());
  }
}

}  // namespace auxcal
