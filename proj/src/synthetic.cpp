#include "auxcal/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "auxcal/baselines.hpp"
#include "auxcal/error.hpp"
#include "auxcal/random.hpp"

namespace auxcal {

namespace {

constexpr const char* kAdjectives[] = {"ancient", "coastal", "musical", "royal",  "frozen",
                                       "urban",   "sacred",  "naval",   "lunar",  "desert"};
constexpr const char* kNouns[] = {"rivers", "operas", "empires", "islands", "poets",
                                  "planets", "battles", "temples", "novels", "mountains"};

std::string format_percent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%d%%", static_cast<int>(std::lround(value * 100.0)));
  return buf;
}

std::string nearest_level(double value) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kQualitativeScale.size(); ++i) {
    if (std::abs(kQualitativeScale[i].value - value) < std::abs(kQualitativeScale[best].value - value)) best = i;
  }
  return std::string(kQualitativeScale[best].expression);
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec) {
  std::vector<std::size_t> sizes = spec.cluster_sizes;
  if (sizes.empty()) sizes.assign(spec.clusters, spec.per_cluster);
  if (sizes.empty()) throw PreconditionError("synthetic corpus needs at least one topic");
  if (spec.dim == 0) throw PreconditionError("synthetic dimension must be positive");

  Rng rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SyntheticCorpus out;
  const std::size_t k = sizes.size();
  std::vector<std::vector<double>> centers(k, std::vector<double>(spec.dim));
  for (auto& c : centers) {
    for (double& x : c) x = spec.center_scale * gauss(rng);
  }
  out.topic_accuracy.resize(k);
  for (double& a : out.topic_accuracy) a = unit(rng);
  out.topic_observed_accuracy.assign(k, 0.0);

  std::size_t serial = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t n = sizes[c];
    const double acc = out.topic_accuracy[c];
    std::vector<bool> correct(n);
    if (spec.exact_counts) {
      const auto hits = static_cast<std::size_t>(std::lround(acc * static_cast<double>(n)));
      for (std::size_t i = 0; i < n; ++i) correct[i] = i < hits;
      std::shuffle(correct.begin(), correct.end(), rng);
    } else {
      for (std::size_t i = 0; i < n; ++i) correct[i] = unit(rng) < acc;
    }
    const std::string adjective = kAdjectives[c % std::size(kAdjectives)];
    const std::string noun = kNouns[(c / std::size(kAdjectives)) % std::size(kNouns)];
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i, ++serial) {
      CalibrationRecord r;
      r.id = "syn-" + std::to_string(serial);
      r.question = "In topic " + std::to_string(c) + ", which of the " + adjective + " " + noun + " is entry " +
                   std::to_string(i) + "?";
      const std::string gold = "item" + std::to_string(serial);
      r.gold_answers = {gold, "entry " + gold};
      r.model_answer = correct[i] ? gold : "unknown";
      r.correct = correct[i];
      hits += correct[i] ? 1 : 0;

      const double z = spec.likelihood_slope * (acc - 0.5) + spec.likelihood_bias + spec.likelihood_noise * gauss(rng);
      const double q = std::clamp(logistic(z), 1e-6, 1.0 - 1e-9);
      r.token_logprobs = std::vector<double>{std::log(q)};

      const double verbal = std::clamp(0.6 + 0.35 * q + 0.05 * gauss(rng), 0.0, 1.0);
      if (unit(rng) < spec.verbalized_failure_rate) {
        r.verbalized_percent_raw = "I am not able to judge that.";
      } else {
        r.verbalized_percent_raw = "Confidence: " + format_percent(verbal);
      }
      if (unit(rng) < spec.verbalized_failure_rate) {
        r.verbalized_qual_raw = "It is hard to say.";
      } else {
        r.verbalized_qual_raw = nearest_level(verbal);
      }

      std::vector<double> e(spec.dim);
      for (std::size_t d = 0; d < spec.dim; ++d) e[d] = centers[c][d] + spec.spread * gauss(rng);
      r.embedding = std::move(e);
      out.records.push_back(std::move(r));
      out.topic.push_back(static_cast<int>(c));
    }
    out.topic_observed_accuracy[c] = n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
  }
  return out;
}

Corpus strip_to_inputs(const Corpus& records) {
  Corpus out;
  out.reserve(records.size());
  for (const auto& r : records) {
    CalibrationRecord s;
    s.id = r.id;
    s.question = r.question;
    s.context = r.context;
    s.gold_answers = r.gold_answers;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace auxcal
