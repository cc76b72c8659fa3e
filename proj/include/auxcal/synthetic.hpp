#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "auxcal/corpus.hpp"

namespace auxcal {

// Topic-clustered QA corpus with a simulated LLM. Each topic has a latent
// accuracy; records carry answers, graded correctness, token logprobs of an
// overconfident likelihood, verbalized confidence text and an embedding.
struct SyntheticSpec {
  std::size_t clusters = 50;
  std::size_t per_cluster = 200;
  // When nonempty, overrides clusters/per_cluster with explicit sizes.
  std::vector<std::size_t> cluster_sizes;
  std::size_t dim = 32;
  double center_scale = 10.0;
  double spread = 1.0;
  // Exactly round(accuracy * size) correct records per topic instead of
  // independent Bernoulli draws.
  bool exact_counts = false;
  // Logit offset and slope of the simulated likelihood.
  double likelihood_bias = 1.5;
  double likelihood_slope = 3.0;
  double likelihood_noise = 0.5;
  // Share of verbalized replies that contain no parseable confidence.
  double verbalized_failure_rate = 0.1;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  Corpus records;
  // Topic of each record and the latent accuracy of each topic.
  std::vector<int> topic;
  std::vector<double> topic_accuracy;
  // Realized share of correct records per topic.
  std::vector<double> topic_observed_accuracy;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec);

// Keeps only id, question and gold_answers.
Corpus strip_to_inputs(const Corpus& records);

}  // namespace auxcal
