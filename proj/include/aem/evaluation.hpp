#pragma once

#include <functional>
#include <string>
#include <vector>

#include "aem/corpus.hpp"
#include "aem/events.hpp"

namespace aem {

// Reference term sets for one true event, one list per field.
struct GoldEvent {
  std::string name;
  std::array<std::vector<std::string>, kNumFields> terms;
};

// Term lists presented for matching: the top-10 terms per field of one
// predicted event (decoded generator output or k-means centroid).
using PredictedTerms = std::array<std::vector<std::string>, kNumFields>;

struct EventMatch {
  int predicted = -1;
  int gold = -1;
  double similarity = 0.0;
  bool correct = false;  // similarity >= threshold
};

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  std::vector<EventMatch> matching;
  int num_predicted = 0;
  int num_gold = 0;
  double seconds = 0.0;
};

inline constexpr double kDefaultCorrectThreshold = 0.3;
inline constexpr int kMatchTermCount = 10;

// Exact minimum-cost assignment (rows to columns) for a square or
// rectangular cost matrix; unmatched rows get -1. O(n^3).
std::vector<int> hungarian_min_assignment(const Matrix& cost);

// Optimal one-to-one matching maximizing total similarity, where similarity
// is the mean per-field Jaccard between predicted top-10 terms and the gold
// sets (fields empty on both sides are skipped). A predicted event is
// correct when its matched similarity clears the threshold.
std::vector<EventMatch> match_events(const std::vector<PredictedTerms>& predicted,
                                     const std::vector<GoldEvent>& gold,
                                     double correct_threshold = kDefaultCorrectThreshold);

// precision = correct / predicted, recall = correct / gold,
// f = harmonic mean (0 when both are 0).
EvalReport precision_recall_f(const std::vector<EventMatch>& matching,
                              int num_predicted, int num_gold);

double f_measure(double precision, double recall);

// Top-10 terms per field for every event of a decoded table.
std::vector<PredictedTerms> table_to_predicted_terms(const EventTable& table,
                                                     const FieldVocabularies& vocabs);

// ---------------------------------------------------------------------------
// K-means baseline (Lloyd + k-means++ seeding, 10 restarts, best inertia)
// ---------------------------------------------------------------------------
struct KMeansResult {
  std::vector<int> assignment;
  Matrix centroids;  // k x V
  double inertia = 0.0;
  int iterations = 0;
};

KMeansResult kmeans_baseline(const Matrix& doc_vectors, int k, std::uint64_t seed,
                             int restarts = 10, int max_iterations = 100);

// Centroid rows split into field blocks and decoded to top-10 terms.
std::vector<PredictedTerms> centroids_to_predicted_terms(
    const Matrix& centroids, const FieldVocabularies& vocabs);

// ---------------------------------------------------------------------------
// Synthetic corpora with known ground truth
// ---------------------------------------------------------------------------
struct SyntheticSpec {
  int true_events = 10;
  int docs_per_event = 100;
  std::array<int, kNumFields> vocab_sizes{40, 40, 40, 40};
  int tokens_per_field = 8;
  double noise_rate = 0.2;  // in [0, 1)
  std::uint64_t seed = 7;

  // Ground truth, per field: true_events rows of vocab_sizes[f] probabilities.
  std::array<std::vector<std::vector<double>>, kNumFields> truth;
  // Characteristic terms per event and field (the reference sets for gold).
  std::array<std::vector<std::vector<std::string>>, kNumFields> salient;
  std::array<std::vector<std::string>, kNumFields> vocab_terms;
};

// Fills truth/salient/vocab_terms: every event concentrates `salient_mass`
// on its own block of vocab/true_events terms (shuffled round-robin, so
// blocks are disjoint when the vocabulary is large enough) and spreads the
// rest uniformly.
SyntheticSpec make_synthetic_spec(int true_events, int docs_per_event,
                                  int vocab_size, int tokens_per_field,
                                  double noise_rate, std::uint64_t seed,
                                  double salient_mass = 0.85);

// Documents draw tokens_per_field tokens per field from their event's truth
// distribution; each token is replaced by a uniform-random vocabulary term
// with probability noise_rate. Records carry their gold label.
std::pair<Corpus, std::vector<GoldEvent>> generate_synthetic_corpus(
    const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Timing
// ---------------------------------------------------------------------------
struct TimedMethod {
  std::string name;
  std::function<void()> run;
};

// Wall-clock seconds per method; the methods capture pre-loaded data, so
// data loading is excluded by construction.
std::vector<std::pair<std::string, double>> timing_harness(
    std::vector<TimedMethod> methods);

}  // namespace aem
