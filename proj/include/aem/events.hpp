#pragma once

#include <string>
#include <vector>

#include "aem/corpus.hpp"
#include "aem/model.hpp"

namespace aem {

// One-hot selector for latent event `index` out of `event_count`.
struct EventSeed {
  int event_count = 0;
  int index = 0;  // 0-based

  std::vector<double> vec() const {
    std::vector<double> v(event_count, 0.0);
    v[index] = 1.0;
    return v;
  }
};

// A decoded event: one probability vector per field plus bookkeeping.
struct Event {
  std::array<std::vector<double>, kNumFields> dist;
  long support = 0;  // documents assigned to this event
};

struct EventTable {
  std::vector<Event> events;
  std::array<int, kNumFields> field_sizes{};
};

struct Assignment {
  int event = -1;  // -1 = null assignment (zero document vector)
  double score = 0.0;
};

// Feeds every one-hot seed through the generator in inference mode and
// splits the output into the four field distributions. The generator's
// batch-norm running statistics must have seen at least one training batch.
EventTable decode_events(GeneratorParams& gen);

// The n highest-probability terms of one field, descending, ties broken
// lexicographically.
std::vector<std::pair<std::string, double>> top_terms(
    std::span<const double> dist, const FieldVocabulary& vocab, int n);

// Convenience: top n terms for all four fields of an event.
std::array<std::vector<std::pair<std::string, double>>, kNumFields> top_words(
    const Event& event, const FieldVocabularies& vocabs, int n);

// Cosine similarity between the document vector and the event's concatenated
// distributions, argmax over events. Zero documents get a null assignment.
// Updates each event's support count.
std::vector<Assignment> assign_documents(const Matrix& doc_vectors,
                                         EventTable& events);

// Greedily merges event pairs whose top-10 keyword sets overlap with Jaccard
// >= threshold, keeping the event with larger support, then reassigns the
// documents. Supports in `events` must be current (run assign_documents
// first).
std::pair<EventTable, std::vector<Assignment>> merge_duplicate_events(
    const EventTable& events, double overlap_threshold,
    const Matrix& doc_vectors, const FieldVocabularies& vocabs);

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

}  // namespace aem
