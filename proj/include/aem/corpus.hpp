#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "aem/matrix.hpp"

namespace aem {

// Field order is fixed everywhere: entities, locations, keywords, dates.
// For news-style corpora the same four slots carry organization, location,
// person, keyword; the slot names are roles, not hard-coded semantics.
inline constexpr int kNumFields = 4;
inline constexpr std::array<const char*, kNumFields> kFieldNames = {
    "entities", "locations", "keywords", "dates"};

// One pre-tagged document. Tagging (NER, POS, stopword removal) happens
// upstream; records arrive with the four token lists already extracted.
struct DocumentRecord {
  std::string id;
  std::array<std::vector<std::string>, kNumFields> fields;
  std::optional<std::string> gold_event;
};

using Corpus = std::vector<DocumentRecord>;

// Per-field term statistics. Terms are sorted lexicographically so a corpus
// maps to exactly one vocabulary.
struct FieldVocabulary {
  std::vector<std::string> terms;
  std::vector<long> document_frequency;
  long corpus_size = 0;  // documents in the whole corpus, empty fields included
  std::vector<double> idf;  // ln(corpus_size / document_frequency)

  std::size_t size() const { return terms.size(); }
  // -1 when the term is out of vocabulary
  long index_of(const std::string& term) const;
};

using FieldVocabularies = std::array<FieldVocabulary, kNumFields>;

// A document as the concatenation of four normalized tf-idf distributions.
// A field with no in-vocabulary tokens contributes an all-zero block.
struct DocVector {
  std::array<std::vector<double>, kNumFields> field_dist;
  std::vector<double> concat;
};

// Builds the four vocabularies. Document frequency is counted on the raw
// pseudo-corpus first; terms with df < min_df are dropped afterwards and the
// survivors keep their raw df. A field whose vocabulary ends up empty is
// legal (its block just disappears from the concatenation).
FieldVocabularies build_vocabularies(const Corpus& corpus, long min_df);

// min_df used when the caller does not pick one: 1 for small corpora,
// 3 above 5000 documents.
long default_min_df(std::size_t corpus_size);

// Per field: tf_i = count_i / total count, weight_i = tf_i * idf_i, then the
// weights are renormalized to sum to one. Out-of-vocabulary tokens are
// ignored. When every retained term has idf 0 the normalized tf vector is
// used instead, so the block still sums to one.
DocVector represent_document(const DocumentRecord& doc,
                             const FieldVocabularies& vocabs);

// Row i is represent_document(corpus[i]); columns are the in-order
// concatenation of the four field blocks.
Matrix represent_corpus(const Corpus& corpus, const FieldVocabularies& vocabs);

std::size_t total_vocab_dim(const FieldVocabularies& vocabs);
std::array<int, kNumFields> field_dims(const FieldVocabularies& vocabs);

}  // namespace aem
