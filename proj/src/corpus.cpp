#include "aem/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "aem/errors.hpp"

namespace aem {

long FieldVocabulary::index_of(const std::string& term) const {
  auto it = std::lower_bound(terms.begin(), terms.end(), term);
  if (it == terms.end() || *it != term) return -1;
  return static_cast<long>(it - terms.begin());
}

long default_min_df(std::size_t corpus_size) { return corpus_size > 5000 ? 3 : 1; }

FieldVocabularies build_vocabularies(const Corpus& corpus, long min_df) {
  if (corpus.empty()) throw ConfigError("build_vocabularies: empty corpus");
  if (min_df < 1) throw ConfigError("build_vocabularies: min_df must be >= 1");

  FieldVocabularies vocabs;
  const long n_docs = static_cast<long>(corpus.size());
  for (int f = 0; f < kNumFields; ++f) {
    // document frequency over the raw pseudo-corpus (terms counted once per doc)
    std::map<std::string, long> df;
    for (const DocumentRecord& doc : corpus) {
      std::set<std::string> seen(doc.fields[f].begin(), doc.fields[f].end());
      for (const std::string& term : seen) df[term] += 1;
    }
    FieldVocabulary& vocab = vocabs[f];
    vocab.corpus_size = n_docs;
    for (const auto& [term, count] : df) {  // std::map iterates sorted
      if (count < min_df) continue;
      vocab.terms.push_back(term);
      vocab.document_frequency.push_back(count);
      vocab.idf.push_back(std::log(static_cast<double>(n_docs) /
                                   static_cast<double>(count)));
    }
  }
  return vocabs;
}

DocVector represent_document(const DocumentRecord& doc,
                             const FieldVocabularies& vocabs) {
  DocVector out;
  std::size_t total = 0;
  for (int f = 0; f < kNumFields; ++f) total += vocabs[f].size();
  out.concat.assign(total, 0.0);

  std::size_t offset = 0;
  for (int f = 0; f < kNumFields; ++f) {
    const FieldVocabulary& vocab = vocabs[f];
    std::vector<double>& dist = out.field_dist[f];
    dist.assign(vocab.size(), 0.0);

    double token_count = 0.0;
    for (const std::string& token : doc.fields[f]) {
      const long idx = vocab.index_of(token);
      if (idx < 0) continue;  // out of vocabulary
      dist[static_cast<std::size_t>(idx)] += 1.0;
      token_count += 1.0;
    }
    if (token_count > 0.0) {
      double weight_sum = 0.0;
      for (std::size_t i = 0; i < dist.size(); ++i) {
        dist[i] = dist[i] / token_count * vocab.idf[i];
        weight_sum += dist[i];
      }
      if (weight_sum > 0.0) {
        for (double& v : dist) v /= weight_sum;
      } else {
        // every retained term appears in all documents (idf 0), e.g. a
        // single-document corpus; fall back to plain normalized tf
        for (const std::string& token : doc.fields[f]) {
          const long idx = vocab.index_of(token);
          if (idx >= 0) dist[static_cast<std::size_t>(idx)] += 1.0 / token_count;
        }
      }
    }
    std::copy(dist.begin(), dist.end(), out.concat.begin() + offset);
    offset += vocab.size();
  }
  return out;
}

Matrix represent_corpus(const Corpus& corpus, const FieldVocabularies& vocabs) {
  const std::size_t total = total_vocab_dim(vocabs);
  Matrix m(corpus.size(), total);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(corpus.size()); ++i) {
    const DocVector dv = represent_document(corpus[static_cast<std::size_t>(i)], vocabs);
    std::copy(dv.concat.begin(), dv.concat.end(), m[static_cast<std::size_t>(i)]);
  }
  return m;
}

std::size_t total_vocab_dim(const FieldVocabularies& vocabs) {
  std::size_t total = 0;
  for (const FieldVocabulary& v : vocabs) total += v.size();
  return total;
}

std::array<int, kNumFields> field_dims(const FieldVocabularies& vocabs) {
  std::array<int, kNumFields> dims{};
  for (int f = 0; f < kNumFields; ++f) dims[f] = static_cast<int>(vocabs[f].size());
  return dims;
}

}  // namespace aem
