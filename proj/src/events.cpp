#include "aem/events.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "aem/errors.hpp"

namespace aem {

namespace {

constexpr int kMergeTermCount = 10;  // keyword set size for duplicate detection
constexpr int kKeywordField = 2;

std::vector<double> event_concat(const Event& e) {
  std::vector<double> out;
  for (const auto& d : e.dist) out.insert(out.end(), d.begin(), d.end());
  return out;
}

std::vector<std::string> term_set(const Event& e, const FieldVocabularies& vocabs,
                                  int field, int n) {
  std::vector<std::string> terms;
  for (const auto& [term, prob] : top_terms(e.dist[field], vocabs[field], n))
    if (prob > 0.0) terms.push_back(term);  // zero mass is not part of the event
  return terms;
}

}  // namespace

EventTable decode_events(GeneratorParams& gen) {
  for (const GeneratorSubnet& s : gen.subnets)
    if (s.lin.out_dim() > 0 && s.bn.updates == 0)
      throw ContractViolation(
          "decode_events: batch-norm running statistics are unpopulated; "
          "train the generator first");

  const int e_count = gen.event_count;
  const Matrix seeds = Matrix::identity(static_cast<std::size_t>(e_count));
  const Matrix out = generator_forward(gen, seeds, NormMode::kInference, nullptr);

  EventTable table;
  table.field_sizes = gen.field_sizes;
  table.events.resize(e_count);
  for (int t = 0; t < e_count; ++t) {
    std::size_t offset = 0;
    for (int f = 0; f < kNumFields; ++f) {
      const auto width = static_cast<std::size_t>(gen.field_sizes[f]);
      auto& dist = table.events[t].dist[f];
      dist.assign(out[t] + offset, out[t] + offset + width);
      offset += width;
    }
  }
  return table;
}

std::vector<std::pair<std::string, double>> top_terms(
    std::span<const double> dist, const FieldVocabulary& vocab, int n) {
  if (dist.size() != vocab.size())
    throw ContractViolation("top_terms: distribution/vocabulary size mismatch");
  if (n > static_cast<int>(vocab.size())) n = static_cast<int>(vocab.size());

  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dist[a] != dist[b]) return dist[a] > dist[b];
    return vocab.terms[a] < vocab.terms[b];
  });
  std::vector<std::pair<std::string, double>> out;
  for (int i = 0; i < n; ++i) out.emplace_back(vocab.terms[order[i]], dist[order[i]]);
  return out;
}

std::array<std::vector<std::pair<std::string, double>>, kNumFields> top_words(
    const Event& event, const FieldVocabularies& vocabs, int n) {
  std::array<std::vector<std::pair<std::string, double>>, kNumFields> out;
  for (int f = 0; f < kNumFields; ++f)
    out[f] = top_terms(event.dist[f], vocabs[f], n);
  return out;
}

std::vector<Assignment> assign_documents(const Matrix& doc_vectors,
                                         EventTable& events) {
  if (events.events.empty())
    throw ConfigError("assign_documents: empty event table");

  // precompute concatenated, norm'd event vectors
  const std::size_t n_events = events.events.size();
  Matrix ev(n_events, doc_vectors.cols);
  std::vector<double> ev_norm(n_events, 0.0);
  for (std::size_t t = 0; t < n_events; ++t) {
    const std::vector<double> cat = event_concat(events.events[t]);
    if (cat.size() != doc_vectors.cols)
      throw ContractViolation("assign_documents: event width mismatch");
    std::copy(cat.begin(), cat.end(), ev[t]);
    ev_norm[t] = l2_norm(ev.row(t));
  }

  std::vector<Assignment> out(doc_vectors.rows);
  for (Event& e : events.events) e.support = 0;
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(doc_vectors.rows); ++i) {
    const auto r = static_cast<std::size_t>(i);
    const double dn = l2_norm(doc_vectors.row(r));
    if (dn <= 0.0) continue;  // null assignment
    int best = -1;
    double best_score = -2.0;
    for (std::size_t t = 0; t < n_events; ++t) {
      if (ev_norm[t] <= 0.0) continue;
      const double score = dot(doc_vectors.row(r), ev.row(t)) / (dn * ev_norm[t]);
      if (score > best_score) {
        best_score = score;
        best = static_cast<int>(t);
      }
    }
    if (best >= 0) out[r] = {best, best_score};
  }
  for (const Assignment& a : out)
    if (a.event >= 0) events.events[a.event].support += 1;
  return out;
}

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const std::string& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::pair<EventTable, std::vector<Assignment>> merge_duplicate_events(
    const EventTable& events, double overlap_threshold, const Matrix& doc_vectors,
    const FieldVocabularies& vocabs) {
  if (!(overlap_threshold > 0.0 && overlap_threshold <= 1.0))
    throw ConfigError("merge_duplicate_events: threshold must be in (0, 1]");

  std::vector<Event> pool = events.events;
  std::vector<std::vector<std::string>> keys(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i)
    keys[i] = term_set(pool[i], vocabs, kKeywordField, kMergeTermCount);

  std::vector<bool> dead(pool.size(), false);
  while (true) {
    double best = -1.0;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (dead[i]) continue;
      for (std::size_t j = i + 1; j < pool.size(); ++j) {
        if (dead[j]) continue;
        if (keys[i].empty() && keys[j].empty()) continue;
        const double ov = jaccard(keys[i], keys[j]);
        if (ov > best) {
          best = ov;
          bi = i;
          bj = j;
        }
      }
    }
    if (best < overlap_threshold) break;
    // keep the better-supported side; ties keep the earlier event
    const std::size_t keep = pool[bj].support > pool[bi].support ? bj : bi;
    const std::size_t drop = keep == bi ? bj : bi;
    pool[keep].support += pool[drop].support;
    dead[drop] = true;
  }

  EventTable merged;
  merged.field_sizes = events.field_sizes;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (!dead[i]) merged.events.push_back(pool[i]);

  std::vector<Assignment> assignments = assign_documents(doc_vectors, merged);
  return {std::move(merged), std::move(assignments)};
}

}  // namespace aem
