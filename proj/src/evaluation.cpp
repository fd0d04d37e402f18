#include "aem/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "aem/errors.hpp"
#include "aem/rng.hpp"

namespace aem {

// --------------------------------------------------------------------------
// Hungarian algorithm (potentials formulation)
// --------------------------------------------------------------------------

std::vector<int> hungarian_min_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows);
  const int m = static_cast<int>(cost.cols);
  if (n == 0 || m == 0) return std::vector<int>(cost.rows, -1);
  if (n > m) throw ContractViolation("hungarian: needs rows <= cols (pad first)");

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> match(m + 1, 0), way(m + 1, 0);

  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (match[j] > 0) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

// --------------------------------------------------------------------------
// Event matching
// --------------------------------------------------------------------------

namespace {

double mean_field_jaccard(const PredictedTerms& predicted, const GoldEvent& gold) {
  double sum = 0.0;
  int counted = 0;
  for (int f = 0; f < kNumFields; ++f) {
    if (predicted[f].empty() && gold.terms[f].empty()) continue;
    sum += jaccard(predicted[f], gold.terms[f]);
    ++counted;
  }
  return counted == 0 ? 0.0 : sum / counted;
}

}  // namespace

std::vector<EventMatch> match_events(const std::vector<PredictedTerms>& predicted,
                                     const std::vector<GoldEvent>& gold,
                                     double correct_threshold) {
  if (gold.empty()) throw ConfigError("match_events: empty gold set");
  for (const GoldEvent& g : gold) {
    bool any = false;
    for (const auto& t : g.terms) any = any || !t.empty();
    if (!any)
      throw ConfigError("match_events: gold event '" + g.name + "' has no terms");
  }
  if (predicted.empty()) return {};

  const int np = static_cast<int>(predicted.size());
  const int ng = static_cast<int>(gold.size());
  Matrix sim(np, ng);
  for (int i = 0; i < np; ++i)
    for (int j = 0; j < ng; ++j) sim.at(i, j) = mean_field_jaccard(predicted[i], gold[j]);

  // maximize similarity == minimize negated similarity; pad to rows <= cols
  const int side = std::max(np, ng);
  Matrix cost(side, side, 0.0);
  for (int i = 0; i < np; ++i)
    for (int j = 0; j < ng; ++j) cost.at(i, j) = -sim.at(i, j);
  const std::vector<int> row_to_col = hungarian_min_assignment(cost);

  std::vector<EventMatch> out;
  for (int i = 0; i < np; ++i) {
    const int j = row_to_col[i];
    if (j < 0 || j >= ng) continue;  // matched to padding
    EventMatch m;
    m.predicted = i;
    m.gold = j;
    m.similarity = sim.at(i, j);
    m.correct = m.similarity >= correct_threshold;
    out.push_back(m);
  }
  return out;
}

double f_measure(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

EvalReport precision_recall_f(const std::vector<EventMatch>& matching,
                              int num_predicted, int num_gold) {
  if (num_gold < 1) throw ConfigError("precision_recall_f: num_gold must be >= 1");
  int correct = 0;
  for (const EventMatch& m : matching) correct += m.correct ? 1 : 0;
  EvalReport report;
  report.matching = matching;
  report.num_predicted = num_predicted;
  report.num_gold = num_gold;
  report.precision = num_predicted > 0
                         ? static_cast<double>(correct) / num_predicted
                         : 0.0;
  report.recall = static_cast<double>(correct) / num_gold;
  report.f_measure = f_measure(report.precision, report.recall);
  return report;
}

std::vector<PredictedTerms> table_to_predicted_terms(const EventTable& table,
                                                     const FieldVocabularies& vocabs) {
  std::vector<PredictedTerms> out;
  for (const Event& e : table.events) {
    PredictedTerms terms;
    for (int f = 0; f < kNumFields; ++f)
      for (const auto& [term, prob] : top_terms(e.dist[f], vocabs[f], kMatchTermCount))
        terms[f].push_back(term);
    out.push_back(std::move(terms));
  }
  return out;
}

// --------------------------------------------------------------------------
// K-means
// --------------------------------------------------------------------------

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

KMeansResult kmeans_once(const Matrix& x, int k, std::uint64_t seed,
                         int max_iterations) {
  const std::size_t n = x.rows;
  Rng rng(seed);
  Matrix centroids(k, x.cols);

  // k-means++ seeding
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.index(n);
  std::copy(x[first], x[first] + x.cols, centroids[0]);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      min_d2[i] = std::min(min_d2[i], sq_dist(x.row(i), centroids.row(c - 1)));
      total += min_d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += min_d2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.index(n);
    }
    std::copy(x[pick], x[pick] + x.cols, centroids[c]);
  }

  KMeansResult result;
  result.assignment.assign(n, -1);
  std::vector<int> next(n, -1);
  std::vector<int> counts(k, 0);
  for (int iter = 0; iter < max_iterations; ++iter) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(n); ++i) {
      const auto r = static_cast<std::size_t>(i);
      int best = 0;
      double best_d = sq_dist(x.row(r), centroids.row(0));
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(x.row(r), centroids.row(c));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      next[r] = best;
    }
    result.iterations = iter + 1;
    const bool changed = next != result.assignment;
    result.assignment = next;
    if (!changed) break;

    centroids.fill(0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const int c = result.assignment[i];
      counts[c] += 1;
      const double* row = x[i];
      double* cen = centroids[c];
      for (std::size_t j = 0; j < x.cols; ++j) cen[j] += row[j];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // adopt the point farthest from its centroid
        double worst = -1.0;
        std::size_t pick = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = sq_dist(x.row(i), centroids.row(result.assignment[i]));
          if (d > worst) {
            worst = d;
            pick = i;
          }
        }
        std::copy(x[pick], x[pick] + x.cols, centroids[c]);
      } else {
        double* cen = centroids[c];
        for (std::size_t j = 0; j < x.cols; ++j) cen[j] /= counts[c];
      }
    }
  }

  result.centroids = std::move(centroids);
  result.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    result.inertia += sq_dist(x.row(i), result.centroids.row(result.assignment[i]));
  return result;
}

}  // namespace

KMeansResult kmeans_baseline(const Matrix& doc_vectors, int k, std::uint64_t seed,
                             int restarts, int max_iterations) {
  if (k < 1) throw ConfigError("kmeans: k must be >= 1");
  if (static_cast<std::size_t>(k) > doc_vectors.rows)
    throw ConfigError("kmeans: k exceeds the number of documents");

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    KMeansResult candidate =
        kmeans_once(doc_vectors, k, seed + 1000003ULL * static_cast<std::uint64_t>(r),
                    max_iterations);
    if (candidate.inertia < best.inertia) best = std::move(candidate);
  }
  return best;
}

std::vector<PredictedTerms> centroids_to_predicted_terms(
    const Matrix& centroids, const FieldVocabularies& vocabs) {
  std::vector<PredictedTerms> out;
  for (std::size_t c = 0; c < centroids.rows; ++c) {
    PredictedTerms terms;
    std::size_t offset = 0;
    for (int f = 0; f < kNumFields; ++f) {
      const std::size_t width = vocabs[f].size();
      std::span<const double> block(centroids[c] + offset, width);
      for (const auto& [term, prob] : top_terms(block, vocabs[f], kMatchTermCount))
        terms[f].push_back(term);
      offset += width;
    }
    out.push_back(std::move(terms));
  }
  return out;
}

// --------------------------------------------------------------------------
// Synthetic corpora
// --------------------------------------------------------------------------

namespace {

std::string field_term(int field, int index) {
  static constexpr std::array<const char*, kNumFields> prefix = {"ent", "loc",
                                                                 "kw", "day"};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%03d", prefix[field], index);
  return buf;
}

std::size_t draw_categorical(std::span<const double> probs, Rng& rng) {
  const double r = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (r < acc) return i;
  }
  return probs.size() - 1;
}

}  // namespace

SyntheticSpec make_synthetic_spec(int true_events, int docs_per_event,
                                  int vocab_size, int tokens_per_field,
                                  double noise_rate, std::uint64_t seed,
                                  double salient_mass) {
  if (true_events < 1 || vocab_size < true_events)
    throw ConfigError("make_synthetic_spec: need vocab_size >= true_events >= 1");
  SyntheticSpec spec;
  spec.true_events = true_events;
  spec.docs_per_event = docs_per_event;
  spec.vocab_sizes = {vocab_size, vocab_size, vocab_size, vocab_size};
  spec.tokens_per_field = tokens_per_field;
  spec.noise_rate = noise_rate;
  spec.seed = seed;

  Rng rng(seed ^ 0xabcdef1234567ULL);
  const int per_event = vocab_size / true_events;  // disjoint when it divides
  for (int f = 0; f < kNumFields; ++f) {
    for (int i = 0; i < vocab_size; ++i) spec.vocab_terms[f].push_back(field_term(f, i));
    std::vector<int> pool(vocab_size);
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), rng.engine);

    spec.truth[f].resize(true_events);
    spec.salient[f].resize(true_events);
    int cursor = 0;
    for (int t = 0; t < true_events; ++t) {
      std::vector<double>& dist = spec.truth[f][t];
      dist.assign(vocab_size, 0.0);
      std::vector<int> own;
      for (int s = 0; s < per_event; ++s) own.push_back(pool[cursor++ % vocab_size]);
      const std::size_t rest_count = vocab_size - own.size();
      const double own_share =
          rest_count == 0 ? 1.0 / own.size() : salient_mass / own.size();
      for (int idx : own) {
        dist[idx] = own_share;
        spec.salient[f][t].push_back(spec.vocab_terms[f][idx]);
      }
      if (rest_count > 0) {
        const double rest = (1.0 - salient_mass) / rest_count;
        for (int i = 0; i < vocab_size; ++i)
          if (dist[i] == 0.0) dist[i] = rest;
      }
      std::sort(spec.salient[f][t].begin(), spec.salient[f][t].end());
    }
  }
  return spec;
}

std::pair<Corpus, std::vector<GoldEvent>> generate_synthetic_corpus(
    const SyntheticSpec& spec) {
  for (int f = 0; f < kNumFields; ++f)
    if (spec.truth[f].size() != static_cast<std::size_t>(spec.true_events))
      throw ConfigError("generate_synthetic_corpus: truth distributions missing");

  Rng rng(spec.seed);
  Corpus corpus;
  std::vector<int> doc_event;
  for (int t = 0; t < spec.true_events; ++t)
    for (int d = 0; d < spec.docs_per_event; ++d) doc_event.push_back(t);
  std::shuffle(doc_event.begin(), doc_event.end(), rng.engine);

  char idbuf[32];
  for (std::size_t i = 0; i < doc_event.size(); ++i) {
    const int t = doc_event[i];
    DocumentRecord doc;
    std::snprintf(idbuf, sizeof(idbuf), "doc%05zu", i);
    doc.id = idbuf;
    doc.gold_event = "event" + std::to_string(t);
    for (int f = 0; f < kNumFields; ++f) {
      for (int tok = 0; tok < spec.tokens_per_field; ++tok) {
        std::size_t idx;
        if (rng.uniform() < spec.noise_rate) {
          idx = rng.index(spec.vocab_terms[f].size());
        } else {
          idx = draw_categorical(spec.truth[f][t], rng);
        }
        doc.fields[f].push_back(spec.vocab_terms[f][idx]);
      }
    }
    corpus.push_back(std::move(doc));
  }

  std::vector<GoldEvent> gold;
  for (int t = 0; t < spec.true_events; ++t) {
    GoldEvent g;
    g.name = "event" + std::to_string(t);
    for (int f = 0; f < kNumFields; ++f) g.terms[f] = spec.salient[f][t];
    gold.push_back(std::move(g));
  }
  return {std::move(corpus), std::move(gold)};
}

std::vector<std::pair<std::string, double>> timing_harness(
    std::vector<TimedMethod> methods) {
  std::vector<std::pair<std::string, double>> out;
  for (TimedMethod& m : methods) {
    const auto t0 = std::chrono::steady_clock::now();
    m.run();
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.emplace_back(m.name, secs);
  }
  return out;
}

}  // namespace aem
