#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aem/corpus.hpp"
#include "aem/evaluation.hpp"
#include "aem/events.hpp"
#include "aem/training.hpp"

namespace aem {

// 17 significant digits: doubles round-trip through text exactly.
std::string g17(double v);

// ---------------------------------------------------------------------------
// File formats
//
// corpus        line-delimited JSON records:
//                 {"id": ..., "entities": [...], "locations": [...],
//                  "keywords": [...], "dates": [...], "gold_event": ...}
//               gold_event is optional. For news-style corpora the slots
//               carry organization / location / person / keyword.
// vocabulary    one "term <TAB> df <TAB> idf" line per term plus a header
//               recording the corpus size.
// gold labels   JSON object: event name -> {field: [terms...]}.
// event table   text blocks, tab-separated term/probability pairs per field.
// assignments   "doc_id <TAB> event <TAB> score" rows; event -1 = unassigned.
// ---------------------------------------------------------------------------
Corpus read_corpus_jsonl(const std::string& path);
void write_corpus_jsonl(const Corpus& corpus, const std::string& path);

void write_vocab_sidecar(const FieldVocabulary& vocab, const std::string& path);
FieldVocabulary read_vocab_sidecar(const std::string& path);

std::vector<GoldEvent> read_gold_json(const std::string& path);
void write_gold_json(const std::vector<GoldEvent>& gold, const std::string& path);

// Writes kMatchTermCount terms per field so evaluation can run from the file
// alone; rendering tools shorten the lists for display.
void write_event_table(const EventTable& table, const FieldVocabularies& vocabs,
                       const std::string& path);
struct StoredEventTable {
  std::vector<PredictedTerms> terms;
  std::vector<long> supports;
};
StoredEventTable read_event_table(const std::string& path);

void write_assignments(const std::vector<std::string>& doc_ids,
                       const std::vector<Assignment>& assignments,
                       const std::string& path);

void write_matrix_tsv(const Matrix& m, const std::string& path,
                      const std::vector<std::string>& row_labels = {});

// ---------------------------------------------------------------------------
// Projection + plot
// ---------------------------------------------------------------------------

// Two leading principal components via exact eigendecomposition of the
// covariance matrix. Needs at least 2 rows and 2 columns.
Matrix pca2(const Matrix& x);

void write_scatter_svg(const Matrix& coords, const std::vector<int>& color_ids,
                       const std::string& path);

// ---------------------------------------------------------------------------
// Manifests + locking
// ---------------------------------------------------------------------------
std::uint64_t file_fingerprint(const std::string& path);

struct RunManifest {
  std::string command;
  std::string config_json;  // serialized flag snapshot
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, fingerprint
  std::vector<std::string> outputs;
};
void write_manifest(const RunManifest& manifest, const std::string& out_dir);

// Exclusive lock on an output directory; a second concurrent run targeting
// the same directory fails instead of interleaving artifacts.
class DirLock {
 public:
  explicit DirLock(const std::string& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
};

// ---------------------------------------------------------------------------
// Commands (the CLI is a thin wrapper over these)
// ---------------------------------------------------------------------------
struct PrepareOptions {
  std::string corpus_path;
  std::string out_dir;
  long min_df = 0;  // 0 = pick by corpus size
};
void cmd_prepare(const PrepareOptions& opt);

struct PreparedData {
  std::vector<std::string> doc_ids;
  std::vector<std::string> gold_labels;  // empty string = unlabeled
  FieldVocabularies vocabs;
  Matrix doc_vectors;
};
PreparedData load_prepared(const std::string& dir);

struct TrainOptions {
  std::string prepared_dir;
  std::string out_dir;
  TrainConfig config;
};
TrainTrace cmd_train(const TrainOptions& opt);

struct ExtractOptions {
  std::string checkpoint_path;
  std::string prepared_dir;
  std::string out_dir;
  int top_n = 5;  // display width of the printed table
  bool merge = false;
  double merge_threshold = 0.5;
};
void cmd_extract(const ExtractOptions& opt);

struct EvalOptions {
  std::string events_path;
  std::string gold_path;
  std::string out_dir;  // empty = print only
  double correct_threshold = kDefaultCorrectThreshold;
  // optional second row: k-means on the prepared vectors
  std::string kmeans_prepared_dir;
  int kmeans_k = 0;
  std::uint64_t kmeans_seed = 1;
};
EvalReport cmd_eval(const EvalOptions& opt);

struct FeaturesOptions {
  std::string checkpoint_path;
  std::string prepared_dir;
  std::string out_dir;
};
void cmd_features(const FeaturesOptions& opt);

struct SynthOptions {
  std::string corpus_path;
  std::string gold_path;
  int true_events = 10;
  int docs_per_event = 100;
  int vocab_size = 40;
  int tokens_per_field = 8;
  double noise_rate = 0.2;
  std::uint64_t seed = 7;
};
void cmd_synth(const SynthOptions& opt);

std::string render_report(const std::vector<std::pair<std::string, EvalReport>>& rows,
                          double correct_threshold);

}  // namespace aem
