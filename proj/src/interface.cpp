#include "aem/interface.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aem/checkpoint.hpp"
#include "aem/errors.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace aem {

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --------------------------------------------------------------------------
// Corpus + gold files
// --------------------------------------------------------------------------

namespace {

void check_token(const std::string& token, const std::string& where) {
  if (token.empty()) throw ConfigError(where + ": empty token");
  for (char c : token)
    if (c == '\t' || c == '\n' || c == '\r')
      throw ConfigError(where + ": token contains control characters");
}

std::vector<std::string> field_tokens(const json& rec, const char* key,
                                      const std::string& where) {
  if (!rec.contains(key))
    throw ConfigError(where + ": missing key '" + key + "'");
  const json& arr = rec.at(key);
  if (!arr.is_array())
    throw ConfigError(where + ": key '" + key + "' is not an array");
  std::vector<std::string> out;
  for (const json& t : arr) {
    if (!t.is_string())
      throw ConfigError(where + ": key '" + key + "' holds a non-string token");
    std::string token = t.get<std::string>();
    check_token(token, where);
    out.push_back(std::move(token));
  }
  return out;
}

}  // namespace

Corpus read_corpus_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus: " + path);
  Corpus corpus;
  std::string line;
  long line_no = 0;
  std::vector<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + " line " + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
    if (!rec.is_object()) throw ConfigError(where + ": record is not an object");
    DocumentRecord doc;
    if (!rec.contains("id") || !rec.at("id").is_string())
      throw ConfigError(where + ": missing string key 'id'");
    doc.id = rec.at("id").get<std::string>();
    for (int f = 0; f < kNumFields; ++f)
      doc.fields[f] = field_tokens(rec, kFieldNames[f], where);
    if (rec.contains("gold_event") && !rec.at("gold_event").is_null()) {
      if (!rec.at("gold_event").is_string())
        throw ConfigError(where + ": 'gold_event' must be a string");
      doc.gold_event = rec.at("gold_event").get<std::string>();
    }
    corpus.push_back(std::move(doc));
  }
  if (corpus.empty()) throw ConfigError(path + ": no records");
  std::vector<std::string> ids;
  for (const DocumentRecord& d : corpus) ids.push_back(d.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw ConfigError(path + ": duplicate document ids");
  return corpus;
}

void write_corpus_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write corpus: " + path);
  for (const DocumentRecord& doc : corpus) {
    json rec;
    rec["id"] = doc.id;
    for (int f = 0; f < kNumFields; ++f) rec[kFieldNames[f]] = doc.fields[f];
    if (doc.gold_event) rec["gold_event"] = *doc.gold_event;
    out << rec.dump() << "\n";
  }
}

void write_vocab_sidecar(const FieldVocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write vocabulary: " + path);
  out << "# corpus_size\t" << vocab.corpus_size << "\n";
  for (std::size_t i = 0; i < vocab.size(); ++i)
    out << vocab.terms[i] << "\t" << vocab.document_frequency[i] << "\t"
        << g17(vocab.idf[i]) << "\n";
}

FieldVocabulary read_vocab_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open vocabulary: " + path);
  FieldVocabulary vocab;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    if (line.rfind("# corpus_size", 0) == 0) {
      std::string hash, key;
      ss >> hash >> key >> vocab.corpus_size;
      continue;
    }
    std::string term, df_s, idf_s;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw ConfigError(path + " line " + std::to_string(line_no) +
                        ": expected term<TAB>df<TAB>idf");
    vocab.terms.push_back(line.substr(0, t1));
    vocab.document_frequency.push_back(std::stol(line.substr(t1 + 1, t2 - t1 - 1)));
    vocab.idf.push_back(std::stod(line.substr(t2 + 1)));
  }
  return vocab;
}

std::vector<GoldEvent> read_gold_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open gold labels: " + path);
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + std::string(e.what()));
  }
  if (!root.is_object()) throw ConfigError(path + ": expected an object");
  std::vector<GoldEvent> gold;
  for (const auto& [name, fields] : root.items()) {
    GoldEvent g;
    g.name = name;
    for (int f = 0; f < kNumFields; ++f)
      if (fields.contains(kFieldNames[f]))
        for (const json& t : fields.at(kFieldNames[f]))
          g.terms[f].push_back(t.get<std::string>());
    gold.push_back(std::move(g));
  }
  if (gold.empty()) throw ConfigError(path + ": no gold events");
  return gold;
}

void write_gold_json(const std::vector<GoldEvent>& gold, const std::string& path) {
  json root = json::object();
  for (const GoldEvent& g : gold) {
    json fields = json::object();
    for (int f = 0; f < kNumFields; ++f) fields[kFieldNames[f]] = g.terms[f];
    root[g.name] = std::move(fields);
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write gold labels: " + path);
  out << root.dump(2) << "\n";
}

// --------------------------------------------------------------------------
// Event table + assignments
// --------------------------------------------------------------------------

void write_event_table(const EventTable& table, const FieldVocabularies& vocabs,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write event table: " + path);
  out << "# events\t" << table.events.size() << "\n";
  for (std::size_t t = 0; t < table.events.size(); ++t) {
    const Event& e = table.events[t];
    out << "event\t" << t << "\n";
    out << "support\t" << e.support << "\n";
    for (int f = 0; f < kNumFields; ++f) {
      out << kFieldNames[f];
      for (const auto& [term, prob] : top_terms(e.dist[f], vocabs[f], kMatchTermCount))
        out << "\t" << term << "\t" << g17(prob);
      out << "\n";
    }
    out << "\n";
  }
}

StoredEventTable read_event_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open event table: " + path);
  StoredEventTable stored;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const auto tab = line.find('\t', pos);
      parts.push_back(line.substr(pos, tab == std::string::npos ? tab : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (parts[0] == "event") {
      stored.terms.emplace_back();
      stored.supports.push_back(0);
    } else if (parts[0] == "support") {
      stored.supports.back() = std::stol(parts[1]);
    } else {
      for (int f = 0; f < kNumFields; ++f) {
        if (parts[0] != kFieldNames[f]) continue;
        for (std::size_t i = 1; i + 1 < parts.size(); i += 2)
          stored.terms.back()[f].push_back(parts[i]);
      }
    }
  }
  if (stored.terms.empty()) throw ConfigError(path + ": no events");
  return stored;
}

void write_assignments(const std::vector<std::string>& doc_ids,
                       const std::vector<Assignment>& assignments,
                       const std::string& path) {
  if (doc_ids.size() != assignments.size())
    throw ContractViolation("write_assignments: id/assignment count mismatch");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write assignments: " + path);
  out << "doc_id\tevent\tscore\n";
  for (std::size_t i = 0; i < doc_ids.size(); ++i)
    out << doc_ids[i] << "\t" << assignments[i].event << "\t"
        << g17(assignments[i].score) << "\n";
}

void write_matrix_tsv(const Matrix& m, const std::string& path,
                      const std::vector<std::string>& row_labels) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write matrix: " + path);
  for (std::size_t r = 0; r < m.rows; ++r) {
    if (!row_labels.empty()) out << row_labels[r];
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c > 0 || !row_labels.empty()) out << "\t";
      out << g17(m.at(r, c));
    }
    out << "\n";
  }
}

// --------------------------------------------------------------------------
// PCA + SVG scatter
// --------------------------------------------------------------------------

Matrix pca2(const Matrix& x) {
  if (x.rows < 2) throw ConfigError("projection needs at least 2 rows");
  if (x.cols < 2) throw ConfigError("projection needs at least 2 feature columns");

  Matrix centered = x;
  for (std::size_t c = 0; c < x.cols; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < x.rows; ++r) mean += x.at(r, c);
    mean /= static_cast<double>(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) centered.at(r, c) -= mean;
  }

  Matrix cov(x.cols, x.cols);
  gemm_atb_acc(centered, centered, cov);
  const double scale = 1.0 / static_cast<double>(x.rows - 1);
  for (double& v : cov.data) v *= scale;

  std::vector<double> eigenvalues;
  Matrix eigenvectors;
  sym_eigen(cov, eigenvalues, eigenvectors);

  Matrix basis(x.cols, 2);
  for (int c = 0; c < 2; ++c) {
    // deterministic sign: largest-magnitude loading is positive
    std::size_t arg = 0;
    for (std::size_t r = 1; r < x.cols; ++r)
      if (std::abs(eigenvectors.at(r, c)) > std::abs(eigenvectors.at(arg, c)))
        arg = r;
    const double flip = eigenvectors.at(arg, c) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < x.cols; ++r)
      basis.at(r, c) = flip * eigenvectors.at(r, c);
  }

  Matrix coords;
  gemm_ab(centered, basis, coords);
  return coords;
}

void write_scatter_svg(const Matrix& coords, const std::vector<int>& color_ids,
                       const std::string& path) {
  if (coords.cols != 2) throw ContractViolation("scatter: coords must be n x 2");
  static constexpr std::array<const char*, 12> palette = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
      "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78"};
  const double w = 640.0, h = 480.0, margin = 24.0;
  double min_x = 0, max_x = 1, min_y = 0, max_y = 1;
  if (coords.rows > 0) {
    min_x = max_x = coords.at(0, 0);
    min_y = max_y = coords.at(0, 1);
    for (std::size_t r = 1; r < coords.rows; ++r) {
      min_x = std::min(min_x, coords.at(r, 0));
      max_x = std::max(max_x, coords.at(r, 0));
      min_y = std::min(min_y, coords.at(r, 1));
      max_y = std::max(max_y, coords.at(r, 1));
    }
  }
  const double span_x = std::max(max_x - min_x, 1e-12);
  const double span_y = std::max(max_y - min_y, 1e-12);

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write svg: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t r = 0; r < coords.rows; ++r) {
    const double px = margin + (coords.at(r, 0) - min_x) / span_x * (w - 2 * margin);
    const double py = h - margin - (coords.at(r, 1) - min_y) / span_y * (h - 2 * margin);
    const int id = r < color_ids.size() ? color_ids[r] : -1;
    const char* color = id >= 0 ? palette[id % palette.size()] : "#cccccc";
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" "
                  "fill-opacity=\"0.8\"/>\n",
                  px, py, color);
    out << buf;
  }
  out << "</svg>\n";
}

// --------------------------------------------------------------------------
// Manifests + locking
// --------------------------------------------------------------------------

std::uint64_t file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open for fingerprint: " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

void write_manifest(const RunManifest& manifest, const std::string& out_dir) {
  json root;
  root["command"] = manifest.command;
  root["seed"] = manifest.seed;
  if (!manifest.config_json.empty()) root["config"] = json::parse(manifest.config_json);
  json inputs = json::object();
  for (const auto& [path, fp] : manifest.inputs) inputs[path] = fp;
  root["inputs"] = std::move(inputs);
  root["outputs"] = manifest.outputs;
  {
    std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    root["timestamp"] = stamp;
  }
  std::ofstream out(fs::path(out_dir) / "manifest.json");
  if (!out) throw ConfigError("cannot write manifest in " + out_dir);
  out << root.dump(2) << "\n";
}

DirLock::DirLock(const std::string& dir) {
  fs::create_directories(dir);
  path_ = (fs::path(dir) / ".lock").string();
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw ConfigError("output directory is locked by another run: " + dir);
  ::close(fd);
}

DirLock::~DirLock() { ::unlink(path_.c_str()); }

// --------------------------------------------------------------------------
// Commands
// --------------------------------------------------------------------------

namespace {

std::string vocab_path(const std::string& dir, int field) {
  return (fs::path(dir) / (std::string("vocab.") + kFieldNames[field] + ".tsv"))
      .string();
}

}  // namespace

void cmd_prepare(const PrepareOptions& opt) {
  const Corpus corpus = read_corpus_jsonl(opt.corpus_path);
  const long min_df = opt.min_df > 0 ? opt.min_df : default_min_df(corpus.size());

  DirLock lock(opt.out_dir);
  const FieldVocabularies vocabs = build_vocabularies(corpus, min_df);
  const Matrix vectors = represent_corpus(corpus, vocabs);

  for (int f = 0; f < kNumFields; ++f)
    write_vocab_sidecar(vocabs[f], vocab_path(opt.out_dir, f));

  TensorFile tensors;
  tensors.add_matrix("docvec", vectors);
  {
    std::vector<double> dims;
    for (int d : field_dims(vocabs)) dims.push_back(d);
    tensors.add_vector("field_sizes", dims);
  }
  tensors.save((fs::path(opt.out_dir) / "vectors.bin").string());

  {
    std::ofstream docs(fs::path(opt.out_dir) / "docs.tsv");
    docs << "doc_id\tgold_event\n";
    for (const DocumentRecord& d : corpus)
      docs << d.id << "\t" << (d.gold_event ? *d.gold_event : "") << "\n";
  }

  RunManifest manifest;
  manifest.command = "prepare";
  manifest.config_json =
      json{{"min_df", min_df}, {"corpus", opt.corpus_path}}.dump();
  manifest.inputs = {
      {opt.corpus_path, std::to_string(file_fingerprint(opt.corpus_path))}};
  manifest.outputs = {"vectors.bin", "docs.tsv"};
  for (int f = 0; f < kNumFields; ++f)
    manifest.outputs.push_back(
        fs::path(vocab_path(opt.out_dir, f)).filename().string());
  write_manifest(manifest, opt.out_dir);
}

PreparedData load_prepared(const std::string& dir) {
  PreparedData data;
  for (int f = 0; f < kNumFields; ++f)
    data.vocabs[f] = read_vocab_sidecar(vocab_path(dir, f));
  const TensorFile tensors =
      TensorFile::load((fs::path(dir) / "vectors.bin").string());
  data.doc_vectors = tensors.matrix("docvec");
  {
    const std::vector<double> dims = tensors.vector("field_sizes");
    for (int f = 0; f < kNumFields; ++f)
      if (static_cast<long>(data.vocabs[f].size()) !=
          static_cast<long>(dims[f]))
        throw ConfigError("prepared dir is inconsistent: vocabulary '" +
                          std::string(kFieldNames[f]) +
                          "' does not match vectors.bin");
  }
  std::ifstream docs(fs::path(dir) / "docs.tsv");
  if (!docs) throw ConfigError("cannot open docs.tsv in " + dir);
  std::string line;
  std::getline(docs, line);  // header
  while (std::getline(docs, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    data.doc_ids.push_back(line.substr(0, tab));
    data.gold_labels.push_back(tab == std::string::npos ? "" : line.substr(tab + 1));
  }
  if (data.doc_ids.size() != data.doc_vectors.rows)
    throw ConfigError("prepared dir is inconsistent: docs.tsv row count");
  return data;
}

TrainTrace cmd_train(const TrainOptions& opt) {
  const PreparedData data = load_prepared(opt.prepared_dir);
  DirLock lock(opt.out_dir);

  const TrainResult result = train(data.doc_vectors, opt.config);
  if (result.trace.aborted)
    throw ConfigError("training aborted: " + result.trace.abort_reason);

  const std::string ck_path = (fs::path(opt.out_dir) / "checkpoint.bin").string();
  save_checkpoint(ck_path, result.generator, result.discriminator,
                  field_dims(data.vocabs), vocab_fingerprints(data.vocabs));
  write_trace(result.trace, (fs::path(opt.out_dir) / "trace.tsv").string());

  RunManifest manifest;
  manifest.command = "train";
  manifest.seed = opt.config.seed;
  manifest.config_json =
      json{{"event_count", opt.config.event_count},
           {"hidden_width", opt.config.hidden_width},
           {"disc_width", opt.config.disc_width},
           {"generator_depth", opt.config.generator_depth},
           {"gp_weight", opt.config.gp_weight},
           {"disc_steps", opt.config.disc_steps},
           {"batch_size", opt.config.batch_size},
           {"learning_rate", opt.config.learning_rate},
           {"adam_beta1", opt.config.adam_beta1},
           {"adam_beta2", opt.config.adam_beta2},
           {"max_gen_steps", opt.config.max_gen_steps},
           {"spectral_norm", opt.config.use_spectral_norm},
           {"prepared", opt.prepared_dir}}
          .dump();
  manifest.inputs = {
      {(fs::path(opt.prepared_dir) / "vectors.bin").string(),
       std::to_string(file_fingerprint(
           (fs::path(opt.prepared_dir) / "vectors.bin").string()))}};
  manifest.outputs = {"checkpoint.bin", "trace.tsv"};
  write_manifest(manifest, opt.out_dir);
  return result.trace;
}

void cmd_extract(const ExtractOptions& opt) {
  const PreparedData data = load_prepared(opt.prepared_dir);
  Checkpoint ck = load_checkpoint(opt.checkpoint_path);
  if (ck.vocab_fp != vocab_fingerprints(data.vocabs))
    throw ConfigError(
        "checkpoint was trained on different vocabularies than the prepared "
        "directory");

  DirLock lock(opt.out_dir);
  EventTable table = decode_events(ck.generator);
  std::vector<Assignment> assignments = assign_documents(data.doc_vectors, table);
  if (opt.merge) {
    auto [merged, reassigned] = merge_duplicate_events(
        table, opt.merge_threshold, data.doc_vectors, data.vocabs);
    table = std::move(merged);
    assignments = std::move(reassigned);
  }

  write_event_table(table, data.vocabs,
                    (fs::path(opt.out_dir) / "events.txt").string());
  write_assignments(data.doc_ids, assignments,
                    (fs::path(opt.out_dir) / "assignments.tsv").string());

  // console view, top_n terms per field
  for (std::size_t t = 0; t < table.events.size(); ++t) {
    std::printf("event %zu (support %ld)\n", t, table.events[t].support);
    const auto words = top_words(table.events[t], data.vocabs, opt.top_n);
    for (int f = 0; f < kNumFields; ++f) {
      std::printf("  %-9s", kFieldNames[f]);
      for (const auto& [term, prob] : words[f]) std::printf(" %s", term.c_str());
      std::printf("\n");
    }
  }

  RunManifest manifest;
  manifest.command = "extract";
  manifest.config_json = json{{"top_n", opt.top_n},
                              {"merge", opt.merge},
                              {"merge_threshold", opt.merge_threshold}}
                             .dump();
  manifest.inputs = {
      {opt.checkpoint_path, std::to_string(file_fingerprint(opt.checkpoint_path))}};
  manifest.outputs = {"events.txt", "assignments.tsv"};
  write_manifest(manifest, opt.out_dir);
}

std::string render_report(const std::vector<std::pair<std::string, EvalReport>>& rows,
                          double correct_threshold) {
  // percentages with one decimal, rounded half away from zero
  const auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", std::round(v * 1000.0) / 10.0);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "method\tprecision\trecall\tf_measure\n";
  for (const auto& [name, report] : rows)
    out << name << "\t" << pct(report.precision) << "\t" << pct(report.recall)
        << "\t" << pct(report.f_measure) << "\n";
  out << "\n";
  out << "# correctness: matched events with mean top-" << kMatchTermCount
      << " Jaccard >= " << correct_threshold
      << " against the gold term sets (automated; replaces human judgment)\n";
  out << "# percentages rounded half away from zero to one decimal\n";
  return out.str();
}

EvalReport cmd_eval(const EvalOptions& opt) {
  const StoredEventTable stored = read_event_table(opt.events_path);
  const std::vector<GoldEvent> gold = read_gold_json(opt.gold_path);

  const auto matches = match_events(stored.terms, gold, opt.correct_threshold);
  EvalReport report = precision_recall_f(matches, static_cast<int>(stored.terms.size()),
                                         static_cast<int>(gold.size()));

  std::vector<std::pair<std::string, EvalReport>> rows{{"AEM", report}};
  if (opt.kmeans_k > 0) {
    if (opt.kmeans_prepared_dir.empty())
      throw ConfigError("eval: k-means requires a prepared directory");
    const PreparedData data = load_prepared(opt.kmeans_prepared_dir);
    const KMeansResult km =
        kmeans_baseline(data.doc_vectors, opt.kmeans_k, opt.kmeans_seed);
    const auto km_terms = centroids_to_predicted_terms(km.centroids, data.vocabs);
    const auto km_matches = match_events(km_terms, gold, opt.correct_threshold);
    rows.emplace_back("K-means",
                      precision_recall_f(km_matches, opt.kmeans_k,
                                         static_cast<int>(gold.size())));
  }

  const std::string text = render_report(rows, opt.correct_threshold);
  std::fputs(text.c_str(), stdout);
  if (!opt.out_dir.empty()) {
    DirLock lock(opt.out_dir);
    std::ofstream out(fs::path(opt.out_dir) / "report.txt");
    out << text;
    RunManifest manifest;
    manifest.command = "eval";
    manifest.config_json = json{{"threshold", opt.correct_threshold}}.dump();
    manifest.inputs = {
        {opt.events_path, std::to_string(file_fingerprint(opt.events_path))},
        {opt.gold_path, std::to_string(file_fingerprint(opt.gold_path))}};
    manifest.outputs = {"report.txt"};
    write_manifest(manifest, opt.out_dir);
  }
  return report;
}

void cmd_features(const FeaturesOptions& opt) {
  const PreparedData data = load_prepared(opt.prepared_dir);
  Checkpoint ck = load_checkpoint(opt.checkpoint_path);
  if (ck.vocab_fp != vocab_fingerprints(data.vocabs))
    throw ConfigError(
        "checkpoint was trained on different vocabularies than the prepared "
        "directory");

  DirLock lock(opt.out_dir);
  refresh_spectral(ck.discriminator, 0);
  DiscriminatorCache cache;
  discriminator_forward(ck.discriminator, data.doc_vectors, cache);

  write_matrix_tsv(cache.x2, (fs::path(opt.out_dir) / "features.tsv").string(),
                   data.doc_ids);

  EventTable table = decode_events(ck.generator);
  const std::vector<Assignment> assignments =
      assign_documents(data.doc_vectors, table);
  std::vector<int> colors;
  for (const Assignment& a : assignments) colors.push_back(a.event);

  const Matrix coords = pca2(cache.x2);
  {
    std::ofstream out(fs::path(opt.out_dir) / "projection.tsv");
    out << "doc_id\tx\ty\tevent\n";
    for (std::size_t r = 0; r < coords.rows; ++r)
      out << data.doc_ids[r] << "\t" << g17(coords.at(r, 0)) << "\t"
          << g17(coords.at(r, 1)) << "\t" << colors[r] << "\n";
  }
  write_scatter_svg(coords, colors, (fs::path(opt.out_dir) / "scatter.svg").string());

  RunManifest manifest;
  manifest.command = "features";
  manifest.inputs = {
      {opt.checkpoint_path, std::to_string(file_fingerprint(opt.checkpoint_path))}};
  manifest.outputs = {"features.tsv", "projection.tsv", "scatter.svg"};
  write_manifest(manifest, opt.out_dir);
}

void cmd_synth(const SynthOptions& opt) {
  const SyntheticSpec spec =
      make_synthetic_spec(opt.true_events, opt.docs_per_event, opt.vocab_size,
                          opt.tokens_per_field, opt.noise_rate, opt.seed);
  const auto [corpus, gold] = generate_synthetic_corpus(spec);
  write_corpus_jsonl(corpus, opt.corpus_path);
  write_gold_json(gold, opt.gold_path);
}

}  // namespace aem
