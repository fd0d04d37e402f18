#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "aem/checkpoint.hpp"
#include "aem/errors.hpp"
#include "aem/interface.hpp"

using namespace aem;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("aem_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string str(const std::string& name = "") const {
    return name.empty() ? path.string() : (path / name).string();
  }
};

Matrix random_simplex_batch(std::size_t rows, std::size_t dim, Rng& rng) {
  Matrix theta(rows, dim);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      theta.at(r, c) = -std::log(rng.uniform() + 1e-12);
      sum += theta.at(r, c);
    }
    for (std::size_t c = 0; c < dim; ++c) theta.at(r, c) /= sum;
  }
  return theta;
}

}  // namespace

TEST_CASE("corpus file round trip") {
  TempDir dir;
  Corpus corpus;
  DocumentRecord a;
  a.id = "doc1";
  a.fields[0] = {"usgs", "nbc"};
  a.fields[1] = {"virginia"};
  a.fields[2] = {"earthquake", "magnitude"};
  a.fields[3] = {"mon"};
  a.gold_event = "quake";
  DocumentRecord b;
  b.id = "doc2";
  b.fields[2] = {"ballot"};
  corpus = {a, b};

  write_corpus_jsonl(corpus, dir.str("c.jsonl"));
  const Corpus back = read_corpus_jsonl(dir.str("c.jsonl"));
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "doc1");
  CHECK(back[0].fields == a.fields);
  CHECK(back[0].gold_event == a.gold_event);
  CHECK(!back[1].gold_event.has_value());
  CHECK(back[1].fields[0].empty());
}

TEST_CASE("malformed corpus lines report their line number") {
  TempDir dir;
  {
    std::ofstream out(dir.str("bad.jsonl"));
    out << R"({"id":"d1","entities":[],"locations":[],"keywords":["k"],"dates":[]})"
        << "\n";
    out << R"({"id":"d2","locations":[],"keywords":[],"dates":[]})" << "\n";
  }
  try {
    read_corpus_jsonl(dir.str("bad.jsonl"));
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("entities") != std::string::npos);
  }
}

TEST_CASE("duplicate document ids are rejected") {
  TempDir dir;
  {
    std::ofstream out(dir.str("dup.jsonl"));
    for (int i = 0; i < 2; ++i)
      out << R"({"id":"same","entities":["a"],"locations":[],"keywords":[],"dates":[]})"
          << "\n";
  }
  CHECK_THROWS_AS(read_corpus_jsonl(dir.str("dup.jsonl")), ConfigError);
}

TEST_CASE("vocabulary sidecar round trip is exact") {
  TempDir dir;
  FieldVocabulary vocab;
  vocab.terms = {"alpha", "beta"};
  vocab.document_frequency = {3, 1};
  vocab.corpus_size = 7;
  vocab.idf = {std::log(7.0 / 3.0), std::log(7.0)};
  write_vocab_sidecar(vocab, dir.str("v.tsv"));
  const FieldVocabulary back = read_vocab_sidecar(dir.str("v.tsv"));
  CHECK(back.terms == vocab.terms);
  CHECK(back.document_frequency == vocab.document_frequency);
  CHECK(back.corpus_size == 7);
  REQUIRE(back.idf.size() == 2);
  CHECK(back.idf[0] == vocab.idf[0]);  // 17 significant digits round-trip
  CHECK(back.idf[1] == vocab.idf[1]);
}

TEST_CASE("gold label file round trip") {
  TempDir dir;
  std::vector<GoldEvent> golds(2);
  golds[0].name = "quake";
  golds[0].terms[0] = {"usgs"};
  golds[0].terms[1] = {"virginia"};
  golds[0].terms[2] = {"earthquake"};
  golds[0].terms[3] = {"mon"};
  golds[1].name = "vote";
  golds[1].terms[0] = {"senate"};
  golds[1].terms[2] = {"ballot", "count"};
  golds[1].terms[3] = {"tue"};
  write_gold_json(golds, dir.str("gold.json"));
  const auto back = read_gold_json(dir.str("gold.json"));
  REQUIRE(back.size() == 2);
  // nlohmann objects iterate sorted by key
  CHECK(back[0].name == "quake");
  CHECK(back[0].terms == golds[0].terms);
  CHECK(back[1].terms[2] == std::vector<std::string>{"ballot", "count"});
}

TEST_CASE("tensor container round trip is bit exact") {
  TempDir dir;
  Rng rng(1);
  TensorFile file;
  Matrix m(3, 4);
  for (double& v : m.data) v = rng.normal();
  file.add_matrix("a/matrix", m);
  file.add_vector("b/vector", {1.0, -2.5, 1e-300, 3.14159});
  file.add_scalar("c/scalar", -0.0);
  file.save(dir.str("t.bin"));

  const TensorFile back = TensorFile::load(dir.str("t.bin"));
  CHECK(back.matrix("a/matrix").data == m.data);
  CHECK(back.vector("b/vector") == std::vector<double>{1.0, -2.5, 1e-300, 3.14159});
  CHECK(back.has("c/scalar"));
  CHECK_THROWS_AS(back.get("missing"), ConfigError);
}

TEST_CASE("model checkpoints reproduce decoding exactly") {
  TempDir dir;
  Rng rng(2);
  ModelShape shape;
  shape.event_count = 4;
  shape.hidden_width = 6;
  shape.disc_width = 5;
  shape.field_sizes = {3, 3, 4, 2};
  auto [gen, disc] = init_model(shape, rng);
  for (int i = 0; i < 3; ++i)
    generator_forward(gen, random_simplex_batch(8, 4, rng), NormMode::kTraining,
                      nullptr);
  refresh_spectral(disc, 3);

  const std::array<std::uint64_t, kNumFields> fps = {11, 22, 33, 44};
  save_checkpoint(dir.str("model.bin"), gen, disc, shape.field_sizes, fps);
  Checkpoint ck = load_checkpoint(dir.str("model.bin"));

  CHECK(ck.vocab_fp == fps);
  CHECK(ck.field_sizes == shape.field_sizes);
  CHECK(generator_fingerprint(ck.generator) == generator_fingerprint(gen));
  CHECK(discriminator_fingerprint(ck.discriminator) ==
        discriminator_fingerprint(disc));

  // decoded events come out bit-identical
  EventTable a = decode_events(gen);
  EventTable b = decode_events(ck.generator);
  for (std::size_t t = 0; t < a.events.size(); ++t)
    for (int f = 0; f < kNumFields; ++f)
      CHECK(a.events[t].dist[f] == b.events[t].dist[f]);

  // discriminator views agree after rebuilding sigma from the stored u
  refresh_spectral(disc, 0);
  refresh_spectral(ck.discriminator, 0);
  Matrix x(2, 12);
  Rng rng2(3);
  for (double& v : x.data) v = rng2.uniform();
  DiscriminatorCache ca, cb;
  discriminator_forward(disc, x, ca);
  discriminator_forward(ck.discriminator, x, cb);
  CHECK(ca.out == cb.out);
  CHECK(ca.x2.data == cb.x2.data);
}

TEST_CASE("pca preserves distances for points already in a plane") {
  Rng rng(4);
  const std::size_t n = 24, d = 7;
  // orthonormal-ish basis of a 2-D subspace
  std::vector<double> u(d), v(d);
  for (std::size_t i = 0; i < d; ++i) {
    u[i] = rng.normal();
    v[i] = rng.normal();
  }
  Matrix x(n, d);
  Matrix ab(n, 2);
  for (std::size_t r = 0; r < n; ++r) {
    const double a = rng.normal(), b = rng.normal();
    ab.at(r, 0) = a;
    ab.at(r, 1) = b;
    for (std::size_t c = 0; c < d; ++c) x.at(r, c) = a * u[c] + b * v[c];
  }
  const Matrix coords = pca2(x);
  REQUIRE(coords.rows == n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double d_orig = 0.0, d_proj = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = x.at(i, c) - x.at(j, c);
        d_orig += diff * diff;
      }
      for (std::size_t c = 0; c < 2; ++c) {
        const double diff = coords.at(i, c) - coords.at(j, c);
        d_proj += diff * diff;
      }
      CHECK(std::sqrt(d_proj) == doctest::Approx(std::sqrt(d_orig)).epsilon(1e-8));
    }
}

TEST_CASE("pca needs at least two documents") {
  Matrix x(1, 5);
  CHECK_THROWS_AS(pca2(x), ConfigError);
}

TEST_CASE("directory locks exclude concurrent runs") {
  TempDir dir;
  const std::string target = dir.str("out");
  DirLock first(target);
  CHECK_THROWS_AS(DirLock{target}, ConfigError);
}

TEST_CASE("report renders the reference rows") {
  EvalReport a;
  a.precision = 0.857;
  a.recall = 0.900;
  a.f_measure = f_measure(0.857, 0.900);
  const std::string text = render_report({{"AEM", a}}, 0.3);
  CHECK(text.find("AEM\t85.7\t90.0\t87.8") != std::string::npos);
  CHECK(text.find("human judgment") != std::string::npos);
}

TEST_CASE("identical documents export identical feature rows") {
  Rng rng(5);
  ModelShape shape;
  shape.event_count = 3;
  shape.hidden_width = 4;
  shape.disc_width = 5;
  shape.field_sizes = {4, 2, 3, 3};
  DiscriminatorParams disc = init_discriminator(shape, rng);
  refresh_spectral(disc, 2);
  Matrix x(2, 12);
  for (std::size_t c = 0; c < 12; ++c) {
    x.at(0, c) = 0.05 * static_cast<double>(c);
    x.at(1, c) = 0.05 * static_cast<double>(c);
  }
  DiscriminatorCache cache;
  discriminator_forward(disc, x, cache);
  for (std::size_t c = 0; c < cache.x2.cols; ++c)
    CHECK(cache.x2.at(0, c) == cache.x2.at(1, c));
}

TEST_CASE("the full pipeline runs end to end and is reproducible") {
  TempDir dir;

  cmd_synth({dir.str("corpus.jsonl"), dir.str("gold.json"), 3, 30, 12, 5, 0.1, 9});

  cmd_prepare({dir.str("corpus.jsonl"), dir.str("prep"), 0});
  const PreparedData prep = load_prepared(dir.str("prep"));
  CHECK(prep.doc_vectors.rows == 90);
  CHECK(prep.doc_ids.size() == 90);
  // V = sum of the four field vocabularies
  CHECK(prep.doc_vectors.cols == total_vocab_dim(prep.vocabs));

  // prepare is idempotent: byte-identical vectors
  cmd_prepare({dir.str("corpus.jsonl"), dir.str("prep2"), 0});
  CHECK(file_fingerprint(dir.str("prep") + "/vectors.bin") ==
        file_fingerprint(dir.str("prep2") + "/vectors.bin"));

  TrainOptions train_opt;
  train_opt.prepared_dir = dir.str("prep");
  train_opt.out_dir = dir.str("run");
  train_opt.config.event_count = 5;
  train_opt.config.hidden_width = 16;
  train_opt.config.disc_width = 16;
  train_opt.config.batch_size = 16;
  train_opt.config.max_gen_steps = 40;
  train_opt.config.seed = 5;
  train_opt.config.dirichlet_alpha.assign(5, 0.3);
  const TrainTrace trace = cmd_train(train_opt);
  CHECK(trace.gen_steps >= 1);
  CHECK(fs::exists(dir.str("run") + "/checkpoint.bin"));
  CHECK(fs::exists(dir.str("run") + "/trace.tsv"));

  // trace file: header plus one line per discriminator update, 6 columns
  {
    std::ifstream in(dir.str("run") + "/trace.tsv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "iteration\td_loss\tgp_loss\ttotal_loss\tgen_loss\tseconds");
    std::string line;
    long rows = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      CHECK(std::count(line.begin(), line.end(), '\t') == 5);
      ++rows;
    }
    CHECK(rows == trace.disc_steps);
  }

  ExtractOptions ex;
  ex.checkpoint_path = dir.str("run") + "/checkpoint.bin";
  ex.prepared_dir = dir.str("prep");
  ex.out_dir = dir.str("events");
  ex.merge = true;
  cmd_extract(ex);
  const StoredEventTable stored = read_event_table(dir.str("events") + "/events.txt");
  CHECK(stored.terms.size() >= 1);
  CHECK(stored.terms.size() <= 5);

  // re-extraction is byte-identical
  ex.out_dir = dir.str("events2");
  cmd_extract(ex);
  CHECK(file_fingerprint(dir.str("events") + "/events.txt") ==
        file_fingerprint(dir.str("events2") + "/events.txt"));
  CHECK(file_fingerprint(dir.str("events") + "/assignments.tsv") ==
        file_fingerprint(dir.str("events2") + "/assignments.tsv"));

  EvalOptions ev;
  ev.events_path = dir.str("events") + "/events.txt";
  ev.gold_path = dir.str("gold.json");
  ev.out_dir = dir.str("eval");
  ev.kmeans_prepared_dir = dir.str("prep");
  ev.kmeans_k = 3;
  const EvalReport report = cmd_eval(ev);
  CHECK(report.num_gold == 3);
  CHECK(fs::exists(dir.str("eval") + "/report.txt"));

  FeaturesOptions feat;
  feat.checkpoint_path = dir.str("run") + "/checkpoint.bin";
  feat.prepared_dir = dir.str("prep");
  feat.out_dir = dir.str("feat");
  cmd_features(feat);
  CHECK(fs::exists(dir.str("feat") + "/features.tsv"));
  CHECK(fs::exists(dir.str("feat") + "/projection.tsv"));
  CHECK(fs::exists(dir.str("feat") + "/scatter.svg"));
  {
    std::ifstream svg(dir.str("feat") + "/scatter.svg");
    std::string first;
    std::getline(svg, first);
    CHECK(first.find("<svg") != std::string::npos);
  }

  // a checkpoint refuses vocabularies it was not trained on
  ExtractOptions wrong = ex;
  wrong.prepared_dir = dir.str("prep_other");
  cmd_synth({dir.str("c2.jsonl"), dir.str("g2.json"), 3, 10, 9, 5, 0.1, 10});
  cmd_prepare({dir.str("c2.jsonl"), dir.str("prep_other"), 0});
  wrong.out_dir = dir.str("events3");
  CHECK_THROWS_AS(cmd_extract(wrong), ConfigError);
}
