// Command-line front end: prepare / train / extract / eval / features / synth.

#include <cstdio>
#include <exception>

#include "CLI11.hpp"
#include "aem/errors.hpp"
#include "aem/interface.hpp"

int main(int argc, char** argv) {
  CLI::App app{"adversarial event modeling pipeline"};
  app.require_subcommand(1);

  aem::PrepareOptions prepare;
  CLI::App* p = app.add_subcommand(
      "prepare", "build vocabularies and tf-idf document vectors");
  p->add_option("--corpus", prepare.corpus_path, "line-delimited JSON corpus")
      ->required();
  p->add_option("--out", prepare.out_dir, "output directory")->required();
  p->add_option("--min-df", prepare.min_df,
                "minimum document frequency (0 = pick by corpus size)");

  aem::TrainOptions train;
  double alpha = 1.0;
  CLI::App* t = app.add_subcommand("train", "adversarial training");
  t->add_option("--prepared", train.prepared_dir, "prepare output directory")
      ->required();
  t->add_option("--out", train.out_dir, "output directory")->required();
  t->add_option("-E,--events", train.config.event_count, "latent event count");
  t->add_option("-H,--hidden", train.config.hidden_width, "generator hidden width");
  t->add_option("--disc-hidden", train.config.disc_width,
                "discriminator hidden width");
  t->add_option("--depth", train.config.generator_depth,
                "generator depth (3, 4 or 5)");
  t->add_option("--lambda", train.config.gp_weight, "gradient penalty weight");
  t->add_option("--disc-steps", train.config.disc_steps,
                "discriminator updates per generator update");
  t->add_option("-m,--batch", train.config.batch_size, "batch size");
  t->add_option("--lr", train.config.learning_rate, "Adam learning rate");
  t->add_option("--beta1", train.config.adam_beta1, "Adam beta1");
  t->add_option("--beta2", train.config.adam_beta2, "Adam beta2");
  t->add_option("--alpha", alpha, "symmetric Dirichlet concentration");
  t->add_option("--max-steps", train.config.max_gen_steps,
                "generator update budget");
  t->add_option("--seed", train.config.seed, "master seed");
  t->add_option("--window", train.config.convergence_window,
                "convergence window (generator steps)");
  t->add_option("--tol", train.config.convergence_tol,
                "relative convergence tolerance");
  t->add_flag("!--no-spectral-norm", train.config.use_spectral_norm,
              "disable spectral normalization");
  t->add_flag("--non-saturating", train.config.non_saturating_gen_loss,
              "use the non-saturating generator loss");

  aem::ExtractOptions extract;
  CLI::App* x = app.add_subcommand("extract", "decode events and assign documents");
  x->add_option("--checkpoint", extract.checkpoint_path, "trained checkpoint")
      ->required();
  x->add_option("--prepared", extract.prepared_dir, "prepare output directory")
      ->required();
  x->add_option("--out", extract.out_dir, "output directory")->required();
  x->add_option("-n,--top-n", extract.top_n, "terms per field in the printed table");
  x->add_flag("--merge", extract.merge, "merge near-duplicate events");
  x->add_option("--merge-threshold", extract.merge_threshold,
                "keyword-overlap threshold for merging");

  aem::EvalOptions eval;
  CLI::App* e = app.add_subcommand("eval", "score events against gold labels");
  e->add_option("--events", eval.events_path, "extracted event table")->required();
  e->add_option("--gold", eval.gold_path, "gold label file")->required();
  e->add_option("--out", eval.out_dir, "output directory (optional)");
  e->add_option("--threshold", eval.correct_threshold,
                "similarity threshold for a correct event");
  e->add_option("--kmeans-prepared", eval.kmeans_prepared_dir,
                "prepared directory for the k-means baseline row");
  e->add_option("--kmeans-k", eval.kmeans_k, "k for the baseline (0 = skip)");
  e->add_option("--kmeans-seed", eval.kmeans_seed, "baseline seed");

  aem::FeaturesOptions features;
  CLI::App* f = app.add_subcommand(
      "features", "export discriminative features and a 2-D projection");
  f->add_option("--checkpoint", features.checkpoint_path, "trained checkpoint")
      ->required();
  f->add_option("--prepared", features.prepared_dir, "prepare output directory")
      ->required();
  f->add_option("--out", features.out_dir, "output directory")->required();

  aem::SynthOptions synth;
  CLI::App* s = app.add_subcommand(
      "synth", "generate a synthetic corpus with known ground truth");
  s->add_option("--corpus-out", synth.corpus_path, "corpus file to write")
      ->required();
  s->add_option("--gold-out", synth.gold_path, "gold label file to write")
      ->required();
  s->add_option("--true-events", synth.true_events, "number of true events");
  s->add_option("--docs-per-event", synth.docs_per_event, "documents per event");
  s->add_option("--vocab", synth.vocab_size, "terms per field vocabulary");
  s->add_option("--tokens", synth.tokens_per_field, "tokens per field per document");
  s->add_option("--noise", synth.noise_rate, "uniform-noise token rate");
  s->add_option("--seed", synth.seed, "corpus seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*p) {
      aem::cmd_prepare(prepare);
    } else if (*t) {
      train.config.dirichlet_alpha.assign(
          static_cast<std::size_t>(train.config.event_count), alpha);
      const aem::TrainTrace trace = aem::cmd_train(train);
      std::printf("trained: %ld generator steps, %ld discriminator steps, %.1fs%s\n",
                  trace.gen_steps, trace.disc_steps, trace.seconds,
                  trace.converged ? " (converged)" : "");
    } else if (*x) {
      aem::cmd_extract(extract);
    } else if (*e) {
      aem::cmd_eval(eval);
    } else if (*f) {
      aem::cmd_features(features);
    } else if (*s) {
      aem::cmd_synth(synth);
    }
  } catch (const aem::ConfigError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "internal error: %s\n", err.what());
    return 2;
  }
  return 0;
}
