// glossforge: sentence-to-gloss data augmentation and evaluation.
//
// Each subcommand prints one JSON summary line on stdout when it succeeds.
// Failures print {"error":..,"message":..,"exit_code":..} on stderr and exit
// with 2 (config), 3 (backend) or 4 (data).

#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "glossforge/config.hpp"
#include "glossforge/evaluation.hpp"
#include "glossforge/pipeline.hpp"
#include "glossforge/review_service.hpp"
#include "glossforge/validation.hpp"

namespace fs = std::filesystem;
using namespace glossforge;
using json = nlohmann::ordered_json;

namespace {

void print_summary(const json& j) { std::cout << j.dump() << std::endl; }

int fail(Errc code, const std::string& message) {
  const int rc = exit_code(code);
  std::cerr << json{{"error", to_string(code)}, {"message", message}, {"exit_code", rc}}.dump() << std::endl;
  return rc;
}

/// mock, or http with the URL from the flag or the named environment variable.
struct BackendFlags {
  std::string kind = "mock";
  std::string url;
  std::string model;

  void add(CLI::App* cmd, const std::string& prefix, const std::string& env_var) {
    env = env_var;
    cmd->add_option("--" + prefix + "-backend", kind, "mock or http")->check(CLI::IsMember({"mock", "http"}));
    cmd->add_option("--" + prefix + "-url", url, "endpoint for http (default $" + env_var + ")");
    cmd->add_option("--" + prefix + "-model", model, "model id recorded in metadata");
  }

  bool http() const { return kind == "http"; }

  std::string resolved_url() const {
    if (!url.empty()) return url;
    if (auto v = process_env(env.c_str())) return *v;
    throw Error(Errc::config, "http backend needs a URL: pass a flag or set " + env);
  }

  std::string env;
};

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw Error(Errc::config, what + " not found: " + p.string());
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glossforge: augment, validate and evaluate sentence-gloss corpora"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "debug, info, warn or error")
      ->check(CLI::IsMember({"debug", "info", "warn", "error"}));

  std::function<json()> action;

  // split
  auto* split = app.add_subcommand("split", "Seeded train/dev/test split");
  fs::path split_in, split_out;
  SplitRatios ratios;
  split->add_option("-i,--input", split_in, "corpus (.jsonl or .tsv)")->required();
  split->add_option("-o,--out-dir", split_out, "output directory")->required();
  split->add_option("--train", ratios.train);
  split->add_option("--dev", ratios.dev);
  split->add_option("--test", ratios.test);
  split->add_option("--seed", ratios.seed);
  split->callback([&] {
    action = [&] {
      try {
        ratios.validate();
      } catch (const Error& e) {
        throw Error(Errc::config, e.what());
      }
      const auto c = split_corpus(load_corpus(split_in), ratios);
      fs::create_directories(split_out);
      json counts;
      for (auto cls : {SplitClass::train, SplitClass::dev, SplitClass::test}) {
        const auto part = c.subset(cls);
        write_corpus(part, split_out / (std::string(to_string(cls)) + ".jsonl"));
        counts[std::string(to_string(cls))] = part.size();
      }
      write_text_file(split_out / "split_map.tsv", format_split_map(c));
      return json{{"command", "split"}, {"counts", counts}, {"seed", ratios.seed}};
    };
  });

  // rules-expand
  auto* rules_cmd = app.add_subcommand("rules-expand", "Tense expansion with a rule file");
  fs::path rules_in, rules_out, rules_file;
  size_t rules_per_pair = 0, rules_target = 0;
  rules_cmd->add_option("-i,--input", rules_in)->required();
  rules_cmd->add_option("-r,--rules", rules_file)->required();
  rules_cmd->add_option("-o,--output", rules_out)->required();
  rules_cmd->add_option("--per-pair", rules_per_pair, "max variants per pair (0 = all)");
  rules_cmd->add_option("--target", rules_target, "stop after this many variants (0 = no limit)");
  rules_cmd->callback([&] {
    action = [&] {
      require_file(rules_file, "rule file");
      const auto rs = load_rules(rules_file);
      const auto c = load_corpus(rules_in);
      std::unordered_set<std::string> seen;
      for (const auto& p : c.pairs) seen.insert(unicode::nfc(p.sentence));
      const size_t cap = std::numeric_limits<size_t>::max();
      auto r = rule_augment(c.pairs, rs, rules_target ? rules_target : cap, rules_per_pair ? rules_per_pair : cap, seen);
      ensure_parent(rules_out);
      write_corpus(r.corpus, rules_out);
      return json{{"command", "rules-expand"}, {"report", to_json(r.report)}};
    };
  });

  // mask-augment
  auto* mask_cmd = app.add_subcommand("mask-augment", "Masked-token substitution");
  fs::path mask_in, mask_out, stoplist, vocabulary;
  MaskOptions mopts;
  size_t mask_max = 0;
  BackendFlags fill;
  mask_cmd->add_option("-i,--input", mask_in)->required();
  mask_cmd->add_option("-o,--output", mask_out)->required();
  mask_cmd->add_option("-k,--per-pair", mopts.per_pair_k);
  mask_cmd->add_option("--max-total", mask_max, "cap on variants (0 = none)");
  mask_cmd->add_option("--stoplist", stoplist);
  mask_cmd->add_option("--vocabulary", vocabulary, "candidate tokens for the mock backend");
  mask_cmd->add_option("--concurrency", mopts.concurrency);
  fill.add(mask_cmd, "fillmask", "GLOSSFORGE_FILLMASK_URL");
  mask_cmd->callback([&] {
    action = [&] {
      if (!stoplist.empty()) mopts.stop_list = load_stop_list(stoplist);
      if (mask_max) mopts.max_total = mask_max;
      std::unique_ptr<FillMaskBackend> backend;
      if (fill.http()) {
        backend = std::make_unique<HttpFillMask>(fill.resolved_url(), std::nullopt);
      } else {
        if (vocabulary.empty()) throw Error(Errc::config, "mock fill-mask backend needs --vocabulary");
        backend = std::make_unique<VocabularyFillMask>(load_token_list(vocabulary));
      }
      auto r = batch_mask_augment(load_corpus(mask_in), *backend, mopts);
      ensure_parent(mask_out);
      write_corpus(r.corpus, mask_out);
      return json{{"command", "mask-augment"}, {"report", to_json(r.report)}};
    };
  });

  // index-build
  auto* index_cmd = app.add_subcommand("index-build", "Embed the train pairs into an index file");
  fs::path index_in, index_out, index_split;
  size_t dimension = 256;
  BackendFlags embed;
  index_cmd->add_option("-i,--input", index_in, "corpus; with --split-map only train pairs are indexed")->required();
  index_cmd->add_option("--split-map", index_split);
  index_cmd->add_option("-o,--output", index_out)->required();
  index_cmd->add_option("--dimension", dimension, "mock embedder dimension");
  embed.add(index_cmd, "embed", "GLOSSFORGE_EMBED_URL");
  index_cmd->callback([&] {
    action = [&] {
      auto c = load_corpus(index_in);
      if (!index_split.empty()) c = attach_split_map(std::move(c), index_split);
      std::unique_ptr<EmbedderBackend> backend;
      if (embed.http())
        backend = std::make_unique<HttpEmbedder>(embed.resolved_url(), process_env("GLOSSFORGE_EMBED_KEY"),
                                                 embed.model.empty() ? "remote" : embed.model);
      else
        backend = std::make_unique<TokenHashEmbedder>(dimension);
      const auto idx = build_index(c, *backend);
      ensure_parent(index_out);
      save_index(idx, index_out);
      return json{{"command", "index-build"}, {"entries", idx.entries.size()}, {"dimension", idx.dimension}, {"backend", idx.backend_name}};
    };
  });

  // rag-augment
  auto* rag_cmd = app.add_subcommand("rag-augment", "Retrieval-augmented gloss generation");
  fs::path rag_sources, rag_index, rag_examples, rag_rules, rag_out, rag_prompts, rag_journal;
  GenerationConfig gcfg;
  size_t rag_dimension = 256, rag_concurrency = 4;
  BackendFlags rag_embed, rag_llm;
  rag_cmd->add_option("-s,--sources", rag_sources, "one sentence per line")->required();
  rag_cmd->add_option("--index", rag_index)->required();
  rag_cmd->add_option("--examples", rag_examples, "corpus the index was built from")->required();
  rag_cmd->add_option("-r,--rules", rag_rules)->required();
  rag_cmd->add_option("-o,--output", rag_out)->required();
  rag_cmd->add_option("--prompts", rag_prompts, "template directory (default: built-in)");
  rag_cmd->add_option("--journal", rag_journal, "resume journal");
  rag_cmd->add_option("--threshold", gcfg.retrieval.threshold);
  rag_cmd->add_option("--cap", gcfg.retrieval.cap);
  rag_cmd->add_option("--min-examples", gcfg.retrieval.min_examples);
  rag_cmd->add_option("--temperature", gcfg.params.temperature);
  rag_cmd->add_option("--dimension", rag_dimension, "mock embedder dimension");
  rag_cmd->add_option("--concurrency", rag_concurrency);
  rag_embed.add(rag_cmd, "embed", "GLOSSFORGE_EMBED_URL");
  rag_llm.add(rag_cmd, "llm", "GLOSSFORGE_LLM_URL");
  rag_cmd->callback([&] {
    action = [&] {
      gcfg.retrieval.validate();
      const auto rs = load_rules(rag_rules);
      const auto examples = load_corpus(rag_examples);
      std::unique_ptr<EmbedderBackend> embedder;
      if (rag_embed.http())
        embedder = std::make_unique<HttpEmbedder>(rag_embed.resolved_url(), process_env("GLOSSFORGE_EMBED_KEY"),
                                                  rag_embed.model.empty() ? "remote" : rag_embed.model);
      else
        embedder = std::make_unique<TokenHashEmbedder>(rag_dimension);
      const auto idx = load_index(rag_index, embedder->name());
      std::unique_ptr<LlmBackend> llm;
      if (rag_llm.http())
        llm = std::make_unique<HttpLlm>(rag_llm.resolved_url(), process_env("GLOSSFORGE_LLM_KEY"));
      else
        llm = std::make_unique<EchoLlm>(rs);
      gcfg.params.model_id = rag_llm.model.empty() ? (rag_llm.http() ? "remote" : "mock") : rag_llm.model;
      if (!rag_prompts.empty()) gcfg.templates = load_templates(rag_prompts);
      RagContext ctx{idx, examples, rs, *embedder, *llm};
      BatchOptions bo;
      bo.concurrency = rag_concurrency;
      if (!rag_journal.empty()) bo.journal = rag_journal;
      auto r = batch_augment(load_sentences(rag_sources), ctx, gcfg, bo);
      ensure_parent(rag_out);
      write_corpus(r.corpus, rag_out);
      json errors = json::array();
      for (const auto& e : r.errors) errors.push_back(json{{"index", e.index}, {"code", e.code}, {"reason", e.reason}});
      return json{{"command", "rag-augment"}, {"produced", r.corpus.size()}, {"resumed", r.resumed}, {"errors", errors}};
    };
  });

  // review-sample
  auto* sample_cmd = app.add_subcommand("review-sample", "Draw the review sample");
  fs::path sample_in, sample_out;
  double fraction = 0.15;
  uint64_t sample_seed = 0;
  sample_cmd->add_option("-i,--input", sample_in)->required();
  sample_cmd->add_option("-o,--output", sample_out, "sample id file")->required();
  sample_cmd->add_option("--fraction", fraction);
  sample_cmd->add_option("--seed", sample_seed);
  sample_cmd->callback([&] {
    action = [&] {
      const auto ids = sample_for_review(load_corpus(sample_in), fraction, sample_seed);
      ensure_parent(sample_out);
      save_sample_ids(ids, sample_out);
      return json{{"command", "review-sample"}, {"samples", ids.size()}};
    };
  });

  // review-serve
  auto* serve_cmd = app.add_subcommand("review-serve", "Serve the review API until interrupted");
  fs::path serve_corpus, serve_samples, serve_journal;
  std::string host = "127.0.0.1", serve_weighting = "none";
  int port = 8080;
  serve_cmd->add_option("-i,--input", serve_corpus, "corpus holding the sampled pairs")->required();
  serve_cmd->add_option("--samples", serve_samples, "sample id file")->required();
  serve_cmd->add_option("--journal", serve_journal, "annotation journal (JSONL)")->required();
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--weighting", serve_weighting)->check(CLI::IsMember({"none", "linear", "quadratic"}));
  serve_cmd->callback([&] {
    action = [&] {
      AnnotationJournal journal(serve_journal);
      ReviewService service(review_samples(load_corpus(serve_corpus), load_sample_ids(serve_samples)), journal,
                            *parse_weighting(serve_weighting));
      httplib::Server svr;
      service.mount(svr);
      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);
      std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        svr.stop();
      });
      if (!svr.bind_to_port(host, port)) {
        pthread_kill(waiter.native_handle(), SIGTERM);
        waiter.join();
        throw Error(Errc::config, "cannot bind " + host + ":" + std::to_string(port));
      }
      log::emit(log::Level::warn, "review_serve", {{"url", "http://" + host + ":" + std::to_string(port)}});
      svr.listen_after_bind();
      waiter.join();
      return json{{"command", "review-serve"}, {"records", journal.snapshot().size()}};
    };
  });

  // kappa-report
  auto* kappa_cmd = app.add_subcommand("kappa-report", "Validation report from an annotation journal");
  fs::path kappa_journal;
  std::string kappa_weighting = "none";
  bool kappa_json = false;
  kappa_cmd->add_option("--journal", kappa_journal)->required();
  kappa_cmd->add_option("--weighting", kappa_weighting)->check(CLI::IsMember({"none", "linear", "quadratic"}));
  kappa_cmd->add_flag("--json", kappa_json, "print the report as JSON instead of table rows");
  kappa_cmd->callback([&] {
    action = [&]() -> json {
      require_file(kappa_journal, "journal");
      const auto report = build_report(load_journal(kappa_journal), *parse_weighting(kappa_weighting));
      if (kappa_json) return to_json(report);
      std::cout << render_report(report);
      return nullptr;
    };
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Corpus BLEU-1..4");
  fs::path hyp, ref, per_example;
  std::string eval_format, smoothing = "none", scorer, system_name = "system";
  eval_cmd->add_option("--hyp", hyp)->required();
  eval_cmd->add_option("--ref", ref)->required();
  eval_cmd->add_option("--format", eval_format, "plain or jsonl (default: from extension)")
      ->check(CLI::IsMember({"plain", "jsonl"}));
  eval_cmd->add_option("--smoothing", smoothing)->check(CLI::IsMember({"none", "add_one_clipped"}));
  eval_cmd->add_option("--per-example", per_example, "write smoothed sentence BLEU-4 per example (JSONL)");
  eval_cmd->add_option("--scorer", scorer, "external command run as <cmd> <hyp> <ref>");
  eval_cmd->add_option("--name", system_name, "row label");
  eval_cmd->callback([&] {
    action = [&] {
      std::optional<EvalFormat> fmt;
      if (!eval_format.empty()) fmt = eval_format == "jsonl" ? EvalFormat::jsonl : EvalFormat::plain;
      const auto r = evaluate_files(hyp, ref, fmt, *parse_smoothing(smoothing));
      std::cerr << render_bleu_table({{system_name, r.bleu}});
      if (!per_example.empty()) {
        std::string lines;
        for (size_t i = 0; i < r.examples.size(); ++i)
          lines += json{{"id", r.examples[i].id}, {"sentence_bleu", r.sentence_scores[i]}}.dump() + "\n";
        ensure_parent(per_example);
        write_text_file(per_example, lines);
      }
      json out = {{"command", "eval"}, {"examples", r.examples.size()}, {"bleu", to_json(r.bleu)}};
      if (!scorer.empty()) {
        const auto ext = run_external_scorer(scorer, hyp, ref, r.examples.size());
        out["external"] = {{"system", ext.system}, {"per_line", ext.per_line}};
      }
      return out;
    };
  });

  // pipeline
  auto* pipe_cmd = app.add_subcommand("pipeline", "split, index, three augmentations, merge, dedupe");
  fs::path config_path, out_override;
  pipe_cmd->add_option("-c,--config", config_path)->required();
  pipe_cmd->add_option("-o,--out-dir", out_override, "overrides output.dir");
  pipe_cmd->callback([&] {
    action = [&] {
      auto cfg = load_pipeline_config(config_path);
      if (!out_override.empty()) cfg.output = out_override;
      auto be = make_backends(cfg, load_rules(cfg.rules));
      auto r = run_pipeline(cfg, be);
      return json{{"command", "pipeline"}, {"output", cfg.output.string()}, {"manifest", r.manifest}};
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(Errc::config, e.what());
  }

  log::set_level(log_level == "debug" ? log::Level::debug
                 : log_level == "info" ? log::Level::info
                 : log_level == "error" ? log::Level::error
                                        : log::Level::warn);
  try {
    const auto summary = action();
    if (!summary.is_null()) print_summary(summary);
    return 0;
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(Errc::io, e.what());
  } catch (const std::exception& e) {
    return fail(Errc::invalid_argument, e.what());
  }
}
