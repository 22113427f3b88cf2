#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "iocner/iocner.hpp"

using namespace iocner;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kIo = 2, kEmpty = 3, kScheme = 4, kNumeric = 5, kCheckpoint = 6 };

struct Output {
  std::ofstream file;
  std::ostream* out = &std::cout;

  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file.open(path, std::ios::binary);
    if (!file) throw IoError("cannot write '" + path + "'");
    out = &file;
  }
  std::ostream& operator*() { return *out; }
};

FeatureConfig feature_config(const std::string& tld_flag, const std::string& prefix_flag) {
  FeatureConfig cfg = FeatureConfig::bundled();
  std::string tld = tld_flag;
  if (tld.empty()) {
    if (const char* env = std::getenv("IOCNER_TLD_PATH"); env && *env) tld = env;
  }
  if (!tld.empty()) cfg.load_tld_file(tld);
  if (!prefix_flag.empty()) cfg.load_malware_prefix_file(prefix_flag);
  return cfg;
}

std::vector<Sentence> read_input(const std::string& path, bool raw_text) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open input '" + path + "'");
  if (raw_text) return sentences_from_text(in);
  CorpusOptions opts;
  opts.labels_optional = true;
  return parse_corpus(in, LabelScheme{}, opts, path);
}

void write_tagged(std::ostream& out, const std::vector<Sentence>& sentences, const std::vector<std::vector<int>>& labels,
                  const LabelScheme& scheme, const std::string& format) {
  if (format == "conll") {
    write_corpus(out, sentences, scheme, &labels);
    return;
  }
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    for (const auto& span : spans_from_bio(labels[s])) {
      out << span.start << ' ' << span.end << ' ' << scheme.types()[static_cast<std::size_t>(span.entity_type)].code
          << ' ' << span_surface(sentences[s], span) << '\n';
    }
    out << '\n';
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IOC recognition in threat-report text"};
  app.require_subcommand(1);

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "skip-gram token embeddings from raw text (one sentence per line)");
  std::vector<std::string> pre_inputs;
  std::string pre_out;
  SkipGramConfig sg;
  pre->add_option("inputs", pre_inputs, "raw text files")->required();
  pre->add_option("-o,--output", pre_out, "embedding file to write")->required();
  pre->add_option("--dim", sg.dim, "vector size")->capture_default_str();
  pre->add_option("--window", sg.window, "context window")->capture_default_str();
  pre->add_option("--min-count", sg.min_count)->capture_default_str();
  pre->add_option("--iterations", sg.iterations)->capture_default_str();
  pre->add_option("--negatives", sg.negatives)->capture_default_str();
  pre->add_option("--threads", sg.threads)->capture_default_str();
  pre->add_option("--seed", sg.seed)->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "train the tagger with early stopping on validation F1");
  std::string tr_train, tr_val, tr_emb, tr_config, tr_model, tr_history, tr_tld, tr_prefix;
  std::vector<std::string> tr_set;
  std::optional<std::uint64_t> tr_seed;
  std::optional<int> tr_epochs, tr_patience, tr_workers;
  std::optional<double> tr_dropout, tr_lr;
  bool tr_no_features = false, tr_repair = false;
  tr->add_option("--train", tr_train, "training corpus")->required();
  tr->add_option("--val", tr_val, "validation corpus")->required();
  tr->add_option("-o,--model", tr_model, "checkpoint to write")->required();
  tr->add_option("--embeddings", tr_emb, "pretrained embedding file");
  tr->add_option("--config", tr_config, "key = value configuration file");
  tr->add_option("--set", tr_set, "override one configuration key (key=value)");
  tr->add_option("--history", tr_history, "per-epoch history file (default: <model>.history.tsv)");
  tr->add_option("--seed", tr_seed);
  tr->add_option("--max-epochs", tr_epochs);
  tr->add_option("--patience", tr_patience);
  tr->add_option("--dropout", tr_dropout);
  tr->add_option("--learning-rate", tr_lr);
  tr->add_option("--workers", tr_workers, "validation decoding threads");
  tr->add_flag("--no-features", tr_no_features, "drop the spelling-feature channel");
  tr->add_flag("--repair-bio", tr_repair, "turn a leading I-t into B-t instead of failing");
  tr->add_option("--tld-file", tr_tld, "TLD list (default: $IOCNER_TLD_PATH, else bundled)");
  tr->add_option("--malware-prefixes", tr_prefix, "malware prefix list");

  // tag
  auto* tg = app.add_subcommand("tag", "tag sentences with a trained model");
  std::string tg_model, tg_input, tg_out, tg_format = "conll";
  bool tg_text = false;
  int tg_workers = 1;
  tg->add_option("-m,--model", tg_model)->required();
  tg->add_option("input", tg_input, "token-per-line corpus, or raw text with --text")->required();
  tg->add_option("-o,--output", tg_out, "output file (default stdout)");
  tg->add_option("--format", tg_format)->check(CLI::IsMember({"conll", "spans"}))->capture_default_str();
  tg->add_flag("--text", tg_text, "input is raw text, one sentence per line");
  tg->add_option("--workers", tg_workers)->check(CLI::PositiveNumber)->capture_default_str();

  // eval
  auto* ev = app.add_subcommand("eval", "score predictions against gold annotations");
  std::string ev_gold, ev_pred;
  bool ev_token = false, ev_records = false;
  ev->add_option("gold", ev_gold)->required();
  ev->add_option("pred", ev_pred)->required();
  ev->add_flag("--token-level", ev_token, "per-token type agreement instead of exact spans");
  ev->add_flag("--records", ev_records, "machine-readable output: type P R F1 support");

  // baseline
  auto* bl = app.add_subcommand("baseline", "rule-based tagger: spelling patterns plus a training lexicon");
  std::string bl_train, bl_input, bl_out, bl_format = "conll", bl_tld, bl_prefix;
  bool bl_text = false;
  bl->add_option("--train", bl_train, "training corpus for the lexicon")->required();
  bl->add_option("input", bl_input)->required();
  bl->add_option("-o,--output", bl_out);
  bl->add_option("--format", bl_format)->check(CLI::IsMember({"conll", "spans"}))->capture_default_str();
  bl->add_flag("--text", bl_text);
  bl->add_option("--tld-file", bl_tld);
  bl->add_option("--malware-prefixes", bl_prefix);

  // features
  auto* ft = app.add_subcommand("features", "print the 22 spelling features of tokens");
  std::vector<std::string> ft_tokens;
  std::string ft_file, ft_tld, ft_prefix;
  ft->add_option("tokens", ft_tokens);
  ft->add_option("--file", ft_file, "one token per line");
  ft->add_option("--tld-file", ft_tld);
  ft->add_option("--malware-prefixes", ft_prefix);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  using Clock = std::chrono::steady_clock;
  try {
    if (*pre) {
      const auto t0 = Clock::now();
      std::vector<std::vector<std::string>> texts;
      for (const auto& path : pre_inputs) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open '" + path + "'");
        for (auto& s : sentences_from_text(in)) {
          std::vector<std::string> words;
          for (auto& t : s.tokens) words.push_back(std::move(t.surface));
          texts.push_back(std::move(words));
        }
      }
      auto emb = pretrain_skipgram(texts, sg);
      Output out(pre_out);
      write_embeddings(*out, emb.vocab, emb.table);
      if (!*out) throw IoError("write failed for '" + pre_out + "'");
      std::cerr << "vocabulary " << emb.vocab.size() - 1 << " tokens, dim " << emb.table.dim() << ", "
                << std::chrono::duration<double>(Clock::now() - t0).count() << " s\n";
      return kOk;
    }

    if (*tr) {
      TrainConfig cfg;
      if (!tr_config.empty()) cfg = load_train_config(tr_config, cfg);
      for (const auto& kv : tr_set) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got '" + kv + "'");
        set_config_value(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)), "--set: ");
      }
      if (tr_seed) cfg.seed = *tr_seed;
      if (tr_epochs) cfg.max_epochs = *tr_epochs;
      if (tr_patience) cfg.patience = *tr_patience;
      if (tr_dropout) cfg.dropout = *tr_dropout;
      if (tr_lr) cfg.learning_rate = *tr_lr;
      if (tr_workers) cfg.workers = *tr_workers;
      if (tr_no_features) cfg.dims.use_features = false;

      const auto features = feature_config(tr_tld, tr_prefix);
      CorpusOptions opts;
      opts.repair_bio = tr_repair;
      LabelScheme scheme;
      auto train_set = load_corpus(tr_train, scheme, opts);
      auto val_set = load_corpus(tr_val, scheme, opts);
      std::optional<PretrainedEmbeddings> emb;
      if (!tr_emb.empty()) {
        std::ifstream in(tr_emb);
        if (!in) throw IoError("cannot open embeddings '" + tr_emb + "'");
        Rng rng(cfg.seed);
        emb = read_embeddings(in, rng, tr_emb);
        cfg.dims.token_dim = emb->table.dim();
      }

      const std::string history_path = tr_history.empty() ? tr_model + ".history.tsv" : tr_history;
      std::ofstream hist(history_path);
      if (!hist) throw IoError("cannot write '" + history_path + "'");
      hist << "epoch\tloss\tval_f1\tseconds\tbest\n";
      TrainHooks hooks;
      hooks.on_epoch = [&](const EpochRecord& r) {
        hist << r.epoch << '\t' << r.train_loss << '\t' << r.val_f1 << '\t' << fmt(r.seconds) << '\t'
             << (r.best ? "*" : "") << '\n';
        hist.flush();
        std::cerr << "epoch " << r.epoch << "  loss " << fmt(r.train_loss) << "  val F1 " << fmt(r.val_f1)
                  << (r.best ? "  *" : "") << '\n';
      };
      auto result = train(train_set, val_set, cfg, emb ? &*emb : nullptr, features, scheme, hooks);
      save_model(result.model, cfg, tr_model);
      std::cerr << "best epoch " << result.history.best_epoch << ", val F1 " << fmt(result.history.best_val_f1)
                << '\n';
      return kOk;
    }

    if (*tg) {
      auto loaded = load_model(tg_model);
      auto sentences = read_input(tg_input, tg_text);
      auto labels = tag_all(loaded.model, sentences, tg_workers);
      Output out(tg_out);
      write_tagged(*out, sentences, labels, loaded.model.scheme(), tg_format);
      return kOk;
    }

    if (*ev) {
      LabelScheme scheme;
      auto gold = load_corpus(ev_gold, scheme);
      auto pred = load_corpus(ev_pred, scheme);
      auto rep = evaluate_corpora(gold, pred, scheme, ev_token ? MatchLevel::Token : MatchLevel::Span);
      std::cout << (ev_records ? format_report_records(rep, scheme) : format_report_table(rep, scheme));
      return kOk;
    }

    if (*bl) {
      LabelScheme scheme;
      const auto features = feature_config(bl_tld, bl_prefix);
      auto train_set = load_corpus(bl_train, scheme);
      auto lex = build_lexicon(train_set, scheme);
      std::map<int, std::size_t> per_type;
      for (const auto& [surface, type] : lex) ++per_type[type];
      std::cerr << "lexicon " << lex.size() << " entries";
      for (const auto& [type, n] : per_type) std::cerr << ", " << scheme.types()[static_cast<std::size_t>(type)].code << ' ' << n;
      std::cerr << '\n';
      auto sentences = read_input(bl_input, bl_text);
      std::vector<std::vector<int>> labels;
      for (const auto& s : sentences) labels.push_back(baseline_tag(s, lex, features, scheme));
      Output out(bl_out);
      write_tagged(*out, sentences, labels, scheme, bl_format);
      return kOk;
    }

    if (*ft) {
      const auto cfg = feature_config(ft_tld, ft_prefix);
      std::vector<std::string> tokens = ft_tokens;
      if (!ft_file.empty()) {
        std::ifstream in(ft_file);
        if (!in) throw IoError("cannot open '" + ft_file + "'");
        std::string line;
        while (std::getline(in, line)) {
          if (!line.empty() && line.back() == '\r') line.pop_back();
          if (!line.empty()) tokens.push_back(line);
        }
      }
      if (tokens.empty()) throw CLI::ValidationError("features", "give tokens or --file");
      for (const auto& t : tokens) {
        const auto f = compute_features(t, cfg);
        std::cout << t << '\t';
        for (std::size_t d = 0; d < f.size(); ++d) std::cout << (d ? " " : "") << f[d];
        std::cout << '\n';
      }
      return kOk;
    }
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const AlignmentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const EmptyCorpusError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kEmpty;
  } catch (const SchemeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kScheme;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheckpoint;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}
