#include "hce/tool/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>

#include "hce/common/utf8.hpp"
#include "hce/diag/diag.hpp"
#include "hce/kernels/kernels.hpp"
#include "hce/tool/config.hpp"
#include "hce/tool/manifest.hpp"

namespace hce::tool {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kIo: return 3;
    case ErrorCategory::kParse: return 5;
    case ErrorCategory::kData:
    case ErrorCategory::kValidation:
    case ErrorCategory::kCycle:
    case ErrorCategory::kExpansion: return 4;
    default: return 1;
  }
}

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out_dir = "out";
  int threads = 1;
};

/// Shared state of one invocation.
struct Context {
  Globals g;
  std::vector<std::string> argv;
  std::ostream& out;
  std::ostream& err;
  Manifest manifest;

  fs::path out_path(const std::string& name) {
    fs::create_directories(g.out_dir);
    const fs::path p = fs::path(g.out_dir) / name;
    manifest.outputs.push_back(p.string());
    return p;
  }

  void begin(const std::string& command, const json& config, std::uint64_t seed) {
    manifest.command = command;
    manifest.argv = argv;
    manifest.config = config;
    manifest.config_hash = config_hash(config);
    manifest.seed = seed;
    manifest.started = utc_now();
  }

  void finish() {
    manifest.finished = utc_now();
    fs::create_directories(g.out_dir);
    write_manifest(fs::path(g.out_dir) / "manifest.json", manifest);
  }
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  return f;
}

ids::RuleTable load_rules(const std::string& rules, const std::string& unify) {
  if (rules.empty()) throw ValidationError("no rule table given (--rules or data.rules)");
  ids::RuleTable t = ids::load_rule_table(rules);
  if (!unify.empty()) t.set_unification(ids::load_unification_map(unify));
  return t;
}

std::string require(const std::string& v, const std::string& what) {
  if (v.empty()) throw ValidationError("missing " + what);
  return v;
}

char32_t single_char(const std::string& s) {
  const std::u32string u = utf8::decode(s);
  if (u.size() != 1) throw ValidationError("expected exactly one character, got '" + s + "'");
  return u[0];
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void write_history(std::ostream& f, const std::vector<pron::EpochRecord>& h) {
  f << "epoch,train_loss,val_TER,val_SER,train_TER\n";
  for (const auto& r : h) {
    f << r.epoch << ',' << fixed(r.train_loss, 6) << ',' << fixed(r.val_ter) << ',' << fixed(r.val_ser) << ','
      << (r.train_ter ? fixed(*r.train_ter) : "") << '\n';
  }
}

PronSpec pron_spec(Context& ctx) {
  PronSpec s = load_pron_config(require(ctx.g.config, "--config"));
  if (ctx.g.seed) s.run.seed = *ctx.g.seed;
  return s;
}

void add_pron_data(Manifest& m, const DataPaths& d) {
  m.add_data(d.rules);
  m.add_data(d.unify);
  m.add_data(d.split);
}

json checkpoint_data(const DataPaths& d) { return {{"data", d.to_json()}}; }

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context ctx{{}, args, out, err, {}};
  CLI::App app{"Hierarchical character embeddings: decomposition, pronunciation and language models", "hce"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.add_option("--seed", ctx.g.seed, "Random seed (overrides the config)");
  app.add_option("--config", ctx.g.config, "JSON run configuration");
  app.add_option("--out-dir", ctx.g.out_dir, "Directory for outputs and the manifest");
  app.add_option("--threads", ctx.g.threads, "Kernel threads")->check(CLI::PositiveNumber);

  std::vector<std::string> chars;
  std::string rules, unify, format = "bracketed", readings, variants, checkpoint, split, partition = "test", corpus;
  std::vector<int> scenarios;
  std::size_t k = 10;
  bool no_cache = false;
  std::function<void()> action;

  auto add_rules = [&](CLI::App* c) {
    c->add_option("--rules", rules, "IDS rule table");
    c->add_option("--unify", unify, "Variant unification pairs");
  };

  auto* decompose = app.add_subcommand("decompose", "Print the glyph tree of characters");
  decompose->add_option("chars", chars, "Characters")->required();
  add_rules(decompose);
  decompose->add_option("--format", format, "bracketed|indented|preorder")
      ->check(CLI::IsMember({"bracketed", "indented", "preorder"}));
  decompose->callback([&] {
    action = [&] {
      const auto table = load_rules(rules, unify);
      for (const auto& s : chars) {
        for (char32_t c : utf8::decode(s)) {
          const auto t = ids::decompose(c, table);
          if (format == "indented") {
            out << t.to_indented();
          } else if (format == "preorder") {
            out << utf8::encode(ids::linearize(t, ids::LinearOrder::kPreOrder)) << '\n';
          } else {
            out << utf8::encode(c) << '\t' << t.to_bracketed() << '\n';
          }
        }
      }
    };
  });

  auto* validate = app.add_subcommand("validate-rules", "Load a rule table and expand every rule");
  add_rules(validate);
  validate->callback([&] {
    action = [&] {
      const auto table = load_rules(rules, unify);
      const auto r = ids::summarize(table);
      json hist = json::object();
      for (const auto& [d, n] : r.depth_histogram) hist[std::to_string(d)] = n;
      const json report = {{"rules", r.rule_count},         {"terminals", r.terminal_count},
                           {"leaf_set", r.declared_terminals}, {"malformed_lines", r.malformed_lines},
                           {"duplicate_lines", r.duplicate_lines}, {"expansion_failures", r.expansion_failures},
                           {"depth_histogram", hist}};
      out << report.dump(2) << '\n';
      if (r.expansion_failures > 0) {
        throw ValidationError(std::to_string(r.expansion_failures) + " rules failed to expand");
      }
    };
  });

  auto* prepare = app.add_subcommand("prepare-data", "Build scenario splits from Unihan files");
  prepare->add_option("--readings", readings, "Unihan_Readings.txt")->required();
  prepare->add_option("--variants", variants, "Unihan_Variants.txt")->required();
  prepare->add_option("--scenario", scenarios, "Scenarios to build (default 1 2 3)")->check(CLI::Range(1, 3));
  prepare->callback([&] {
    action = [&] {
      const std::uint64_t seed = ctx.g.seed.value_or(0);
      if (scenarios.empty()) scenarios = {1, 2, 3};
      ctx.begin("prepare-data", {{"readings", readings}, {"variants", variants}, {"scenarios", scenarios}}, seed);
      ctx.manifest.add_data(readings);
      ctx.manifest.add_data(variants);
      phono::ParseStats rs, vs;
      const auto rmap = phono::parse_unihan_readings(readings, &rs);
      const auto vmap = phono::load_unihan_variants(variants, &vs);
      phono::CorpusStats cs;
      const auto corpus_entries = phono::build_corpus(rmap, vmap, seed, &cs);
      json summary = {{"characters", cs.characters}, {"dropped_readings", cs.dropped_readings}};
      for (int s : scenarios) {
        const auto sp = phono::build_scenario(corpus_entries, s, phono::table_sizes(s), seed, vmap);
        const auto path = ctx.out_path("split_s" + std::to_string(s) + ".csv");
        phono::write_split_csv(path, sp);
        summary["scenario" + std::to_string(s)] = {
            {"train", sp.train.size()}, {"validation", sp.validation.size()}, {"test", sp.test.size()}};
      }
      out << summary.dump(2) << '\n';
      ctx.finish();
    };
  });

  auto* train_pron = app.add_subcommand("train-pron", "Train a pronunciation model");
  train_pron->callback([&] {
    action = [&] {
      const PronSpec s = pron_spec(ctx);
      ctx.begin("train-pron", s.run.to_json(), s.run.seed);
      add_pron_data(ctx.manifest, s.data);
      const auto table = load_rules(s.data.rules, s.data.unify);
      const auto sp = phono::read_split_csv(require(s.data.split, "data.split"));
      pron::TrainOptions opt;
      opt.on_epoch = [&](const pron::EpochRecord& r) {
        err << "epoch " << r.epoch << " loss " << fixed(r.train_loss) << " val TER " << fixed(r.val_ter, 2) << '\n';
      };
      auto result = pron::train(s.run, sp, table, opt);
      result.best.manifest.update(checkpoint_data(s.data));
      ad::save_checkpoint(ctx.out_path("model.ckpt"), result.best);
      auto hist = open_out(ctx.out_path("history.csv"));
      write_history(hist, result.history);
      pron::PronModel model(result.best);
      const auto test = pron::evaluate(model, sp.test, table);
      open_out(ctx.out_path("test_eval.json")) << test.to_json().dump(2) << '\n';
      out << json{{"best_epoch", result.best_epoch}, {"best_val_TER", result.best_val_ter}, {"test", test.to_json()}}
                 .dump(2)
          << '\n';
      ctx.finish();
    };
  });

  auto* eval_pron = app.add_subcommand("eval-pron", "Evaluate a pronunciation checkpoint on a split partition");
  eval_pron->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  eval_pron->add_option("--split", split, "Split CSV")->required();
  eval_pron->add_option("--partition", partition, "train|validation|test");
  add_rules(eval_pron);
  eval_pron->callback([&] {
    action = [&] {
      const auto ckpt = ad::load_checkpoint(checkpoint);
      const json data = ckpt.manifest.value("data", json::object());
      if (rules.empty()) rules = data.value("rules", "");
      if (unify.empty()) unify = data.value("unify", "");
      ctx.begin("eval-pron", {{"checkpoint", checkpoint}, {"split", split}, {"partition", partition}},
                ctx.g.seed.value_or(0));
      ctx.manifest.add_data(checkpoint);
      ctx.manifest.add_data(split);
      ctx.manifest.add_data(rules);
      const auto table = load_rules(rules, unify);
      const auto sp = phono::read_split_csv(split);
      const auto& part = sp.part(phono::parse_partition(partition));
      if (part.empty()) throw DataError("partition '" + partition + "' is empty");
      const auto report = pron::evaluate(ckpt, part, table);
      open_out(ctx.out_path("eval.json")) << report.to_json().dump(2) << '\n';
      out << report.to_json().dump(2) << '\n';
      ctx.finish();
    };
  });

  auto* grid = app.add_subcommand("grid-search", "Learning-rate by dropout grid search");
  grid->callback([&] {
    action = [&] {
      const PronSpec s = pron_spec(ctx);
      json cfg = s.run.to_json();
      const pron::Grid g = s.grid.value_or(pron::Grid::standard());
      cfg["grid"] = {{"lr", g.lr}, {"dropout", g.dropout}};
      ctx.begin("grid-search", cfg, s.run.seed);
      add_pron_data(ctx.manifest, s.data);
      const auto table = load_rules(s.data.rules, s.data.unify);
      const auto sp = phono::read_split_csv(require(s.data.split, "data.split"));
      auto result = pron::grid_search(s.run, sp, table, g);
      auto f = open_out(ctx.out_path("grid.csv"));
      pron::write_grid_csv(f, result);
      result.best_run.best.manifest.update(checkpoint_data(s.data));
      ad::save_checkpoint(ctx.out_path("best.ckpt"), result.best_run.best);
      out << json{{"untrained_val_TER", result.untrained_ter},
                  {"best_lr", result.best_config.lr},
                  {"best_dropout", result.best_config.dropout},
                  {"best_val_TER", result.best_run.best_val_ter}}
                 .dump(2)
          << '\n';
      ctx.finish();
    };
  });

  auto* matrix = app.add_subcommand("run-matrix", "Train and test every configuration of a matrix");
  matrix->callback([&] {
    action = [&] {
      MatrixSpec s = load_matrix_config(require(ctx.g.config, "--config"));
      if (ctx.g.seed) {
        for (auto& c : s.cells) c.seed = *ctx.g.seed;
      }
      json cells = json::array();
      for (const auto& c : s.cells) cells.push_back(c.to_json());
      ctx.begin("run-matrix", {{"cells", cells}}, s.cells.empty() ? 0 : s.cells[0].seed);
      ctx.manifest.add_data(s.data.rules);
      ctx.manifest.add_data(s.data.unify);
      for (const auto& [sc, p] : s.splits) ctx.manifest.add_data(p);
      const auto table = load_rules(s.data.rules, s.data.unify);
      std::map<int, phono::DatasetSplit> loaded;
      const pron::SplitProvider provider = [&](int scenario) -> const phono::DatasetSplit& {
        auto it = loaded.find(scenario);
        if (it != loaded.end()) return it->second;
        std::string path = s.splits.count(scenario) ? s.splits.at(scenario) : s.data.split;
        if (path.empty()) throw ValidationError("no split CSV for scenario " + std::to_string(scenario));
        return loaded.emplace(scenario, phono::read_split_csv(path)).first->second;
      };
      const auto rows = pron::run_matrix(s.cells, provider, table, s.grid);
      auto f = open_out(ctx.out_path("report.csv"));
      pron::write_report_csv(f, rows);
      pron::write_report_csv(out, rows);
      ctx.finish();
    };
  });

  auto* train_lm = app.add_subcommand("train-lm", "Train a character language model");
  train_lm->callback([&] {
    action = [&] {
      LmSpec s = load_lm_config(require(ctx.g.config, "--config"));
      if (ctx.g.seed) s.config.seed = *ctx.g.seed;
      ctx.begin("train-lm", s.config.to_json(), s.config.seed);
      for (const auto* p : {&s.train, &s.valid, &s.test, &s.rules, &s.unify}) ctx.manifest.add_data(*p);
      const ids::RuleTable table = s.rules.empty() ? ids::RuleTable{} : load_rules(s.rules, s.unify);
      const auto train_lines = lm::read_corpus(require(s.train, "data.train"));
      const auto valid_lines = s.valid.empty() ? std::vector<std::u32string>{} : lm::read_corpus(s.valid);
      auto result = lm::train_lm(s.config, train_lines, valid_lines, table);
      result.checkpoint.manifest["data"] = {{"rules", s.rules}, {"unify", s.unify}};
      ad::save_checkpoint(ctx.out_path("lm.ckpt"), result.checkpoint);
      auto hist = open_out(ctx.out_path("history.csv"));
      hist << "epoch,train_BPC,valid_BPC\n";
      for (const auto& r : result.history) {
        hist << r.epoch << ',' << fixed(r.train_bpc) << ',' << (r.valid_bpc ? fixed(*r.valid_bpc) : "") << '\n';
      }
      json summary = {{"epochs", result.history.size()}};
      if (!s.test.empty()) {
        lm::LmModel model(result.checkpoint);
        lm::LmEvalOptions eo;
        eo.rules = &table;
        summary["test"] = lm::eval_lm(model, lm::read_corpus(s.test), eo).to_json();
      }
      out << summary.dump(2) << '\n';
      ctx.finish();
    };
  });

  auto* eval_lm = app.add_subcommand("eval-lm", "Bits per character and perplexity of a corpus");
  eval_lm->add_option("--checkpoint", checkpoint, "LM checkpoint")->required();
  eval_lm->add_option("--corpus", corpus, "One sentence per line")->required();
  eval_lm->add_flag("--no-cache", no_cache, "Recompose hierarchical embeddings per chunk");
  add_rules(eval_lm);
  eval_lm->callback([&] {
    action = [&] {
      const auto ckpt = ad::load_checkpoint(checkpoint);
      const json data = ckpt.manifest.value("data", json::object());
      if (rules.empty()) rules = data.value("rules", "");
      if (unify.empty()) unify = data.value("unify", "");
      ctx.begin("eval-lm", {{"checkpoint", checkpoint}, {"corpus", corpus}, {"cache", !no_cache}},
                ctx.g.seed.value_or(0));
      ctx.manifest.add_data(checkpoint);
      ctx.manifest.add_data(corpus);
      const ids::RuleTable table = rules.empty() ? ids::RuleTable{} : load_rules(rules, unify);
      lm::LmModel model(ckpt);
      lm::LmEvalOptions eo;
      eo.rules = &table;
      eo.use_cache = !no_cache;
      const auto r = lm::eval_lm(model, lm::read_corpus(corpus), eo);
      open_out(ctx.out_path("eval.json")) << r.to_json().dump(2) << '\n';
      out << r.to_json().dump(2) << '\n';
      ctx.finish();
    };
  });

  auto* gate = app.add_subcommand("gate-bias", "Left/right forget-gate norms at left-right roots");
  gate->add_option("--checkpoint", checkpoint, "treeLSTM pronunciation checkpoint")->required();
  gate->add_option("--split", split, "Split CSV")->required();
  gate->add_option("--partition", partition, "train|validation|test");
  add_rules(gate);
  gate->callback([&] {
    action = [&] {
      const auto ckpt = ad::load_checkpoint(checkpoint);
      const json data = ckpt.manifest.value("data", json::object());
      if (rules.empty()) rules = data.value("rules", "");
      if (unify.empty()) unify = data.value("unify", "");
      const auto table = load_rules(rules, unify);
      pron::PronModel model(ckpt);
      const auto sp = phono::read_split_csv(split);
      const auto trees = pron::decompose_entries(sp.part(phono::parse_partition(partition)), table);
      out << diag::gate_bias(model, trees).to_json().dump(2) << '\n';
    };
  });

  std::string query;
  auto* probe = app.add_subcommand("probe", "Decode every intermediate state of one character");
  probe->add_option("char", query, "Character")->required();
  probe->add_option("--checkpoint", checkpoint, "Pronunciation checkpoint")->required();
  add_rules(probe);
  probe->callback([&] {
    action = [&] {
      const auto ckpt = ad::load_checkpoint(checkpoint);
      const json data = ckpt.manifest.value("data", json::object());
      if (rules.empty()) rules = data.value("rules", "");
      if (unify.empty()) unify = data.value("unify", "");
      const auto table = load_rules(rules, unify);
      pron::PronModel model(ckpt);
      const char32_t c = single_char(query);
      const auto trace = diag::probe(model, ids::decompose(c, table));
      diag::write_probe_csv(out, trace);
    };
  });

  auto* neighbors = app.add_subcommand("neighbors", "Cosine nearest neighbours of a character");
  neighbors->add_option("char", query, "Character")->required();
  neighbors->add_option("-k", k, "Number of neighbours")->check(CLI::PositiveNumber);
  neighbors->add_option("--checkpoint", checkpoint, "Pronunciation or LM checkpoint")->required();
  neighbors->add_option("--split", split, "Candidate characters from a split CSV (pronunciation models)");
  add_rules(neighbors);
  neighbors->callback([&] {
    action = [&] {
      const auto ckpt = ad::load_checkpoint(checkpoint);
      const json data = ckpt.manifest.value("data", json::object());
      if (rules.empty()) rules = data.value("rules", "");
      if (unify.empty()) unify = data.value("unify", "");
      const ids::RuleTable table = rules.empty() ? ids::RuleTable{} : load_rules(rules, unify);
      const char32_t q = single_char(query);
      std::vector<char32_t> cand;
      ad::Tensor vectors;
      ad::Tensor qv;
      if (ckpt.manifest.value("kind", "") == "lm") {
        lm::LmModel model(ckpt);
        for (char32_t c : model.chars().tokens()) {
          if (c != ids::kUnk && c != lm::kEos) cand.push_back(c);
        }
        vectors = diag::lm_embeddings(model, cand, &table);
        const char32_t one[] = {q};
        qv = diag::lm_embeddings(model, one, &table);
      } else {
        pron::PronModel model(ckpt);
        const auto sp = phono::read_split_csv(require(split, "--split"));
        std::set<char32_t> seen;
        for (auto p : {phono::Partition::kTrain, phono::Partition::kValidation, phono::Partition::kTest}) {
          for (const auto& e : sp.part(p)) seen.insert(e.ch);
        }
        cand.assign(seen.begin(), seen.end());
        vectors = diag::pron_embeddings(model, cand, table);
        const char32_t one[] = {q};
        qv = diag::pron_embeddings(model, one, table);
      }
      const auto r = diag::nearest_neighbors(cand, vectors, qv.row(0), q, k);
      for (const auto& w : r.warnings) err << "warning: " << w << '\n';
      out << "rank,char,cosine\n";
      for (std::size_t i = 0; i < r.neighbors.size(); ++i) {
        out << i + 1 << ',' << utf8::encode(r.neighbors[i].ch) << ',' << fixed(r.neighbors[i].similarity, 6) << '\n';
      }
    };
  });

  std::vector<const char*> argv{"hce"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    kernels::set_threads(ctx.g.threads);
    action();
    return 0;
  } catch (const Error& e) {
    err << "error [" << category_name(e.category()) << "]: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const fs::filesystem_error& e) {
    err << "error [io]: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace hce::tool
