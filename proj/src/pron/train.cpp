#include "hce/pron/train.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "hce/ad/optim.hpp"
#include "hce/common/error.hpp"

namespace hce::pron {

namespace {

void require_nonempty(const phono::DatasetSplit& split) {
  if (split.train.empty()) throw DataError("training partition is empty");
  if (split.validation.empty()) throw DataError("validation partition is empty");
}

enc::TokenVocab vocab_for(std::span<const ids::GlyphTree> train_trees) { return vocab_from_trees(train_trees); }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = model.to_json();
  j["scenario"] = scenario;
  j["lr"] = lr;
  j["dropout"] = dropout;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["clip"] = clip;
  j["weight_decay"] = weight_decay;
  j["patience"] = patience;
  return j;
}

EvalReport evaluate(PronModel& model, std::span<const phono::PronEntry> entries, const ids::RuleTable& rules) {
  const auto trees = decompose_entries(entries, rules);
  const auto ptrs = pointers(trees);
  const auto predicted = model.predict(ptrs);
  std::vector<phono::Syllable> gold;
  gold.reserve(entries.size());
  for (const auto& e : entries) gold.push_back(e.pron);
  return score(predicted, gold);
}

EvalReport evaluate(const ad::Checkpoint& ckpt, std::span<const phono::PronEntry> entries,
                    const ids::RuleTable& rules) {
  PronModel model(ckpt);
  return evaluate(model, entries, rules);
}

double untrained_ter(const RunConfig& config, const phono::DatasetSplit& split, const ids::RuleTable& rules) {
  require_nonempty(split);
  const auto train_trees = decompose_entries(split.train, rules);
  Rng rng(config.seed);
  Rng init = rng.split(1);
  PronModel model(config.model, vocab_for(train_trees), Inventories::from_entries(split.train), init);
  return evaluate(model, split.validation, rules).ter;
}

TrainResult train(const RunConfig& config, const phono::DatasetSplit& split, const ids::RuleTable& rules,
                  const TrainOptions& options) {
  require_nonempty(split);
  if (config.batch_size == 0) throw ValidationError("batch_size must be positive");
  if (config.lr < 0) throw ValidationError("lr must be non-negative");

  const auto train_trees = decompose_entries(split.train, rules);
  const auto val_trees = decompose_entries(split.validation, rules);
  const auto train_ptrs = pointers(train_trees);
  const auto val_ptrs = pointers(val_trees);
  const Inventories inv = Inventories::from_entries(split.train);

  // Same sub-stream layout as untrained_ter so both see the same initial model.
  Rng rng(config.seed);
  Rng init = rng.split(1);
  Rng order_rng = rng.split(2);
  Rng drop_rng = rng.split(3);
  PronModel model(config.model, vocab_for(train_trees), inv, init);

  std::vector<std::array<std::size_t, 3>> targets;
  targets.reserve(split.train.size());
  for (const auto& e : split.train) targets.push_back(targets_of(inv, e.pron));
  std::vector<phono::Syllable> val_gold, train_gold;
  for (const auto& e : split.validation) val_gold.push_back(e.pron);
  for (const auto& e : split.train) train_gold.push_back(e.pron);

  ad::AdamState adam;
  adam.config.lr = config.lr;
  adam.config.weight_decay = config.weight_decay;
  ad::ParameterStore& store = model.store();
  store.zero_grad();

  const nlohmann::json manifest = {{"run", config.to_json()}};
  TrainResult result;
  result.best_val_ter = INFINITY;
  std::vector<std::size_t> perm(split.train.size());
  std::iota(perm.begin(), perm.end(), 0);
  const bool track = options.track_train_ter || options.stop_on_zero_train_ter;
  int since_best = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(perm));
    double loss_sum = 0;
    for (std::size_t b = 0; b < perm.size(); b += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, perm.size() - b);
      std::vector<const ids::GlyphTree*> batch(n);
      std::array<std::vector<std::size_t>, 3> tgt;
      for (std::size_t i = 0; i < n; ++i) {
        batch[i] = train_ptrs[perm[b + i]];
        for (int u = 0; u < 3; ++u) tgt[u].push_back(targets[perm[b + i]][u]);
      }
      ad::Tape tape;
      const enc::EncodeOptions opt{true, config.dropout, &drop_rng};
      const ad::Var total = pron_loss(model.forward(tape, batch, opt), tgt);
      loss_sum += total.value()[0];
      tape.backward(ad::scale(total, Real(1) / static_cast<Real>(n)));
      if (config.clip > 0) store.clip_grad_norm(config.clip);
      ad::adam_step(store, adam);
      store.zero_grad();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(perm.size());
    const EvalReport val = score(model.predict(val_ptrs), val_gold);
    rec.val_ter = val.ter;
    rec.val_ser = val.ser;
    if (track) rec.train_ter = score(model.predict(train_ptrs), train_gold).ter;
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    if (val.ter < result.best_val_ter) {
      result.best_val_ter = val.ter;
      result.best_epoch = epoch;
      result.best = model.checkpoint(manifest);
      since_best = 0;
    } else {
      ++since_best;
    }
    if (options.stop_on_zero_train_ter && rec.train_ter && *rec.train_ter == 0) break;
    if (config.patience > 0 && since_best >= config.patience) break;
  }
  if (result.history.empty()) {
    // Zero-epoch budget: the initial model is the only candidate.
    result.best_val_ter = score(model.predict(val_ptrs), val_gold).ter;
    result.best = model.checkpoint(manifest);
  }
  result.best.manifest["best_epoch"] = result.best_epoch;
  result.best.manifest["best_val_ter"] = result.best_val_ter;
  return result;
}

Grid Grid::standard() { return {{3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4}, {0.0, 0.1, 0.2, 0.3, 0.4, 0.5}}; }

GridResult grid_search(const RunConfig& base, const phono::DatasetSplit& split, const ids::RuleTable& rules,
                       const Grid& grid, const TrainOptions& options) {
  if (grid.lr.empty() || grid.dropout.empty()) throw ValidationError("grid must have at least one cell");
  GridResult out;
  out.untrained_ter = untrained_ter(base, split, rules);
  bool have = false;
  for (Real lr : grid.lr) {
    for (Real dropout : grid.dropout) {
      RunConfig cfg = base;
      cfg.lr = lr;
      cfg.dropout = dropout;
      TrainResult run = train(cfg, split, rules, options);
      out.cells.push_back({lr, dropout, run.best_val_ter, run.best_epoch});
      const bool better = !have || run.best_val_ter < out.best_run.best_val_ter ||
                          (run.best_val_ter == out.best_run.best_val_ter &&
                           (lr < out.best_config.lr || (lr == out.best_config.lr && dropout < out.best_config.dropout)));
      if (better) {
        out.best_config = cfg;
        out.best_run = std::move(run);
        have = true;
      }
    }
  }
  return out;
}

void write_grid_csv(std::ostream& out, const GridResult& result) {
  out << "lr,dropout,val_TER,best_epoch\n";
  for (const auto& c : result.cells) {
    out << c.lr << ',' << c.dropout << ',' << fmt(c.val_ter) << ',' << c.best_epoch << '\n';
  }
}

MatrixRow row_labels(const RunConfig& config) {
  MatrixRow row;
  const auto& e = config.model.encoder;
  row.model = e.model_name();
  if (config.model.output_order != OutputOrder::kCodaFirst) row.model += " " + std::string(to_string(config.model.output_order));
  row.scenario = config.scenario;
  row.order = e.kind == enc::EncoderKind::kTreeLstm ? "tree" : ids::to_string(e.order);
  row.ablation = e.op_inputs ? "none" : "no-ops";
  return row;
}

std::vector<MatrixRow> run_matrix(std::span<const RunConfig> cells, const SplitProvider& splits,
                                  const ids::RuleTable& rules, const std::optional<Grid>& grid,
                                  const TrainOptions& options) {
  std::vector<MatrixRow> rows;
  for (const auto& cfg : cells) {
    const phono::DatasetSplit& split = splits(cfg.scenario);
    if (split.test.empty()) throw DataError("test partition is empty for scenario " + std::to_string(cfg.scenario));
    const ad::Checkpoint best =
        grid ? grid_search(cfg, split, rules, *grid, options).best_run.best : train(cfg, split, rules, options).best;
    MatrixRow row = row_labels(cfg);
    row.report = evaluate(best, split.test, rules);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_report_csv(std::ostream& out, std::span<const MatrixRow> rows) {
  out << kReportHeader << '\n';
  for (const auto& r : rows) {
    out << r.model << ',' << r.scenario << ',' << r.order << ',' << r.ablation << ',' << fmt(r.report.ser) << ','
        << fmt(r.report.ter) << ',' << fmt(r.report.unit_rates[0]) << ',' << fmt(r.report.unit_rates[1]) << ','
        << fmt(r.report.unit_rates[2]) << '\n';
  }
}

}  // namespace hce::pron
