#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hce/ad/checkpoint.hpp"
#include "hce/ids/ids.hpp"
#include "hce/phono/phono.hpp"
#include "hce/pron/metrics.hpp"
#include "hce/pron/model.hpp"

namespace hce::pron {

struct RunConfig {
  PronModelConfig model;
  int scenario = 1;
  Real lr = 1e-3;
  Real dropout = 0;
  int epochs = 200;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  Real clip = 5.0;
  Real weight_decay = 0;
  /// Stop after this many epochs without validation improvement; 0 disables.
  int patience = 0;

  nlohmann::json to_json() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;  // mean summed cross-entropy per example
  double val_ter = 0;
  double val_ser = 0;
  std::optional<double> train_ter;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainOptions {
  /// Evaluate the training partition after every epoch.
  bool track_train_ter = false;
  /// Stop as soon as training TER reaches 0 (implies tracking).
  bool stop_on_zero_train_ter = false;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  ad::Checkpoint best;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_ter = 0;
};

/// Mini-batch Adam over shuffled epochs, keeping the parameters with the
/// lowest validation TER (earliest on ties). Throws DataError when the train
/// or validation partition is empty.
TrainResult train(const RunConfig& config, const phono::DatasetSplit& split, const ids::RuleTable& rules,
                  const TrainOptions& options = {});

/// Argmax decoding of every entry in `entries`.
EvalReport evaluate(PronModel& model, std::span<const phono::PronEntry> entries, const ids::RuleTable& rules);
EvalReport evaluate(const ad::Checkpoint& ckpt, std::span<const phono::PronEntry> entries,
                    const ids::RuleTable& rules);

/// Validation TER of a freshly initialised model for `config`.
double untrained_ter(const RunConfig& config, const phono::DatasetSplit& split, const ids::RuleTable& rules);

struct Grid {
  std::vector<Real> lr;
  std::vector<Real> dropout;

  /// Log-spaced rates 3e-2 … 1e-4 and dropout 0 … 0.5 in steps of 0.1.
  static Grid standard();
};

struct GridCell {
  Real lr = 0;
  Real dropout = 0;
  double val_ter = 0;
  int best_epoch = 0;
};

struct GridResult {
  RunConfig best_config;
  TrainResult best_run;
  double untrained_ter = 0;
  std::vector<GridCell> cells;
};

/// Trains every cell; lowest validation TER wins, ties go to the lower
/// learning rate and then the lower dropout.
GridResult grid_search(const RunConfig& base, const phono::DatasetSplit& split, const ids::RuleTable& rules,
                       const Grid& grid, const TrainOptions& options = {});

void write_grid_csv(std::ostream& out, const GridResult& result);

struct MatrixRow {
  std::string model;
  int scenario = 1;
  std::string order;     // linearization, or "tree"
  std::string ablation;  // "none" or "no-ops"
  EvalReport report;
};

/// Row labels for a configuration.
MatrixRow row_labels(const RunConfig& config);

using SplitProvider = std::function<const phono::DatasetSplit&(int scenario)>;

/// Trains each cell (with a grid search when `grid` is given) and scores the
/// selected model on the test partition.
std::vector<MatrixRow> run_matrix(std::span<const RunConfig> cells, const SplitProvider& splits,
                                  const ids::RuleTable& rules, const std::optional<Grid>& grid,
                                  const TrainOptions& options = {});

inline constexpr const char* kReportHeader = "model,scenario,order,ablation,SER,TER,onset,nucleus,coda";
void write_report_csv(std::ostream& out, std::span<const MatrixRow> rows);

}  // namespace hce::pron
