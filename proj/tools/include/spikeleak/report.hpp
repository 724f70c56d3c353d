#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spikeleak/attacks.hpp"
#include "spikeleak/datasets.hpp"
#include "spikeleak/judge.hpp"
#include "spikeleak/metrics.hpp"

namespace spikeleak::report {

/// Bad or inconsistent experiment configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or malformed input data (exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every sample of an attack run diverged (exit code 4).
class AllDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int { kOk = 0, kInternal = 1, kConfig = 2, kData = 3, kAllDiverged = 4 };

/// Where samples come from. mnist reads IDX files from dir; gesture and blobs are
/// generated from seed (the test split uses a derived seed so splits never overlap).
struct DataSource {
  std::string kind = "mnist";
  std::filesystem::path dir;
  std::string split = "test";
  /// Samples to generate for synthetic kinds; 0 picks the per-kind default.
  std::size_t count = 0;
  std::size_t side = 32;
  std::size_t timesteps = 20;
  std::uint64_t seed = 0;

  void validate() const;
  LabeledDataset load() const;
  std::size_t num_classes() const;
  std::size_t channels() const;
  /// Files read by load(), for the run manifest.
  std::vector<std::filesystem::path> files() const;
};

/// LeNet victim/judge spec matching the data source's shape.
ModelSpec model_spec_for(const DataSource& data, ModelKind kind, std::size_t timesteps);

struct JudgeConfig {
  DataSource data;
  ModelKind kind = ModelKind::ann;
  Activation activation = Activation::relu;
  double v_threshold = 0.25;
  TrainConfig train;
  std::filesystem::path out;

  void validate() const;
};

/// Trains, writes the SLMD checkpoint to cfg.out plus <out>.manifest.json, and prints
/// per-epoch progress and the final accuracy to log.
JudgeModel cmd_train_judge(const JudgeConfig& cfg, std::ostream& log);

struct ExperimentConfig {
  DataSource data;
  ModelKind model_kind = ModelKind::ann;
  InputModality modality = InputModality::image;
  AttackConfig attack;
  std::size_t samples = 20;
  /// First dataset index attacked.
  std::size_t offset = 0;
  /// Victim model and per-sample attack seeds derive from this.
  std::uint64_t seed = 0;
  double victim_v_threshold = 1.0;
  std::optional<std::filesystem::path> judge;
  std::filesystem::path out_dir;
  std::size_t workers = 1;
  /// When false, wall_ms is written as 0 so repeated runs give identical CSV bytes.
  bool record_timing = true;
  bool dumps = true;

  void validate() const;
};

struct SampleRow {
  std::size_t sample_id = 0;
  std::string attack;
  std::string model_kind;
  std::string dataset;
  /// Empty when no threshold strategy applies.
  std::optional<double> tau;
  std::string strategy;
  std::string status;
  double final_loss = 0.0;
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double l2 = 0.0;
  std::optional<std::size_t> judge_pred;
  std::size_t true_label = 0;
  std::size_t iterations_run = 0;
  double wall_ms = 0.0;
};

extern const char* const kCsvHeader;
std::string to_csv(const std::vector<SampleRow>& rows);

struct Summary {
  std::size_t count = 0;
  std::size_t diverged = 0;
  std::size_t stalled = 0;
  /// Aggregates over non-diverged rows. psnr covers finite values only.
  Aggregate mse, psnr, ssim, l2, final_loss;
  /// Percent of non-diverged rows the judge assigns to the true label.
  std::optional<double> asr;
};

Summary summarize(const std::vector<SampleRow>& rows);

struct ExperimentResult {
  std::vector<SampleRow> rows;
  Summary summary;
};

/// Writes results.csv, summary.json, manifest.json and dumps/ under cfg.out_dir.
/// Throws AllDivergedError (after writing everything) when no sample converged.
ExperimentResult cmd_attack(const ExperimentConfig& cfg);

struct SweepCell {
  std::string attack;
  double tau = 0.0;
  std::string strategy;
  Summary summary;
};

struct SweepResult {
  std::vector<SampleRow> rows;
  std::vector<SweepCell> cells;
};

/// Grid over attacks x strategies x taus on the spike modality. Writes results.csv (one
/// row per sample and cell), sweep.csv (one row per cell), summary.json, manifest.json.
/// Post-opt cells share one unthresholded run per sample and attack, since the
/// threshold only acts after the optimization.
SweepResult cmd_sweep_tau(const ExperimentConfig& cfg, const std::vector<double>& taus,
                          const std::vector<ThresholdStrategy>& strategies, const std::vector<AttackKind>& attacks);

/// Rows intra and inter under the header type,mean,std,min,max.
std::string ref_stats_csv(const ReferenceStats& stats);

/// Writes ref_stats_csv of the loaded split to out_csv.
ReferenceStats cmd_ref_stats(const DataSource& data, const std::filesystem::path& out_csv);

/// Human-readable dump of a SPKT, EVST, SLMD or GMSG file (detected by magic).
void cmd_inspect(const std::filesystem::path& path, std::ostream& out);

/// Grayscale [1,1,H,W] -> P5, RGB [1,3,H,W] -> P6, values clamped to [0,1] and scaled to 255.
Bytes encode_pnm(const Tensor& image);

}  // namespace spikeleak::report
