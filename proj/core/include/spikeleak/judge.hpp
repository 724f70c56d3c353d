#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "spikeleak/datasets.hpp"
#include "spikeleak/metrics.hpp"
#include "spikeleak/model.hpp"

namespace spikeleak {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch = 32;
  double lr = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct JudgeModel {
  ModelSpec spec;
  ParameterSet params;
  /// Held-out accuracy in [0,1], measured at the end of training.
  double accuracy = 0.0;

  Checkpoint to_checkpoint() const;
  static JudgeModel from_checkpoint(const Checkpoint& c);
};

/// Called after every epoch with (epoch index, mean training loss, held-out accuracy).
using EpochCallback = std::function<void(std::size_t, double, double)>;

/// Mini-batch SGD with momentum on the cross entropy; the held-out accuracy is measured
/// on test after the last epoch (and after every epoch when a callback is given).
JudgeModel train_judge(const LabeledDataset& train, const LabeledDataset& test, const ModelSpec& spec,
                       const TrainConfig& cfg, const EpochCallback& on_epoch = {});

std::vector<std::size_t> predict_dataset(const ModelSpec& spec, const ParameterSet& params,
                                         const std::vector<Tensor>& inputs, std::size_t batch = 100);
double accuracy(const ModelSpec& spec, const ParameterSet& params, const LabeledDataset& data);

/// 100 x fraction of reconstructions the judge assigns to their true label.
double asr(const std::vector<Tensor>& reconstructions, const std::vector<std::size_t>& true_labels,
           const JudgeModel& judge);

struct ReferenceStats {
  Aggregate intra;
  Aggregate inter;
  /// Classes that had fewer than two samples and so contributed no intra-class pairs.
  std::vector<std::size_t> excluded_classes;
};

/// All pairwise l2 distances, split into same-class and cross-class pairs.
ReferenceStats reference_l2_stats(const std::vector<Tensor>& samples, const std::vector<std::size_t>& labels);

}  // namespace spikeleak
