#include "spikeleak/judge.hpp"

#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>

#include "spikeleak/errors.hpp"
#include "spikeleak/ops.hpp"
#include "spikeleak/rng.hpp"

namespace spikeleak {

Checkpoint JudgeModel::to_checkpoint() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", accuracy);
  return Checkpoint{spec, params, {{"accuracy", buf}, {"role", "judge"}}};
}

JudgeModel JudgeModel::from_checkpoint(const Checkpoint& c) {
  JudgeModel j{c.spec, c.params, 0.0};
  const auto it = c.metadata.find("accuracy");
  if (it == c.metadata.end()) throw ValidationError("checkpoint carries no held-out accuracy");
  j.accuracy = std::stod(it->second);
  return j;
}

namespace {

Tensor batch_targets(const std::vector<std::size_t>& labels, std::span<const std::size_t> idx, std::size_t K) {
  std::vector<double> v(idx.size() * K, 0.0);
  for (std::size_t b = 0; b < idx.size(); ++b) v[b * K + labels[idx[b]]] = 1.0;
  return Tensor({idx.size(), K}, std::move(v));
}

}  // namespace

std::vector<std::size_t> predict_dataset(const ModelSpec& spec, const ParameterSet& params,
                                         const std::vector<Tensor>& inputs, std::size_t batch) {
  std::vector<std::size_t> out;
  out.reserve(inputs.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < inputs.size(); start += batch) {
    idx.resize(std::min(batch, inputs.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto p = predict(spec, params, stack_batch(inputs, idx));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

double accuracy(const ModelSpec& spec, const ParameterSet& params, const LabeledDataset& data) {
  if (data.size() == 0) return 0.0;
  const auto pred = predict_dataset(spec, params, data.inputs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

JudgeModel train_judge(const LabeledDataset& train, const LabeledDataset& test, const ModelSpec& spec,
                       const TrainConfig& cfg, const EpochCallback& on_epoch) {
  train.validate();
  test.validate();
  spec.validate();
  if (train.size() == 0) throw ValidationError("judge training set is empty");
  if (train.num_classes != spec.num_classes) throw ValidationError("dataset and judge disagree on class count");
  if (cfg.batch < 1) throw ValidationError("batch size must be >= 1");

  JudgeModel judge{spec, build_lenet(spec, derive_seed(cfg.seed, 0)), 0.0};
  ParameterSet& p = judge.params;
  std::vector<std::vector<double>> velocity(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) velocity[i].assign(p[i].numel(), 0.0);

  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, 1000 + epoch));
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch, order.size() - start));
      std::vector<Tensor> g;
      {
        Tape tape;
        TapeScope scope(tape);
        const Tensor loss = classification_loss(spec, p, stack_batch(train.inputs, idx),
                                                batch_targets(train.labels, idx, spec.num_classes));
        loss_sum += loss.item();
        g = autograd::grad(loss, p.span());
      }
      for (std::size_t i = 0; i < p.size(); ++i) {
        const auto gi = g[i].data();
        std::vector<double> w(p[i].data().begin(), p[i].data().end());
        for (std::size_t j = 0; j < w.size(); ++j) {
          velocity[i][j] = cfg.momentum * velocity[i][j] + gi[j];
          w[j] -= cfg.lr * velocity[i][j];
        }
        p.tensors[i].assign(w);
      }
      ++batches;
    }
    if (on_epoch) on_epoch(epoch, loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1)),
                           accuracy(spec, p, test));
  }
  judge.accuracy = accuracy(spec, p, test);
  return judge;
}

double asr(const std::vector<Tensor>& reconstructions, const std::vector<std::size_t>& true_labels,
           const JudgeModel& judge) {
  if (reconstructions.size() != true_labels.size()) throw UsageError("asr: one label per reconstruction");
  if (reconstructions.empty()) return 0.0;
  const auto pred = predict_dataset(judge.spec, judge.params, reconstructions);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == true_labels[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(pred.size());
}

ReferenceStats reference_l2_stats(const std::vector<Tensor>& samples, const std::vector<std::size_t>& labels) {
  if (samples.size() != labels.size()) throw UsageError("reference_l2_stats: one label per sample");
  std::vector<double> intra, inter;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      (labels[i] == labels[j] ? intra : inter).push_back(l2_distance(samples[i], samples[j]));
    }
  ReferenceStats r{aggregate(intra), aggregate(inter), {}};
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t l : labels) ++counts[l];
  for (const auto& [cls, n] : counts) {
    if (n < 2) {
      r.excluded_classes.push_back(cls);
      std::cerr << "warning: class " << cls << " has fewer than 2 samples; excluded from intra-class statistics\n";
    }
  }
  return r;
}

}  // namespace spikeleak
