#include "spikeleak/report.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "spikeleak/digest.hpp"
#include "spikeleak/errors.hpp"
#include "spikeleak/fl_harness.hpp"
#include "spikeleak/ops.hpp"
#include "spikeleak/rng.hpp"
#include "spikeleak/spike_codec.hpp"

namespace spikeleak::report {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

json aggregate_json(const Aggregate& a) {
  return {{"mean", a.mean}, {"std", a.std}, {"min", a.min}, {"max", a.max}, {"count", a.count}};
}

json summary_json(const Summary& s) {
  json j;
  j["samples"] = s.count;
  j["diverged"] = s.diverged;
  j["stalled"] = s.stalled;
  j["metrics"] = {{"mse", aggregate_json(s.mse)},
                  {"psnr_db", aggregate_json(s.psnr)},
                  {"ssim", aggregate_json(s.ssim)},
                  {"l2", aggregate_json(s.l2)},
                  {"final_loss", aggregate_json(s.final_loss)}};
  j["asr_percent"] = s.asr ? json(*s.asr) : json(nullptr);
  return j;
}

json source_json(const DataSource& d) {
  json j = {{"kind", d.kind}, {"split", d.split}, {"seed", d.seed}};
  if (d.kind == "mnist") {
    j["dir"] = d.dir.string();
  } else {
    j["count"] = d.count;
    j["side"] = d.side;
    j["timesteps"] = d.timesteps;
  }
  return j;
}

json experiment_json(const ExperimentConfig& c) {
  const AttackConfig& a = c.attack;
  json j = {{"data", source_json(c.data)},
            {"model_kind", to_string(c.model_kind)},
            {"modality", to_string(c.modality)},
            {"attack", to_string(a.attack)},
            {"iterations", a.iterations},
            {"lbfgs", {{"history", a.lbfgs.history}, {"lr", a.lbfgs.lr}, {"max_line_search", a.lbfgs.max_line_search}}},
            {"sigma", a.sigma},
            {"tau", a.tau},
            {"strategy", to_string(a.threshold)},
            {"grnn", {{"epochs", a.grnn.epochs}, {"lr", a.grnn.lr}, {"hidden", a.grnn.hidden}}},
            {"samples", c.samples},
            {"offset", c.offset},
            {"seed", c.seed},
            {"victim_v_threshold", c.victim_v_threshold},
            {"judge", c.judge ? json(c.judge->string()) : json(nullptr)},
            {"workers", c.workers},
            {"record_timing", c.record_timing}};
  return j;
}

json file_entry(const fs::path& p) { return {{"path", p.string()}, {"sha256", sha256_hex(read_file(p))}}; }

void write_text(const fs::path& p, const std::string& s) {
  write_file(p, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

void write_manifest(const fs::path& out_dir, const std::string& command, const json& config,
                    const std::vector<fs::path>& inputs, const std::vector<std::string>& outputs) {
  json m = {{"tool", "spikeleak"}, {"version", kVersion}, {"command", command}, {"config", config}};
  m["inputs"] = json::array();
  for (const auto& p : inputs) m["inputs"].push_back(file_entry(p));
  m["outputs"] = json::array();
  for (const auto& name : outputs) {
    json e = file_entry(out_dir / name);
    e["path"] = name;
    m["outputs"].push_back(e);
  }
  write_text(out_dir / "manifest.json", m.dump(2) + "\n");
}

// Runs fn(i) for i in [0,n) on up to `workers` threads; the first exception wins.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string dump_ext(const Tensor& t) {
  if (t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 1) return ".pgm";
  if (t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 3) return ".ppm";
  return ".spkt";
}

void dump_tensor(const fs::path& base, const Tensor& t) {
  fs::path p = base;
  p += dump_ext(t);
  if (p.extension() == ".spkt") {
    write_spike_tensor(p, t);
  } else {
    write_file(p, encode_pnm(t));
  }
}

std::string tau_tag(double tau) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", tau);
  return buf;
}

// Shared state for attack runs: the victim, its data and the optional judge.
struct Session {
  const ExperimentConfig& cfg;
  LabeledDataset data;
  ModelSpec spec;
  ParameterSet params;
  std::optional<JudgeModel> judge;
  std::vector<fs::path> inputs;

  explicit Session(const ExperimentConfig& c) : cfg(c) {
    c.validate();
    data = c.data.load();
    if (c.offset + c.samples > data.size()) {
      throw ConfigError("requested samples [" + std::to_string(c.offset) + ", " + std::to_string(c.offset + c.samples) +
                        ") but the dataset holds " + std::to_string(data.size()));
    }
    spec = model_spec_for(c.data, c.model_kind, c.data.timesteps);
    spec.neuron.v_threshold = c.victim_v_threshold;
    params = build_lenet(spec, derive_seed(c.seed, 7), WeightInit::uniform_half);
    inputs = c.data.files();
    if (c.judge) {
      try {
        judge = JudgeModel::from_checkpoint(load_checkpoint(*c.judge));
      } catch (const FormatError& e) {
        throw DataError("judge checkpoint " + c.judge->string() + ": " + e.what());
      } catch (const ValidationError& e) {
        throw DataError("judge checkpoint " + c.judge->string() + ": " + e.what());
      }
      inputs.push_back(*c.judge);
      check_judge();
    }
  }

  Shape recon_shape() const {
    if (cfg.modality == InputModality::image) return spec.input_shape(1);
    return {spec.timesteps, 1, spec.in_channels, spec.height, spec.width};
  }

  void check_judge() const {
    const ModelSpec& j = judge->spec;
    const Shape s = recon_shape();
    const bool rank5 = s.size() == 5;
    const bool ok = j.in_channels == spec.in_channels && j.height == spec.height && j.width == spec.width &&
                    j.num_classes == spec.num_classes &&
                    (!rank5 || (j.kind == ModelKind::snn && j.timesteps == s[0]));
    if (!ok) {
      throw ConfigError("judge model (" + j.descriptor() + ") cannot classify reconstructions of shape " +
                        shape_to_string(s));
    }
  }

  Tensor truth(std::size_t idx) const {
    const Tensor& x = data.inputs[idx];
    if (cfg.modality == InputModality::spikes && x.rank() == 4) return replicate_image(x, spec.timesteps).data;
    return x;
  }

  // Victim gradients as captured on the wire between client idx and the server.
  GradientSet intercept(std::size_t idx) const {
    LabeledDataset one;
    one.num_classes = data.num_classes;
    one.split = data.split;
    one.inputs = {truth(idx)};
    one.labels = {data.labels[idx]};
    const ClientState client{idx, std::move(one), spec, params};
    const std::vector<Bytes> wire = {client_round(client, 0, 0)};
    return eavesdrop(wire).front().gradients;
  }

  SampleRow row(std::size_t idx, const std::string& attack, const Tensor& recon, AttackStatus status,
                double final_loss, std::size_t iterations, ThresholdStrategy strategy, double tau, double ms) const {
    const Tensor t = truth(idx);
    SampleRow r;
    r.sample_id = idx;
    r.attack = attack;
    r.model_kind = to_string(cfg.model_kind);
    r.dataset = cfg.data.kind;
    if (strategy != ThresholdStrategy::none) r.tau = tau;
    r.strategy = to_string(strategy);
    r.status = to_string(status);
    r.final_loss = final_loss;
    r.mse = mse(recon, t);
    r.psnr = psnr(recon, t);
    r.ssim = ssim(recon, t);
    r.l2 = l2_distance(recon, t);
    if (judge) r.judge_pred = predict(judge->spec, judge->params, recon).front();
    r.true_label = data.labels[idx];
    r.iterations_run = iterations;
    r.wall_ms = cfg.record_timing ? ms : 0.0;
    return r;
  }

  AttackConfig attack_cfg(std::size_t idx, AttackKind kind, ThresholdStrategy s, double tau) const {
    AttackConfig a = cfg.attack;
    a.attack = kind;
    a.threshold = s;
    a.tau = tau;
    a.seed = derive_seed(cfg.seed, 100 + idx);
    return a;
  }
};

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// ---- data sources

void DataSource::validate() const {
  if (kind != "mnist" && kind != "gesture" && kind != "blobs") {
    throw ConfigError("unknown dataset '" + kind + "' (expected mnist, gesture or blobs)");
  }
  if (split != "train" && split != "test") throw ConfigError("split must be train or test, got '" + split + "'");
  if (kind == "mnist") {
    if (dir.empty()) throw ConfigError("mnist needs a data directory");
    if (!fs::is_directory(dir)) throw ConfigError("dataset path " + dir.string() + " does not exist");
  } else {
    if (side < 8) throw ConfigError("synthetic sample side must be >= 8");
  }
  if (timesteps < 1) throw ConfigError("timesteps must be >= 1");
}

std::size_t DataSource::num_classes() const {
  if (kind == "mnist") return 10;
  if (kind == "gesture") return kGestureClasses;
  return 4;
}

std::size_t DataSource::channels() const { return kind == "gesture" ? 2 : 1; }

LabeledDataset DataSource::load() const {
  validate();
  const bool train = split == "train";
  try {
    if (kind == "mnist") return load_mnist(dir, train ? "train" : "t10k");
    const std::uint64_t s = train ? seed : derive_seed(seed, 1);
    if (kind == "gesture") {
      LabeledDataset d = synth_gesture_dataset(count ? count : (train ? 440 : 110), s, side, timesteps);
      d.split = split;
      return d;
    }
    LabeledDataset d = synth_blob_dataset(count ? count : (train ? 400 : 100), s, side);
    d.split = split;
    return d;
  } catch (const FormatError& e) {
    throw DataError(e.what());
  } catch (const ValidationError& e) {
    throw DataError(e.what());
  } catch (const std::runtime_error& e) {
    throw DataError(e.what());
  }
}

std::vector<fs::path> DataSource::files() const {
  if (kind != "mnist") return {};
  const std::string stem = split == "train" ? "train" : "t10k";
  std::vector<fs::path> out;
  for (const char* part : {"-images-idx3-ubyte", "-labels-idx1-ubyte"}) {
    fs::path p = dir / (stem + part);
    if (!fs::exists(p)) p += ".gz";
    if (fs::exists(p)) out.push_back(p);
  }
  return out;
}

ModelSpec model_spec_for(const DataSource& data, ModelKind kind, std::size_t timesteps) {
  if (data.kind == "gesture" && kind != ModelKind::snn) throw ConfigError("gesture streams need an snn model");
  const std::size_t side = data.kind == "mnist" ? 32 : data.side;
  return ModelSpec::lenet(kind, data.channels(), side, data.num_classes(), timesteps);
}

// ---- train-judge

void JudgeConfig::validate() const {
  data.validate();
  if (out.empty()) throw ConfigError("judge needs an output checkpoint path");
  if (data.kind == "gesture" && kind != ModelKind::snn) throw ConfigError("gesture judges must be snn");
  if (kind == ModelKind::snn && activation != Activation::if_neuron) throw ConfigError("snn judges use act=if");
  if (kind == ModelKind::ann && activation == Activation::if_neuron) throw ConfigError("ann judges use sigmoid or relu");
  if (!(v_threshold > 0.0)) throw ConfigError("v_threshold must be > 0");
  if (train.batch < 1) throw ConfigError("batch must be >= 1");
  if (!(train.lr > 0.0)) throw ConfigError("lr must be > 0");
}

JudgeModel cmd_train_judge(const JudgeConfig& cfg, std::ostream& log) {
  cfg.validate();
  DataSource tr = cfg.data, te = cfg.data;
  tr.split = "train";
  te.split = "test";
  const LabeledDataset train = tr.load(), test = te.load();
  ModelSpec spec = model_spec_for(cfg.data, cfg.kind, cfg.data.timesteps);
  spec.activation = cfg.activation;
  if (cfg.kind == ModelKind::snn) spec.neuron.v_threshold = cfg.v_threshold;

  log << "training " << spec.descriptor() << " on " << train.size() << " samples, testing on " << test.size() << "\n";
  JudgeModel judge = train_judge(train, test, spec, cfg.train, [&](std::size_t e, double loss, double acc) {
    log << "epoch " << e + 1 << "/" << cfg.train.epochs << " loss " << fmt_double(loss) << " accuracy "
        << std::fixed << std::setprecision(2) << 100.0 * acc << "%\n"
        << std::defaultfloat << std::flush;
  });

  Checkpoint ckpt = judge.to_checkpoint();
  ckpt.metadata["dataset"] = cfg.data.kind;
  ckpt.metadata["seed"] = std::to_string(cfg.train.seed);
  ckpt.metadata["epochs"] = std::to_string(cfg.train.epochs);
  if (cfg.out.has_parent_path()) fs::create_directories(cfg.out.parent_path());
  save_checkpoint(cfg.out, ckpt);

  json config = {{"data", source_json(cfg.data)},
                 {"model", spec.descriptor()},
                 {"epochs", cfg.train.epochs},
                 {"batch", cfg.train.batch},
                 {"lr", cfg.train.lr},
                 {"momentum", cfg.train.momentum},
                 {"seed", cfg.train.seed}};
  json m = {{"tool", "spikeleak"}, {"version", kVersion}, {"command", "train-judge"}, {"config", config}};
  m["inputs"] = json::array();
  for (const auto& p : tr.files()) m["inputs"].push_back(file_entry(p));
  for (const auto& p : te.files()) m["inputs"].push_back(file_entry(p));
  m["outputs"] = json::array({file_entry(cfg.out)});
  fs::path mp = cfg.out;
  mp += ".manifest.json";
  write_text(mp, m.dump(2) + "\n");

  log << "accuracy: " << std::fixed << std::setprecision(2) << 100.0 * judge.accuracy << "%\n" << std::defaultfloat;
  return judge;
}

// ---- experiment config and rows

void ExperimentConfig::validate() const {
  data.validate();
  if (samples < 1) throw ConfigError("sample count must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (out_dir.empty()) throw ConfigError("an output directory is required");
  if (!(victim_v_threshold > 0.0)) throw ConfigError("victim v_threshold must be > 0");
  try {
    attack.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  if (modality == InputModality::spikes && model_kind != ModelKind::snn) {
    throw ConfigError("spike-modality attacks need an snn victim");
  }
  if (data.kind == "gesture" && modality != InputModality::spikes) {
    throw ConfigError("gesture streams are attacked in the spike modality");
  }
  if (attack.threshold != ThresholdStrategy::none && modality != InputModality::spikes) {
    throw ConfigError("threshold strategies apply to the spike modality only");
  }
  if (attack.attack == AttackKind::grnn && attack.threshold == ThresholdStrategy::in_opt) {
    throw ConfigError("grnn has no iterative loop to binarize in; use post_opt");
  }
  if (judge && !fs::exists(*judge)) throw ConfigError("judge checkpoint " + judge->string() + " does not exist");
}

const char* const kCsvHeader =
    "sample_id,attack,model_kind,dataset,tau,strategy,status,final_loss,mse,psnr,ssim,l2,judge_pred,true_label,"
    "iterations_run,wall_ms";

std::string to_csv(const std::vector<SampleRow>& rows) {
  std::ostringstream os;
  os << kCsvHeader << "\n";
  for (const auto& r : rows) {
    os << r.sample_id << ',' << r.attack << ',' << r.model_kind << ',' << r.dataset << ','
       << (r.tau ? fmt_double(*r.tau) : "") << ',' << r.strategy << ',' << r.status << ',' << fmt_double(r.final_loss)
       << ',' << fmt_double(r.mse) << ',' << fmt_double(r.psnr) << ',' << fmt_double(r.ssim) << ',' << fmt_double(r.l2)
       << ',' << (r.judge_pred ? std::to_string(*r.judge_pred) : "") << ',' << r.true_label << ','
       << r.iterations_run << ',' << fmt_double(r.wall_ms) << "\n";
  }
  return os.str();
}

Summary summarize(const std::vector<SampleRow>& rows) {
  Summary s;
  s.count = rows.size();
  std::vector<double> m, p, ss, l, f;
  std::size_t judged = 0, hits = 0;
  for (const auto& r : rows) {
    if (r.status == to_string(AttackStatus::diverged)) {
      ++s.diverged;
      continue;
    }
    if (r.status == to_string(AttackStatus::stalled)) ++s.stalled;
    m.push_back(r.mse);
    if (std::isfinite(r.psnr)) p.push_back(r.psnr);
    ss.push_back(r.ssim);
    l.push_back(r.l2);
    f.push_back(r.final_loss);
    if (r.judge_pred) {
      ++judged;
      hits += *r.judge_pred == r.true_label;
    }
  }
  s.mse = aggregate(m);
  s.psnr = aggregate(p);
  s.ssim = aggregate(ss);
  s.l2 = aggregate(l);
  s.final_loss = aggregate(f);
  if (judged > 0) s.asr = 100.0 * static_cast<double>(hits) / static_cast<double>(judged);
  return s;
}

// ---- attack

ExperimentResult cmd_attack(const ExperimentConfig& cfg) {
  const Session ses(cfg);
  fs::create_directories(cfg.out_dir);
  const fs::path dumps = cfg.out_dir / "dumps";
  if (cfg.dumps) fs::create_directories(dumps);
  const AttackKind kind = cfg.attack.attack;
  const std::string attack_name = to_string(kind);
  std::vector<SampleRow> rows(cfg.samples);
  std::vector<Tensor> recons(cfg.samples);

  if (kind == AttackKind::grnn) {
    std::vector<GradientSet> observed(cfg.samples);
    parallel_for(cfg.samples, cfg.workers, [&](std::size_t i) { observed[i] = ses.intercept(cfg.offset + i); });
    const auto t0 = std::chrono::steady_clock::now();
    AttackConfig a = ses.attack_cfg(0, kind, cfg.attack.threshold, cfg.attack.tau);
    a.seed = derive_seed(cfg.seed, 100);
    const GrnnResult g = run_grnn(observed, {}, ses.spec, ses.params, cfg.modality, a);
    const double per_sample = elapsed_ms(t0) / static_cast<double>(cfg.samples);
    parallel_for(cfg.samples, cfg.workers, [&](std::size_t i) {
      const Tensor& raw = g.reconstructions[i];
      const double loss = gradient_match_loss(
          parameter_gradients(ses.spec, ses.params, raw, one_hot(g.labels[i], ses.spec.num_classes), false),
          observed[i]).item();
      recons[i] = cfg.attack.threshold == ThresholdStrategy::post_opt ? binarize_post(raw, cfg.attack.tau) : raw;
      rows[i] = ses.row(cfg.offset + i, attack_name, recons[i], g.status, loss, cfg.attack.grnn.epochs,
                        cfg.attack.threshold, cfg.attack.tau, per_sample);
    });
  } else {
    parallel_for(cfg.samples, cfg.workers, [&](std::size_t i) {
      const std::size_t idx = cfg.offset + i;
      const GradientSet g = ses.intercept(idx);
      const auto t0 = std::chrono::steady_clock::now();
      const AttackResult r =
          run_attack(g, ses.spec, ses.params, cfg.modality, ses.attack_cfg(idx, kind, cfg.attack.threshold, cfg.attack.tau));
      recons[i] = r.reconstruction;
      rows[i] = ses.row(idx, attack_name, r.reconstruction, r.status, r.final_loss, r.iterations,
                        cfg.attack.threshold, cfg.attack.tau, elapsed_ms(t0));
    });
  }

  if (cfg.dumps) {
    for (std::size_t i = 0; i < cfg.samples; ++i) {
      const std::size_t idx = cfg.offset + i;
      dump_tensor(dumps / (std::to_string(idx) + "_truth"), ses.truth(idx));
      dump_tensor(dumps / (std::to_string(idx) + "_recon"), recons[i]);
    }
  }

  ExperimentResult result{std::move(rows), {}};
  result.summary = summarize(result.rows);
  write_text(cfg.out_dir / "results.csv", to_csv(result.rows));
  json summary = summary_json(result.summary);
  summary["command"] = "attack";
  summary["attack"] = attack_name;
  summary["model_kind"] = to_string(cfg.model_kind);
  summary["dataset"] = cfg.data.kind;
  summary["modality"] = to_string(cfg.modality);
  summary["strategy"] = to_string(cfg.attack.threshold);
  if (cfg.attack.threshold != ThresholdStrategy::none) summary["tau"] = cfg.attack.tau;
  write_text(cfg.out_dir / "summary.json", summary.dump(2) + "\n");
  write_manifest(cfg.out_dir, "attack", experiment_json(cfg), ses.inputs, {"results.csv", "summary.json"});

  if (result.summary.diverged == result.summary.count) {
    throw AllDivergedError("all " + std::to_string(result.summary.count) + " samples diverged");
  }
  return result;
}

// ---- sweep-tau

SweepResult cmd_sweep_tau(const ExperimentConfig& cfg, const std::vector<double>& taus,
                          const std::vector<ThresholdStrategy>& strategies, const std::vector<AttackKind>& attacks) {
  if (cfg.modality != InputModality::spikes) throw ConfigError("sweep-tau needs the spike modality");
  if (taus.empty() || strategies.empty() || attacks.empty()) throw ConfigError("sweep-tau needs taus, strategies and attacks");
  for (double t : taus) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("tau " + fmt_double(t) + " outside (0,1)");
  }
  for (auto s : strategies) {
    if (s == ThresholdStrategy::none) throw ConfigError("sweep-tau strategies are post_opt and in_opt");
  }
  for (auto a : attacks) {
    if (a == AttackKind::grnn) throw ConfigError("sweep-tau runs dlg and idlg");
  }
  const Session ses(cfg);
  fs::create_directories(cfg.out_dir);
  const fs::path dumps = cfg.out_dir / "dumps";
  if (cfg.dumps) fs::create_directories(dumps);

  // Cell order: attack, strategy, tau; rows within a cell by sample.
  struct CellKey {
    AttackKind attack;
    ThresholdStrategy strategy;
    double tau;
  };
  std::vector<CellKey> keys;
  for (auto a : attacks)
    for (auto s : strategies)
      for (double t : taus) keys.push_back({a, s, t});
  std::vector<std::vector<SampleRow>> per_sample(cfg.samples);

  parallel_for(cfg.samples, cfg.workers, [&](std::size_t i) {
    const std::size_t idx = cfg.offset + i;
    const GradientSet g = ses.intercept(idx);
    std::vector<SampleRow> out(keys.size());
    for (auto a : attacks) {
      std::optional<AttackResult> raw;
      double raw_ms = 0.0;
      for (std::size_t k = 0; k < keys.size(); ++k) {
        const CellKey& key = keys[k];
        if (key.attack != a) continue;
        Tensor recon;
        AttackResult r;
        double ms;
        if (key.strategy == ThresholdStrategy::post_opt) {
          if (!raw) {
            const auto t0 = std::chrono::steady_clock::now();
            raw = run_attack(g, ses.spec, ses.params, cfg.modality, ses.attack_cfg(idx, a, ThresholdStrategy::none, 0.5));
            raw_ms = elapsed_ms(t0);
          }
          r = *raw;
          recon = binarize_post(raw->raw, key.tau);
          ms = raw_ms;
        } else {
          const auto t0 = std::chrono::steady_clock::now();
          r = run_attack(g, ses.spec, ses.params, cfg.modality, ses.attack_cfg(idx, a, key.strategy, key.tau));
          recon = r.reconstruction;
          ms = elapsed_ms(t0);
        }
        out[k] = ses.row(idx, to_string(a), recon, r.status, r.final_loss, r.iterations, key.strategy, key.tau, ms);
        if (cfg.dumps) {
          dump_tensor(dumps / (std::to_string(idx) + "_" + to_string(a) + "_" + to_string(key.strategy) + "_tau" +
                               tau_tag(key.tau)),
                      recon);
        }
      }
    }
    if (cfg.dumps) dump_tensor(dumps / (std::to_string(idx) + "_truth"), ses.truth(idx));
    per_sample[i] = std::move(out);
  });

  SweepResult result;
  std::ostringstream cells_csv;
  cells_csv << "attack,strategy,tau,samples,diverged,asr,l2_mean,l2_std,l2_min,l2_max,ssim_mean,mse_mean\n";
  json cells = json::array();
  for (std::size_t k = 0; k < keys.size(); ++k) {
    std::vector<SampleRow> cell_rows;
    for (std::size_t i = 0; i < cfg.samples; ++i) cell_rows.push_back(per_sample[i][k]);
    SweepCell c{to_string(keys[k].attack), keys[k].tau, to_string(keys[k].strategy), summarize(cell_rows)};
    cells_csv << c.attack << ',' << c.strategy << ',' << fmt_double(c.tau) << ',' << c.summary.count << ','
              << c.summary.diverged << ',' << (c.summary.asr ? fmt_double(*c.summary.asr) : "") << ','
              << fmt_double(c.summary.l2.mean) << ',' << fmt_double(c.summary.l2.std) << ','
              << fmt_double(c.summary.l2.min) << ',' << fmt_double(c.summary.l2.max) << ','
              << fmt_double(c.summary.ssim.mean) << ',' << fmt_double(c.summary.mse.mean) << "\n";
    json cj = summary_json(c.summary);
    cj["attack"] = c.attack;
    cj["strategy"] = c.strategy;
    cj["tau"] = c.tau;
    cells.push_back(cj);
    result.rows.insert(result.rows.end(), cell_rows.begin(), cell_rows.end());
    result.cells.push_back(std::move(c));
  }
  write_text(cfg.out_dir / "results.csv", to_csv(result.rows));
  write_text(cfg.out_dir / "sweep.csv", cells_csv.str());
  json summary = {{"command", "sweep-tau"},
                  {"model_kind", to_string(cfg.model_kind)},
                  {"dataset", cfg.data.kind},
                  {"cells", cells}};
  write_text(cfg.out_dir / "summary.json", summary.dump(2) + "\n");
  json config = experiment_json(cfg);
  config["taus"] = taus;
  config["strategies"] = json::array();
  for (auto s : strategies) config["strategies"].push_back(to_string(s));
  config["attacks"] = json::array();
  for (auto a : attacks) config["attacks"].push_back(to_string(a));
  write_manifest(cfg.out_dir, "sweep-tau", config, ses.inputs, {"results.csv", "sweep.csv", "summary.json"});

  std::size_t diverged = 0;
  for (const auto& r : result.rows) diverged += r.status == to_string(AttackStatus::diverged);
  if (diverged == result.rows.size()) throw AllDivergedError("every run of the sweep diverged");
  return result;
}

// ---- ref-stats

std::string ref_stats_csv(const ReferenceStats& s) {
  std::ostringstream os;
  os << "type,mean,std,min,max\n";
  for (const auto& [name, a] : {std::pair{"intra", s.intra}, std::pair{"inter", s.inter}}) {
    os << name << ',' << fmt_double(a.mean) << ',' << fmt_double(a.std) << ',' << fmt_double(a.min) << ','
       << fmt_double(a.max) << "\n";
  }
  return os.str();
}

ReferenceStats cmd_ref_stats(const DataSource& data, const fs::path& out_csv) {
  const LabeledDataset d = data.load();
  const ReferenceStats s = reference_l2_stats(d.inputs, d.labels);
  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  write_text(out_csv, ref_stats_csv(s));
  return s;
}

// ---- inspect

namespace {

void describe_values(std::ostream& out, const Tensor& t) {
  const auto d = t.data();
  double lo = d.empty() ? 0 : d[0], hi = lo, sum = 0, sq = 0;
  std::size_t nz = 0;
  bool binary = true;
  for (double v : d) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
    sq += v * v;
    nz += v != 0.0;
    binary = binary && (v == 0.0 || v == 1.0);
  }
  out << "  shape " << shape_to_string(t.shape()) << ", " << t.numel() << " values\n"
      << "  min " << fmt_double(lo) << "  max " << fmt_double(hi) << "  mean "
      << fmt_double(d.empty() ? 0 : sum / static_cast<double>(d.size())) << "  l2 " << fmt_double(std::sqrt(sq))
      << "\n  nonzero " << nz << (binary ? "  (binary)" : "") << "\n";
}

}  // namespace

void cmd_inspect(const fs::path& path, std::ostream& out) {
  Bytes b;
  try {
    b = read_file(path);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  if (b.size() < 4) throw DataError(path.string() + ": too short to carry a magic");
  const std::string magic(b.begin(), b.begin() + 4);
  try {
    if (magic == "SPKT") {
      const Tensor t = decode_spike_tensor(b);
      out << path.string() << ": SPKT spike tensor\n";
      describe_values(out, t);
      if (t.rank() == 5) {
        const std::size_t frame = t.numel() / t.dim(0);
        out << "  spikes per timestep:";
        for (std::size_t s = 0; s < t.dim(0); ++s) {
          std::size_t n = 0;
          for (std::size_t k = 0; k < frame; ++k) n += t.data()[s * frame + k] != 0.0;
          out << ' ' << n;
        }
        out << "\n";
      }
    } else if (magic == "EVST") {
      const EventStream ev = decode_event_stream(b);
      std::size_t on = 0;
      for (const auto& e : ev.events) on += e.p;
      out << path.string() << ": EVST event stream\n"
          << "  sensor " << ev.height << "x" << ev.width << ", " << ev.events.size() << " events (" << on << " ON, "
          << ev.events.size() - on << " OFF)\n";
      if (!ev.events.empty()) out << "  time span [0, " << ev.events.back().t_us << "] us\n";
      for (std::size_t i = 0; i < std::min<std::size_t>(5, ev.events.size()); ++i) {
        const Event& e = ev.events[i];
        out << "  t=" << e.t_us << " x=" << e.x << " y=" << e.y << " p=" << int(e.p) << "\n";
      }
    } else if (magic == "SLMD") {
      const Checkpoint c = decode_checkpoint(b);
      out << path.string() << ": SLMD checkpoint\n  model " << c.spec.descriptor() << "\n";
      for (const auto& [k, v] : c.metadata) out << "  " << k << " = " << v << "\n";
      for (std::size_t i = 0; i < c.params.size(); ++i) {
        double sq = 0;
        for (double v : c.params[i].data()) sq += v * v;
        out << "  " << c.params.names[i] << " " << shape_to_string(c.params[i].shape()) << " l2 "
            << fmt_double(std::sqrt(sq)) << "\n";
      }
    } else if (magic == "GMSG") {
      const GradientMessage m = decode_gradient_message(b);
      out << path.string() << ": GMSG gradient message\n"
          << "  client " << m.client_id << ", round " << m.round << ", T " << m.timesteps << ", batch "
          << m.batch_size << "\n  spec hash " << to_hex(m.spec_hash) << "\n";
      for (std::size_t i = 0; i < m.payload.size(); ++i) {
        double sq = 0;
        for (double v : m.payload[i].data()) sq += v * v;
        out << "  [" << i << "] " << shape_to_string(m.payload[i].shape()) << " l2 " << fmt_double(std::sqrt(sq)) << "\n";
      }
    } else {
      throw DataError(path.string() + ": unrecognized magic (expected SPKT, EVST, SLMD or GMSG)");
    }
  } catch (const FormatError& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Bytes encode_pnm(const Tensor& image) {
  if (image.rank() != 4 || image.dim(0) != 1 || (image.dim(1) != 1 && image.dim(1) != 3)) {
    throw DimensionError("PNM export needs [1,1,H,W] or [1,3,H,W], got " + shape_to_string(image.shape()));
  }
  const std::size_t C = image.dim(1), H = image.dim(2), W = image.dim(3);
  const std::string header = (C == 1 ? "P5\n" : "P6\n") + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  Bytes out(header.begin(), header.end());
  const auto d = image.data();
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c) {
        const double v = std::clamp(d[(c * H + y) * W + x], 0.0, 1.0);
        out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
  return out;
}

}  // namespace spikeleak::report
