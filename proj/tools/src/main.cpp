#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "spikeleak/errors.hpp"
#include "spikeleak/report.hpp"

namespace sl = spikeleak;
namespace rp = spikeleak::report;

namespace {

struct DataFlags {
  std::string kind = "mnist";
  std::string dir;
  std::string split = "test";
  std::size_t count = 0;
  std::size_t side = 32;
  std::size_t timesteps = 20;
};

void add_data_flags(CLI::App* app, DataFlags& d) {
  app->add_option("--dataset", d.kind, "mnist, gesture or blobs")->capture_default_str();
  app->add_option("--data-dir", d.dir, "Directory holding MNIST IDX files (.gz accepted)");
  app->add_option("--split", d.split, "train or test")->capture_default_str();
  app->add_option("--count", d.count, "Synthetic sample count (0 = default)")->capture_default_str();
  app->add_option("--side", d.side, "Synthetic sample side")->capture_default_str();
  app->add_option("--timesteps,-T", d.timesteps, "SNN timesteps")->capture_default_str();
}

rp::DataSource to_source(const DataFlags& d, std::uint64_t seed) {
  rp::DataSource s;
  s.kind = d.kind;
  s.dir = d.dir;
  s.split = d.split;
  s.count = d.count;
  s.side = d.side;
  s.timesteps = d.timesteps;
  s.seed = seed;
  return s;
}

struct AttackFlags {
  DataFlags data;
  std::string model = "ann";
  std::string modality = "image";
  std::string attack = "dlg";
  std::string strategy = "none";
  std::size_t iterations = 300;
  std::size_t history = 100;
  double lr = 1.0;
  double sigma = 0.1;
  double tau = 0.5;
  std::size_t grnn_epochs = 300;
  double grnn_lr = 1e-3;
  std::size_t grnn_hidden = 1024;
  std::size_t samples = 20;
  std::size_t offset = 0;
  double victim_vth = 1.0;
  std::string judge;
  std::string out;
  std::size_t workers = 1;
  bool no_timing = false;
  bool no_dumps = false;
};

void add_attack_flags(CLI::App* app, AttackFlags& a, bool single) {
  add_data_flags(app, a.data);
  app->add_option("--model", a.model, "Victim kind: ann or snn")->capture_default_str();
  app->add_option("--modality", a.modality, "image or spikes")->capture_default_str();
  if (single) {
    app->add_option("--attack", a.attack, "dlg, idlg or grnn")->capture_default_str();
    app->add_option("--strategy", a.strategy, "none, post_opt or in_opt")->capture_default_str();
    app->add_option("--tau", a.tau, "Binarization threshold")->capture_default_str();
  }
  app->add_option("--iterations,-N", a.iterations, "L-BFGS iterations")->capture_default_str();
  app->add_option("--history", a.history, "L-BFGS history size")->capture_default_str();
  app->add_option("--lr", a.lr, "L-BFGS step size")->capture_default_str();
  app->add_option("--sigma", a.sigma, "Spike dummy scale")->capture_default_str();
  if (single) {
    app->add_option("--grnn-epochs", a.grnn_epochs, "GRNN training epochs")->capture_default_str();
    app->add_option("--grnn-lr", a.grnn_lr, "GRNN Adam learning rate")->capture_default_str();
    app->add_option("--grnn-hidden", a.grnn_hidden, "GRNN hidden width")->capture_default_str();
  }
  app->add_option("--samples,-n", a.samples, "Samples to attack")->capture_default_str();
  app->add_option("--offset", a.offset, "First sample index")->capture_default_str();
  app->add_option("--victim-v-threshold", a.victim_vth, "Victim SNN firing threshold")->capture_default_str();
  app->add_option("--judge", a.judge, "Judge checkpoint (SLMD)");
  app->add_option("--out,-o", a.out, "Output directory")->required();
  app->add_option("--workers,-j", a.workers, "Sample-level worker threads")->capture_default_str();
  app->add_flag("--no-timing", a.no_timing, "Write wall_ms as 0 for byte-identical reruns");
  app->add_flag("--no-dumps", a.no_dumps, "Skip truth/reconstruction dumps");
}

rp::ExperimentConfig to_experiment(const AttackFlags& a, std::uint64_t seed) {
  rp::ExperimentConfig c;
  c.data = to_source(a.data, seed);
  c.model_kind = sl::parse_model_kind(a.model);
  c.modality = sl::parse_input_modality(a.modality);
  c.attack.attack = sl::parse_attack_kind(a.attack);
  c.attack.threshold = sl::parse_threshold_strategy(a.strategy);
  c.attack.tau = a.tau;
  c.attack.iterations = a.iterations;
  c.attack.lbfgs.history = a.history;
  c.attack.lbfgs.lr = a.lr;
  c.attack.sigma = a.sigma;
  c.attack.grnn.epochs = a.grnn_epochs;
  c.attack.grnn.lr = a.grnn_lr;
  c.attack.grnn.hidden = a.grnn_hidden;
  c.samples = a.samples;
  c.offset = a.offset;
  c.seed = seed;
  c.victim_v_threshold = a.victim_vth;
  if (!a.judge.empty()) c.judge = a.judge;
  c.out_dir = a.out;
  c.workers = a.workers;
  c.record_timing = !a.no_timing;
  c.dumps = !a.no_dumps;
  return c;
}

void print_summary(const rp::Summary& s, std::ostream& os) {
  os << "samples " << s.count << ", diverged " << s.diverged << ", stalled " << s.stalled << "\n"
     << "mean ssim " << s.ssim.mean << ", mean mse " << s.mse.mean << ", mean l2 " << s.l2.mean << "\n";
  if (s.asr) os << "asr " << *s.asr << "%\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spikeleak: gradient inversion experiments on ANN and SNN LeNets"};
  app.set_config("--config", "", "INI config; [verb] sections hold that verb's options, flags win");
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  auto seed_opt = [&](CLI::App* sub) {
    return sub->add_option("--seed", seed, "Global seed (falls back to SPIKELEAK_SEED)");
  };

  DataFlags judge_data;
  std::string judge_model = "ann", judge_act = "relu", judge_out;
  double judge_vth = 0.25;
  sl::TrainConfig train;
  train.epochs = 15;
  auto* tj = app.add_subcommand("train-judge", "Train a judge classifier and write an SLMD checkpoint");
  add_data_flags(tj, judge_data);
  tj->add_option("--model", judge_model, "ann or snn")->capture_default_str();
  tj->add_option("--activation", judge_act, "relu or sigmoid (ann), if (snn)")->capture_default_str();
  tj->add_option("--v-threshold", judge_vth, "SNN judge firing threshold")->capture_default_str();
  tj->add_option("--epochs", train.epochs)->capture_default_str();
  tj->add_option("--batch", train.batch)->capture_default_str();
  tj->add_option("--lr", train.lr)->capture_default_str();
  tj->add_option("--momentum", train.momentum)->capture_default_str();
  tj->add_option("--out,-o", judge_out, "Checkpoint path")->required();
  auto* tj_seed = seed_opt(tj);

  AttackFlags atk;
  auto* at = app.add_subcommand("attack", "Run one attack over a range of samples");
  add_attack_flags(at, atk, true);
  auto* at_seed = seed_opt(at);

  AttackFlags sw;
  std::vector<double> taus = {0.1, 0.25, 0.5, 0.75, 0.9, 0.95};
  std::vector<std::string> strategies = {"post_opt", "in_opt"}, attacks = {"dlg", "idlg"};
  auto* st = app.add_subcommand("sweep-tau", "Grid over binarization thresholds and strategies");
  sw.model = "snn";
  sw.modality = "spikes";
  add_attack_flags(st, sw, false);
  st->add_option("--taus", taus, "Thresholds in (0,1)")->capture_default_str()->delimiter(',');
  st->add_option("--strategies", strategies, "post_opt, in_opt")->capture_default_str()->delimiter(',');
  st->add_option("--attacks", attacks, "dlg, idlg")->capture_default_str()->delimiter(',');
  auto* st_seed = seed_opt(st);

  DataFlags ref_data;
  std::string ref_out;
  auto* rs = app.add_subcommand("ref-stats", "Intra/inter-class l2 reference statistics");
  add_data_flags(rs, ref_data);
  rs->add_option("--out,-o", ref_out, "Output CSV")->required();
  auto* rs_seed = seed_opt(rs);

  std::string inspect_path;
  auto* in = app.add_subcommand("inspect", "Pretty-print a SPKT, EVST, SLMD or GMSG file");
  in->add_option("file", inspect_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? rp::kOk : rp::kConfig;
  }

  for (auto [sub, opt] : {std::pair{tj, tj_seed}, {at, at_seed}, {st, st_seed}, {rs, rs_seed}}) {
    if (!sub->parsed() || opt->count() > 0) continue;
    if (const char* env = std::getenv("SPIKELEAK_SEED")) {
      try {
        seed = std::stoull(env);
      } catch (const std::exception&) {
        std::cerr << "error: SPIKELEAK_SEED='" << env << "' is not an unsigned integer\n";
        return rp::kConfig;
      }
    }
  }

  try {
    if (tj->parsed()) {
      rp::JudgeConfig cfg;
      cfg.data = to_source(judge_data, seed);
      cfg.data.split = "train";
      cfg.kind = sl::parse_model_kind(judge_model);
      cfg.activation = sl::parse_activation(judge_act);
      cfg.v_threshold = judge_vth;
      cfg.train = train;
      cfg.train.seed = seed;
      cfg.out = judge_out;
      rp::cmd_train_judge(cfg, std::cout);
    } else if (at->parsed()) {
      const auto res = rp::cmd_attack(to_experiment(atk, seed));
      print_summary(res.summary, std::cout);
    } else if (st->parsed()) {
      const rp::ExperimentConfig cfg = to_experiment(sw, seed);
      std::vector<sl::ThresholdStrategy> ss;
      for (const auto& s : strategies) ss.push_back(sl::parse_threshold_strategy(s));
      std::vector<sl::AttackKind> as;
      for (const auto& a : attacks) as.push_back(sl::parse_attack_kind(a));
      const auto res = rp::cmd_sweep_tau(cfg, taus, ss, as);
      for (const auto& c : res.cells) {
        std::cout << c.attack << " " << c.strategy << " tau=" << c.tau << " l2=" << c.summary.l2.mean;
        if (c.summary.asr) std::cout << " asr=" << *c.summary.asr << "%";
        std::cout << "\n";
      }
    } else if (rs->parsed()) {
      const auto s = rp::cmd_ref_stats(to_source(ref_data, seed), ref_out);
      std::cout << "intra mean " << s.intra.mean << " min " << s.intra.min << "\n"
                << "inter mean " << s.inter.mean << " min " << s.inter.min << "\n";
    } else if (in->parsed()) {
      rp::cmd_inspect(inspect_path, std::cout);
    }
  } catch (const rp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return rp::kConfig;
  } catch (const sl::ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return rp::kConfig;
  } catch (const rp::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return rp::kData;
  } catch (const sl::FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return rp::kData;
  } catch (const rp::AllDivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return rp::kAllDiverged;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return rp::kInternal;
  }
  return rp::kOk;
}
