// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "cramfuse/experiment.hpp"

using namespace cramfuse;
using nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON config file");
  app->add_option("--set", c.overrides, "Override as dotted.key=value (repeatable)");
  app->add_option("--out", c.out_dir, "Output directory");
}

ExperimentConfig resolve(const Common& c) {
  json j = json::object();
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw ConfigError("cannot open config " + c.config_path);
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError(c.config_path, e.what());
    }
  }
  if (!j.contains("seed")) {
    if (const char* env = std::getenv("CRAMFUSE_SEED")) {
      try {
        j["seed"] = std::stoull(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("CRAMFUSE_SEED is not an unsigned integer: ") + env);
      }
    }
  }
  for (const auto& o : c.overrides) apply_override(j, o);
  if (!c.out_dir.empty()) j["out_dir"] = c.out_dir;
  return config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Camera-radar BEV detection on synthetic scenes"};
  app.require_subcommand(1);

  Common synth_c, run_c, train_c, thr_c, fus_c, rf_c, rob_c, hp_c;
  std::string synth_dir = "data";
  auto* synth = app.add_subcommand("synth", "Render a synthetic dataset to disk");
  add_common(synth, synth_c);
  synth->add_option("--dir", synth_dir, "Dataset directory");

  auto* run = app.add_subcommand("run", "Train (or load) a model and evaluate the test split");
  add_common(run, run_c);
  auto* train = app.add_subcommand("train", "Train a model and save it");
  add_common(train, train_c);
  auto* thr = app.add_subcommand("ablate-threshold", "Sweep the foreground threshold");
  add_common(thr, thr_c);
  auto* fus = app.add_subcommand("ablate-fusion", "Attention and dropout on/off grid");
  add_common(fus, fus_c);
  auto* rf = app.add_subcommand("ablate-rf", "Sweep the RF intensity threshold");
  add_common(rf, rf_c);
  std::string with_model, without_model;
  auto* rob = app.add_subcommand("robustness", "Camera noise sweep with and without dropout");
  add_common(rob, rob_c);
  rob->add_option("--dropout-model", with_model, "Model trained with dropout");
  rob->add_option("--plain-model", without_model, "Model trained without dropout");
  auto* hp = app.add_subcommand("ablate-hparams", "Sweep epsilon, s, p_drop and the modality code");
  add_common(hp, hp_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth->parsed()) {
      const ExperimentConfig c = resolve(synth_c);
      cmd_synth(c.seed, c.n_train, c.n_test, c.synth, synth_dir);
      std::printf("wrote %d train + %d test samples to %s\n", c.n_train, c.n_test, synth_dir.c_str());
    } else if (run->parsed()) {
      const ExperimentConfig c = resolve(run_c);
      const RunOutcome r = cmd_run(c);
      std::cout << eval_csv(r.eval.result);
      std::printf("seconds %.2f\n", r.seconds);
    } else if (train->parsed()) {
      const ExperimentConfig c = resolve(train_c);
      cmd_train(c);
      std::printf("saved %s\n", (c.out_dir / "model.crmh").string().c_str());
    } else if (thr->parsed()) {
      for (const auto& r : cmd_ablate_threshold(resolve(thr_c))) {
        std::printf("tau %.3f points %zu ap %.4f latency_ms %.2f\n", r.tau, r.points, r.ap, r.latency_ms);
      }
    } else if (fus->parsed()) {
      for (const auto& r : cmd_ablate_fusion(resolve(fus_c))) {
        std::printf("attention %d dropout %d ap_clean %.4f ap_noisy %.4f\n", r.attention, r.dropout, r.ap_clean,
                    r.ap_noisy);
      }
    } else if (rf->parsed()) {
      for (const auto& r : cmd_ablate_rf_threshold(resolve(rf_c))) {
        std::printf("t %.3f points %zu ap %.4f\n", r.t, r.points, r.ap);
      }
    } else if (rob->parsed()) {
      for (const auto& r : cmd_robustness(resolve(rob_c), with_model, without_model)) {
        std::printf("sigma %.3f dropout %.4f plain %.4f gap %+.4f\n", r.sigma, r.ap_dropout, r.ap_no_dropout,
                    r.gap());
      }
    } else if (hp->parsed()) {
      for (const auto& r : cmd_ablate_hparams(resolve(hp_c))) {
        std::printf("%s %.3f ap %.4f\n", r.param.c_str(), r.value, r.ap);
      }
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
