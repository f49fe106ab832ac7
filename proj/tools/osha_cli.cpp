// Command-line front end: data collection, preprocessing, statistics,
// training, closed-loop evaluation, the variant study, and the gradient gate.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "osha/dataset.hpp"
#include "osha/nn/gradcheck.hpp"
#include "osha/pipeline/ablation.hpp"
#include "osha/pipeline/eval.hpp"
#include "osha/pipeline/train.hpp"

namespace fs = std::filesystem;
using namespace osha;

namespace {

std::string episode_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "ep%04d", i);
  return buf;
}

int cmd_collect(int episodes, double density, std::uint64_t seed,
                const std::string& track, int steps, const std::string& out) {
  fs::create_directories(out);
  for (int i = 0; i < episodes; ++i) {
    SimConfig cfg;
    cfg.density = density;
    cfg.seed = seed + static_cast<std::uint64_t>(i);
    cfg.track = track;
    cfg.max_steps = steps;
    const auto dir = out + "/" + episode_name(i);
    const auto s = record_episode(cfg, dir);
    std::cout << dir << ": records=" << s.records << " commands=" << s.commands
              << " executed=" << s.executed_changes
              << " collisions=" << s.ego_collisions << "\n";
  }
  return 0;
}

int cmd_preprocess(const std::string& in, const std::string& out) {
  fs::create_directories(out);
  int kept = 0, dropped = 0;
  std::size_t samples = 0;
  for (const auto& dir : list_episode_dirs(in)) {
    const auto name = fs::path(dir).filename().string();
    const auto rep = preprocess_episode(dir, out + "/" + name);
    if (rep.kept) {
      ++kept;
      samples += rep.samples;
      std::cout << name << ": kept, samples=" << rep.samples
                << " conflicts=" << rep.conflicts << "\n";
    } else {
      ++dropped;
      std::cout << name << ": dropped (" << rep.drop_reason << ")\n";
    }
  }
  std::cout << "kept=" << kept << " dropped=" << dropped << " samples=" << samples
            << "\n";
  return 0;
}

int cmd_stats(const std::string& data) {
  const auto st = compute_stats(list_episode_dirs(data));
  nlohmann::json j = {{"episodes", st.episodes},
                      {"dropped_episodes", st.dropped_episodes},
                      {"samples", st.samples},
                      {"left_commands", st.left_commands},
                      {"right_commands", st.right_commands},
                      {"lane_change_commands", st.lane_change_commands()},
                      {"transition_commands", st.transition_commands},
                      {"min_speed", st.min_speed},
                      {"max_speed", st.max_speed},
                      {"avg_samples_per_episode", st.avg_samples_per_episode},
                      {"drop_reasons", st.drop_reasons}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_train(const std::string& data, const std::string& config,
              const std::string& out, const TrainConfig& tc) {
  SampleSet set;
  const nn::ModelConfig mc = nn::make_config(config);
  set.load(list_episode_dirs(data), mc.use_vision);
  std::cout << "samples=" << set.size() << " model=" << config << "\n";
  const TrainResult res = train_model(mc, tc, set, &std::cout);
  save_checkpoint(out, res.best);
  const auto report = out + ".json";
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : res.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"train_total", e.train.total},
                      {"train_lane", e.train.lane},
                      {"train_vel", e.train.vel},
                      {"train_bez", e.train.bez},
                      {"train_car", e.train.car},
                      {"val_loss", e.val_loss},
                      {"val_lane_acc", e.val_lane_acc}});
  std::ofstream(report) << nlohmann::json{{"initial_loss", res.initial_loss},
                                          {"final_loss", res.final_loss},
                                          {"majority_acc", res.majority_acc},
                                          {"epochs", epochs}}
                               .dump(2)
                        << "\n";
  std::cout << "initial=" << res.initial_loss << " final=" << res.final_loss
            << " majority_acc=" << res.majority_acc << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const EvalConfig& ec, const std::string& report,
             const std::string& policy) {
  EvalReport r;
  if (policy == "expert") {
    r = eval_expert(ec);
  } else {
    r = eval_checkpoint(nn::load_checkpoint(ckpt), ec, policy);
  }
  const auto j = nlohmann::json(r).dump(2);
  if (!report.empty()) std::ofstream(report) << j << "\n";
  std::cout << j << "\n";
  return 0;
}

int cmd_ablation(const std::string& data, const std::vector<std::uint64_t>& seeds,
                 const std::string& out, TrainConfig tc) {
  SampleSet set;
  set.load(list_episode_dirs(data), true);
  const AblationReport rep = run_ablation(set, tc, seeds, &std::cout);
  std::ofstream(out) << ablation_to_json(rep).dump(2) << "\n";
  std::cout << ablation_table(rep);
  return 0;
}

int cmd_gradcheck() {
  int total = 0, failures = 0;
  for (const auto& cfg : nn::grad_check_configs()) {
    const auto res = nn::grad_check(cfg, 42, 3);
    total += res.checked;
    failures += res.failures;
    std::cout << cfg.name << ": " << (res.ok ? "ok" : "FAIL") << " checked "
              << res.checked;
    if (!res.ok)
      std::cout << " failures " << res.failures << " worst " << res.worst_param
                << " rel " << res.max_rel_err;
    std::cout << "\n";
  }
  std::cout << "total checked " << total << ", failures " << failures << "\n";
  return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"highway overtaking laboratory"};
  app.require_subcommand(1);

  // collect
  int episodes = 1, steps = 20000;
  double density = 15.0;
  std::uint64_t seed = 1;
  std::string track = "training", out, in, data, config = "full", ckpt, report,
              policy;
  auto* collect = app.add_subcommand("collect", "record expert episodes");
  collect->add_option("--episodes", episodes);
  collect->add_option("--density", density);
  collect->add_option("--seed", seed);
  collect->add_option("--track", track);
  collect->add_option("--steps", steps);
  collect->add_option("--out", out)->required();

  auto* preprocess = app.add_subcommand("preprocess", "prune, relabel, extract labels");
  preprocess->add_option("--in", in)->required();
  preprocess->add_option("--out", out)->required();

  auto* stats = app.add_subcommand("stats", "dataset statistics");
  stats->add_option("--data", data)->required();

  TrainConfig tc;
  auto* train = app.add_subcommand("train", "train a model variant");
  train->add_option("--data", data)->required();
  train->add_option("--config", config);
  train->add_option("--out", out)->required();
  train->add_option("--epochs", tc.epochs);
  train->add_option("--batch", tc.batch_size);
  train->add_option("--lr", tc.lr);
  train->add_option("--seed", tc.seed);
  train->add_option("--max-samples", tc.max_samples);
  train->add_option("--val-fraction", tc.val_fraction);

  EvalConfig ec;
  auto* eval = app.add_subcommand("eval", "closed-loop evaluation");
  eval->add_option("--ckpt", ckpt);
  eval->add_option("--policy", policy, "expert or a label for the checkpoint");
  eval->add_option("--density", ec.density);
  eval->add_option("--episodes", ec.episodes);
  eval->add_option("--seed", ec.seed);
  eval->add_option("--track", ec.track);
  eval->add_option("--steps", ec.max_steps);
  eval->add_option("--report", report);

  std::vector<std::uint64_t> seeds = {1};
  auto* ablation = app.add_subcommand("ablation", "train and rank all variants");
  ablation->add_option("--data", data)->required();
  ablation->add_option("--seeds", seeds);
  ablation->add_option("--out", out)->required();
  ablation->add_option("--epochs", tc.epochs);
  ablation->add_option("--batch", tc.batch_size);
  ablation->add_option("--lr", tc.lr);
  ablation->add_option("--max-samples", tc.max_samples);
  ablation->add_option("--val-fraction", tc.val_fraction);

  app.add_subcommand("gradcheck", "finite-difference gradient gate");

  CLI11_PARSE(app, argc, argv);

  try {
    if (collect->parsed()) return cmd_collect(episodes, density, seed, track, steps, out);
    if (preprocess->parsed()) return cmd_preprocess(in, out);
    if (stats->parsed()) return cmd_stats(data);
    if (train->parsed()) return cmd_train(data, config, out, tc);
    if (eval->parsed()) {
      if (policy != "expert" && ckpt.empty()) {
        std::cerr << "eval: --ckpt is required unless --policy expert\n";
        return 2;
      }
      return cmd_eval(ckpt, ec, report, policy);
    }
    if (ablation->parsed()) return cmd_ablation(data, seeds, out, tc);
    return cmd_gradcheck();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
