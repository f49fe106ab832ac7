#pragma once

#include <random>
#include <string>

#include "osha/nn/model.hpp"

namespace osha::nn {

inline SampleInput random_sample_input(const ModelConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  SampleInput in;
  in.numeric = Mat(cfg.history, kNumericFeatures);
  for (auto& x : in.numeric.a) x = u(rng);
  if (cfg.use_vision) {
    in.rasters.resize(cfg.history);
    for (auto& img : in.rasters) {
      img = Mat(kRasterH, kRasterW);
      for (auto& x : img.a) x = u01(rng);
    }
  }
  return in;
}

inline SampleTarget random_sample_target(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SampleTarget t;
  for (auto& c : t.lane_cls) c = static_cast<int>(rng() % kLaneClasses);
  for (auto& x : t.vel.a) x = u(rng);
  for (auto& x : t.pos.a) x = u(rng);
  for (auto& x : t.dist.a) x = std::fabs(u(rng));
  // symmetric mask with zero diagonal, ~half the pairs valid
  for (int i = 0; i < kSlots; ++i)
    for (int j = i + 1; j < kSlots; ++j) {
      const double m = rng() % 2 ? 1.0 : 0.0;
      t.mask.at(i, j) = t.mask.at(j, i) = m;
      t.dist.at(j, i) = t.dist.at(i, j);
    }
  return t;
}

struct GradCheckResult {
  bool ok = true;
  int checked = 0;
  int failures = 0;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::string worst_param;
};

// Central-difference check of the analytic gradient on `probes_per_tensor`
// randomly chosen entries of every parameter tensor.
inline GradCheckResult grad_check(const ModelConfig& cfg, std::uint64_t seed,
                                  int probes_per_tensor = 3, double rel_tol = 1e-4,
                                  double abs_tol = 1e-6) {
  std::mt19937_64 rng(seed);
  ParamStore ps = init_params(cfg, seed + 1);
  const SampleInput in = random_sample_input(cfg, rng);
  const SampleTarget t = random_sample_target(rng);

  std::map<std::string, Mat> grads;
  sample_loss_and_grads(cfg, ps, in, t, &grads);

  GradCheckResult res;
  for (auto& [name, g] : grads) {
    Mat& w = ps[name];
    for (int probe = 0; probe < probes_per_tensor; ++probe) {
      const std::size_t idx = rng() % w.size();
      const double w0 = w.a[idx];
      const double h = 1e-5 * std::max(1.0, std::fabs(w0));
      w.a[idx] = w0 + h;
      const double lp = sample_loss_and_grads(cfg, ps, in, t, nullptr);
      w.a[idx] = w0 - h;
      const double lm = sample_loss_and_grads(cfg, ps, in, t, nullptr);
      w.a[idx] = w0;
      const double numeric = (lp - lm) / (2.0 * h);
      const double analytic = g.a[idx];
      const double abs_err = std::fabs(numeric - analytic);
      const double rel_err =
          abs_err / std::max({std::fabs(numeric), std::fabs(analytic), 1e-300});
      ++res.checked;
      const bool pass = abs_err <= abs_tol || rel_err <= rel_tol;
      if (!pass) {
        ++res.failures;
        res.ok = false;
      }
      if (abs_err > abs_tol && rel_err > res.max_rel_err) {
        res.max_rel_err = rel_err;
        res.worst_param = name;
      }
      res.max_abs_err = std::max(res.max_abs_err, abs_err);
    }
  }
  return res;
}

// The compact configuration matrix used by the gradient-check gate: exercises
// both axis orientations, the baseline, the vision path, and every head.
inline std::vector<ModelConfig> grad_check_configs() {
  std::vector<ModelConfig> cfgs;
  auto small = [](const std::string& name, int t, int f, int blocks, int hf, int ht,
                  bool vision, bool aux, bool swap) {
    ModelConfig c;
    c.name = name;
    c.history = t;
    c.d_model = f;
    c.num_blocks = blocks;
    c.heads_feature = hf;
    c.heads_time = ht;
    c.head_hidden = 8;
    c.vision_dim = 6;
    c.use_vision = vision;
    c.aux = aux;
    c.swap = swap;
    return c;
  };
  // lean numeric-only configs across shapes and block counts
  cfgs.push_back(small("g1", 2, 4, 1, 1, 1, false, true, true));
  cfgs.push_back(small("g2", 2, 4, 2, 2, 2, false, true, true));
  cfgs.push_back(small("g3", 3, 6, 2, 2, 3, false, true, true));
  cfgs.push_back(small("g4", 4, 4, 3, 2, 2, false, true, true));
  cfgs.push_back(small("g5", 2, 6, 4, 3, 2, false, true, true));
  cfgs.push_back(small("g6", 4, 8, 2, 4, 2, false, true, true));
  cfgs.push_back(small("g7", 2, 4, 2, 2, 2, false, false, true)); // aux off
  cfgs.push_back(small("g8", 3, 4, 2, 1, 1, false, true, false)); // no swap
  cfgs.push_back(small("g9", 2, 8, 1, 2, 1, false, false, false));
  cfgs.push_back(small("g10", 5, 5, 2, 1, 1, false, true, true)); // square
  // vision-bearing configs (conv path)
  cfgs.push_back(small("g11", 2, 4, 1, 1, 1, true, true, true));
  cfgs.push_back(small("g12", 2, 4, 2, 2, 2, true, true, true));
  cfgs.push_back(small("g13", 3, 6, 2, 2, 3, true, false, true));
  cfgs.push_back(small("g14", 2, 6, 3, 2, 2, true, true, false));
  // MLP baselines
  auto mlp = small("g15", 2, 4, 0, 1, 1, false, true, false);
  mlp.mlp_baseline = true;
  mlp.mlp_dims = {8, 6};
  cfgs.push_back(mlp);
  auto mlp2 = small("g16", 3, 4, 0, 1, 1, true, true, false);
  mlp2.mlp_baseline = true;
  mlp2.mlp_dims = {10, 8, 6};
  cfgs.push_back(mlp2);
  auto mlp3 = small("g17", 2, 6, 0, 1, 1, false, false, false);
  mlp3.mlp_baseline = true;
  mlp3.mlp_dims = {6};
  cfgs.push_back(mlp3);
  // larger mixed shapes
  cfgs.push_back(small("g18", 6, 8, 2, 2, 3, false, true, true));
  cfgs.push_back(small("g19", 4, 6, 4, 2, 2, false, true, true));
  cfgs.push_back(small("g20", 3, 9, 2, 3, 3, false, true, true));
  cfgs.push_back(small("g21", 2, 4, 3, 2, 1, true, true, true));
  return cfgs;
}

} // namespace osha::nn
