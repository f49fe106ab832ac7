#pragma once

#include <algorithm>
#include <numeric>
#include <ostream>
#include <random>

#include "osha/nn/adam.hpp"
#include "osha/nn/checkpoint.hpp"
#include "osha/pipeline/sampleset.hpp"

namespace osha {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 16;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  double val_fraction = 0.05;
  std::size_t max_samples = 0; // 0 = use everything
  int threads = 1;             // fixed-order reduction; kept in the config
                               // so the execution plan is explicit
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},     {"batch_size", c.batch_size},
       {"lr", c.lr},             {"seed", c.seed},
       {"val_fraction", c.val_fraction}, {"max_samples", c.max_samples},
       {"threads", c.threads}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("epochs").get_to(c.epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("lr").get_to(c.lr);
  j.at("seed").get_to(c.seed);
  j.at("val_fraction").get_to(c.val_fraction);
  j.at("max_samples").get_to(c.max_samples);
  j.at("threads").get_to(c.threads);
}

struct EpochLog {
  int epoch = 0;
  nn::LossParts train;     // averaged over the epoch
  double val_loss = 0.0;
  double val_lane_acc = 0.0; // first-horizon command accuracy
};

struct TrainResult {
  nn::Checkpoint best;      // lowest validation loss
  nn::Checkpoint last;
  std::vector<EpochLog> epochs;
  double initial_loss = 0.0; // validation loss before any update
  double final_loss = 0.0;   // validation loss after the last epoch
  double majority_acc = 0.0;
  int majority_class = 0;
};

namespace detail_train {

struct EvalStats {
  double loss = 0.0;
  double lane_acc = 0.0;
};

inline EvalStats eval_split(const nn::ModelConfig& cfg, nn::ParamStore& ps,
                            const SampleSet& data,
                            const std::vector<SampleSet::Ref>& refs) {
  EvalStats st;
  if (refs.empty()) return st;
  int correct = 0;
  for (const auto& ref : refs) {
    const nn::SampleInput in = data.input(ref, cfg);
    const nn::SampleTarget t = data.target(ref);
    nn::Graph g;
    const nn::Forward f = nn::forward_sample(g, cfg, ps, in, false);
    nn::LossParts parts;
    nn::build_loss(g, cfg, f, t, &parts);
    st.loss += parts.total;
    // first-horizon command: argmax of the first logit group
    const nn::Mat& logits = g.val(f.lane);
    int best = 0;
    for (int c = 1; c < nn::kLaneClasses; ++c)
      if (logits.at(0, c) > logits.at(0, best)) best = c;
    if (best == t.lane_cls[0]) ++correct;
  }
  st.loss /= static_cast<double>(refs.size());
  st.lane_acc = static_cast<double>(correct) / static_cast<double>(refs.size());
  return st;
}

} // namespace detail_train

// Deterministic single-threaded training loop: seeded shuffles, fixed-order
// batch accumulation, Adam updates, best-checkpoint selection on the
// validation split.
inline TrainResult train_model(const nn::ModelConfig& cfg, const TrainConfig& tc,
                               const SampleSet& data, std::ostream* log = nullptr) {
  if (data.size() == 0) throw std::invalid_argument("train_model: empty sample set");
  std::mt19937_64 rng(tc.seed);
  nn::ParamStore ps = nn::init_params(cfg, tc.seed);
  nn::Adam opt(tc.lr);

  std::vector<SampleSet::Ref> refs = data.refs();
  std::shuffle(refs.begin(), refs.end(), rng);
  if (tc.max_samples > 0 && refs.size() > tc.max_samples) refs.resize(tc.max_samples);
  const std::size_t val_n =
      std::min(refs.size() - 1,
               std::max<std::size_t>(1, static_cast<std::size_t>(refs.size() *
                                                                 tc.val_fraction)));
  std::vector<SampleSet::Ref> val(refs.end() - static_cast<long>(val_n), refs.end());
  refs.resize(refs.size() - val_n);

  TrainResult res;
  const auto [maj_cls, maj_acc] = data.majority_lane_class();
  res.majority_class = maj_cls;
  res.majority_acc = maj_acc;
  res.initial_loss = detail_train::eval_split(cfg, ps, data, val).loss;

  double best_val = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(refs.begin(), refs.end(), rng);
    nn::LossParts sum;
    std::map<std::string, nn::Mat> grads;
    std::size_t in_batch = 0;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const nn::SampleInput in = data.input(refs[i], cfg);
      const nn::SampleTarget t = data.target(refs[i]);
      nn::LossParts parts;
      nn::sample_loss_and_grads(cfg, ps, in, t, &grads, &parts);
      sum.lane += parts.lane;
      sum.vel += parts.vel;
      sum.bez += parts.bez;
      sum.car += parts.car;
      sum.total += parts.total;
      if (++in_batch == static_cast<std::size_t>(tc.batch_size) ||
          i + 1 == refs.size()) {
        for (auto& [name, g] : grads)
          for (auto& x : g.a) x /= static_cast<double>(in_batch);
        opt.step(ps, grads);
        grads.clear();
        in_batch = 0;
      }
    }
    const double inv = 1.0 / static_cast<double>(refs.size());
    EpochLog el;
    el.epoch = epoch;
    el.train = {sum.lane * inv, sum.vel * inv, sum.bez * inv, sum.car * inv,
                sum.total * inv};
    const auto vs = detail_train::eval_split(cfg, ps, data, val);
    el.val_loss = vs.loss;
    el.val_lane_acc = vs.lane_acc;
    res.epochs.push_back(el);
    if (log)
      (*log) << "epoch " << epoch << " train " << el.train.total << " (lane "
             << el.train.lane << " vel " << el.train.vel << " bez " << el.train.bez
             << " car " << el.train.car << ") val " << el.val_loss << " acc "
             << el.val_lane_acc << std::endl;
    if (vs.loss < best_val) {
      best_val = vs.loss;
      res.best.config = cfg;
      res.best.params = ps;
      res.best.meta = {{"epoch", epoch}, {"val_loss", vs.loss},
                       {"val_lane_acc", vs.lane_acc}, {"train", nlohmann::json(tc)}};
    }
  }
  res.final_loss = res.epochs.back().val_loss;
  res.last.config = cfg;
  res.last.params = std::move(ps);
  res.last.meta = {{"epoch", tc.epochs - 1}, {"val_loss", res.final_loss},
                   {"train", nlohmann::json(tc)}};
  return res;
}

} // namespace osha
