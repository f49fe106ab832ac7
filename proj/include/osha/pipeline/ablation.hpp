#pragma once

#include <iomanip>
#include <sstream>

#include "osha/pipeline/train.hpp"

namespace osha {

struct AblationRow {
  std::string name;
  double val_loss = 0.0;
  double val_lane_acc = 0.0;
  double train_loss = 0.0;
  bool best_loss = false;
  bool best_acc = false;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  TrainConfig train;
};

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v = {"full", "noswap", "noaux", "novision",
                                             "mlp"};
  return v;
}

// Trains every study variant on the same data with the same budget and ranks
// the outcomes. Per-seed results are averaged when several seeds are given.
inline AblationReport run_ablation(const SampleSet& data, const TrainConfig& base,
                                   const std::vector<std::uint64_t>& seeds,
                                   std::ostream* log = nullptr) {
  if (seeds.empty()) throw std::invalid_argument("run_ablation: no seeds");
  AblationReport rep;
  rep.train = base;
  for (const auto& name : ablation_variants()) {
    AblationRow row;
    row.name = name;
    for (std::uint64_t seed : seeds) {
      TrainConfig tc = base;
      tc.seed = seed;
      if (log) (*log) << "== " << name << " seed " << seed << std::endl;
      const TrainResult res = train_model(nn::make_config(name), tc, data, log);
      row.val_loss += res.final_loss;
      row.val_lane_acc += res.epochs.back().val_lane_acc;
      row.train_loss += res.epochs.back().train.total;
    }
    const double inv = 1.0 / static_cast<double>(seeds.size());
    row.val_loss *= inv;
    row.val_lane_acc *= inv;
    row.train_loss *= inv;
    rep.rows.push_back(row);
  }
  int bl = 0, ba = 0;
  for (std::size_t i = 1; i < rep.rows.size(); ++i) {
    if (rep.rows[i].val_loss < rep.rows[bl].val_loss) bl = static_cast<int>(i);
    if (rep.rows[i].val_lane_acc > rep.rows[ba].val_lane_acc) ba = static_cast<int>(i);
  }
  rep.rows[bl].best_loss = true;
  rep.rows[ba].best_acc = true;
  return rep;
}

inline nlohmann::json ablation_to_json(const AblationReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"name", r.name},
                    {"val_loss", r.val_loss},
                    {"val_lane_acc", r.val_lane_acc},
                    {"train_loss", r.train_loss},
                    {"best_loss", r.best_loss},
                    {"best_acc", r.best_acc}});
  return {{"rows", rows}, {"train", nlohmann::json(rep.train)}};
}

inline std::string ablation_table(const AblationReport& rep) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "variant" << std::right << std::setw(12)
     << "val_loss" << std::setw(12) << "val_acc" << std::setw(12) << "train_loss"
     << "\n";
  for (const auto& r : rep.rows) {
    os << std::left << std::setw(10) << r.name << std::right << std::fixed
       << std::setprecision(4) << std::setw(12) << r.val_loss << std::setw(12)
       << r.val_lane_acc << std::setw(12) << r.train_loss;
    if (r.best_loss) os << "  * best loss";
    if (r.best_acc) os << "  * best acc";
    os << "\n";
  }
  return os.str();
}

} // namespace osha
