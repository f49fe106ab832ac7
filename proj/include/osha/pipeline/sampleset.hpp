#pragma once

#include <string>
#include <vector>

#include "osha/dataset.hpp"
#include "osha/nn/model.hpp"
#include "osha/png_io.hpp"

namespace osha {

// Frame-level feature assembly shared by training and closed-loop inference.
// Normalization constants are part of the model contract.
constexpr double kSpeedNorm = kMaxEgoSpeed;   // 22.2 m/s
constexpr double kRangeNorm = kObserveRadius; // 100 m

inline void fill_frame_features(const RawRecord& rec, double* dst /* 137 */) {
  int k = 0;
  dst[k++] = rec.ego.v / kSpeedNorm;
  dst[k++] = rec.ego.s / kSpeedNorm;
  for (int lane = 0; lane < kMaxLanes; ++lane)
    dst[k++] = rec.ego.lane_id == lane ? 1.0 : 0.0;
  dst[k++] = rec.ego.left_avail ? 1.0 : 0.0;
  dst[k++] = rec.ego.right_avail ? 1.0 : 0.0;
  for (int s = 0; s < kNumTAStates; ++s)
    dst[k++] = static_cast<int>(rec.ta_state) == s ? 1.0 : 0.0;
  for (int i = 0; i < kMaxObjects; ++i) {
    const ObjectState& o = rec.objects[i];
    dst[k++] = o.present ? o.v / kSpeedNorm : 0.0;
    dst[k++] = o.present ? o.x / kRangeNorm : 0.0;
    dst[k++] = o.present ? o.y / kRangeNorm : 0.0;
    dst[k++] = o.present ? static_cast<double>(o.lane_id) / kMaxLanes : 0.0;
    dst[k++] = o.present ? o.length / 10.0 : 0.0;
    dst[k++] = o.present ? 1.0 : 0.0;
  }
}

inline nn::Mat raster_to_mat(const png::Image& img) {
  nn::Mat m(img.height, img.width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    m.a[i] = img.pixels[i] / 255.0;
  return m;
}

// In-memory training corpus: processed episodes with rasters kept as bytes
// and converted on demand.
class SampleSet {
 public:
  struct Ref {
    int episode = 0;
    int record = 0; // base record t; future labels exist for it
  };

  void load(const std::vector<std::string>& dirs, bool with_rasters) {
    for (const auto& dir : dirs) {
      const Manifest m = Manifest::load(dir + "/manifest.txt");
      if (m.get("valid") != "1" || m.get("kind") != "processed")
        throw std::runtime_error("not a valid processed episode: " + dir);
      EpisodeData ep;
      ep.dir = dir;
      ep.records = read_records(dir + "/records.bin");
      ep.futures = read_futures(dir + "/futures.bin");
      if (with_rasters) {
        ep.rasters.reserve(ep.records.size());
        for (const auto& rec : ep.records)
          ep.rasters.push_back(png::read_file(raster_path(dir, rec.step)).pixels);
      }
      const int e = static_cast<int>(episodes_.size());
      for (std::size_t t = 0; t < ep.futures.size(); ++t)
        refs_.push_back({e, static_cast<int>(t)});
      episodes_.push_back(std::move(ep));
    }
  }

  std::size_t size() const { return refs_.size(); }
  const std::vector<Ref>& refs() const { return refs_; }
  bool has_rasters() const {
    return !episodes_.empty() && !episodes_.front().rasters.empty();
  }

  nn::SampleInput input(const Ref& ref, const nn::ModelConfig& cfg) const {
    const EpisodeData& ep = episodes_[ref.episode];
    nn::SampleInput in;
    in.numeric = nn::Mat(cfg.history, nn::kNumericFeatures);
    if (cfg.use_vision) in.rasters.resize(cfg.history);
    for (int k = 0; k < cfg.history; ++k) {
      const int off = history_offset(k, cfg.history);
      const int t = std::max(0, ref.record - off);
      fill_frame_features(ep.records[t], &in.numeric.a[static_cast<std::size_t>(k) *
                                                       nn::kNumericFeatures]);
      if (cfg.use_vision) {
        if (ep.rasters.empty())
          throw std::runtime_error("rasters not loaded for vision model");
        in.rasters[k] = bytes_to_mat(ep.rasters[t]);
      }
    }
    return in;
  }

  nn::SampleTarget target(const Ref& ref) const {
    const EpisodeData& ep = episodes_[ref.episode];
    const FutureLabel& f = ep.futures[ref.record];
    nn::SampleTarget t;
    for (int k = 0; k < nn::kHorizon; ++k) {
      t.lane_cls[k] = static_cast<int>(f.commands[k]);
      t.vel.at(0, k) = f.velocities[k] / kSpeedNorm;
      t.pos.at(k, 0) = f.positions[k].x / kRangeNorm;
      t.pos.at(k, 1) = f.positions[k].y / kRangeNorm;
    }
    const DistanceMatrix dm =
        build_distance_matrix(ep.records[ref.record].ego, ep.records[ref.record].objects);
    for (int i = 0; i < kSlots; ++i)
      for (int j = 0; j < kSlots; ++j) {
        t.dist.at(i, j) = dm.d[i][j] / kRangeNorm;
        t.mask.at(i, j) = dm.mask[i][j] ? 1.0 : 0.0;
      }
    return t;
  }

  // Majority class of the first-horizon lane label; the baseline any
  // classifier must beat.
  std::pair<int, double> majority_lane_class() const {
    std::array<std::size_t, nn::kLaneClasses> counts{};
    for (const auto& ref : refs_) {
      const auto& f = episodes_[ref.episode].futures[ref.record];
      ++counts[static_cast<int>(f.commands[0])];
    }
    int best = 0;
    for (int c = 1; c < nn::kLaneClasses; ++c)
      if (counts[c] > counts[best]) best = c;
    return {best, refs_.empty() ? 0.0
                                : static_cast<double>(counts[best]) / refs_.size()};
  }

  // The history sampling grid, oldest first, expressed in record offsets.
  static int history_offset(int k, int history) {
    // 25 Hz records, 0.5 s stride: offsets ceil(12.5 * j), newest last
    const int j = history - 1 - k;
    return (25 * j + 1) / 2;
  }

 private:
  struct EpisodeData {
    std::string dir;
    std::vector<RawRecord> records;
    std::vector<FutureLabel> futures;
    std::vector<std::vector<std::uint8_t>> rasters;
  };

  static nn::Mat bytes_to_mat(const std::vector<std::uint8_t>& px) {
    nn::Mat m(nn::kRasterH, nn::kRasterW);
    for (std::size_t i = 0; i < px.size(); ++i) m.a[i] = px[i] / 255.0;
    return m;
  }

  std::vector<EpisodeData> episodes_;
  std::vector<Ref> refs_;
};

} // namespace osha
