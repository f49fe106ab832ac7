#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "osha/core.hpp"
#include "osha/expert.hpp"
#include "osha/png_io.hpp"
#include "osha/sim.hpp"
#include "osha/travel_assist.hpp"

namespace osha {

// Recording runs at 25 Hz (every 2nd sim step): 20,000 sim steps per episode
// -> 10,000 records. Future labels are spaced ~500 ms apart; at 25 Hz that is
// 12.5 records, so the offsets alternate 12/13 (ceil of k*12.5).
constexpr int kRecordEvery = 2;
constexpr std::array<int, 5> kFutureOffsets = {13, 25, 38, 50, 63};
constexpr int kTailTrim = kFutureOffsets.back();
// 10 history frames, oldest first, covering the 5 s observation window.
constexpr std::array<int, 10> kHistoryOffsets = {113, 100, 88, 75, 63, 50, 38, 25, 13, 0};
constexpr int kMinUsableRecords = kHistoryOffsets.front() + kTailTrim + 1;

struct RawRecord {
  std::uint64_t step = 0; // record index within the episode
  EgoState ego;
  std::vector<ObjectState> objects = std::vector<ObjectState>(kMaxObjects);
  LaneChangeCommand command = LaneChangeCommand::KeepLane; // label slot
  TAState ta_state = TAState::None;
};

struct FutureLabel {
  std::array<LaneChangeCommand, 5> commands{};
  std::array<double, 5> velocities{};
  std::array<Vec2, 5> positions{}; // current-ego-frame local coordinates
};

// ---------------------------------------------------------------------------
// binary record schema (versioned; documented in docs/format.md)

namespace io {

constexpr char kRecordMagic[8] = {'O', 'S', 'H', 'A', 'R', 'E', 'C', 1};
constexpr char kFutureMagic[8] = {'O', 'S', 'H', 'A', 'F', 'U', 'T', 1};
constexpr std::uint32_t kSchemaVersion = 1;

inline void put_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}
inline void put_u8(std::ostream& os, std::uint8_t v) {
  os.write(reinterpret_cast<const char*>(&v), 1);
}

template <typename T>
inline T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

} // namespace io

inline void write_records(const std::string& path, const std::vector<RawRecord>& recs) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  os.write(io::kRecordMagic, 8);
  io::put_u32(os, io::kSchemaVersion);
  io::put_u64(os, recs.size());
  for (const auto& r : recs) {
    io::put_u64(os, r.step);
    io::put_f64(os, r.ego.v);
    io::put_f64(os, r.ego.s);
    io::put_f64(os, r.ego.lane_id);
    io::put_f64(os, r.ego.left_avail ? 1.0 : 0.0);
    io::put_f64(os, r.ego.right_avail ? 1.0 : 0.0);
    io::put_f64(os, static_cast<double>(r.ego.command));
    io::put_f64(os, r.ego.x);
    io::put_f64(os, r.ego.y);
    io::put_f64(os, r.ego.heading);
    for (int k = 0; k < kMaxObjects; ++k) {
      const ObjectState& o = r.objects[k];
      io::put_f64(os, o.v);
      io::put_f64(os, o.x);
      io::put_f64(os, o.y);
      io::put_f64(os, o.lane_id);
      io::put_f64(os, o.length);
      io::put_f64(os, o.present ? 1.0 : 0.0);
    }
    io::put_u8(os, static_cast<std::uint8_t>(r.command));
    io::put_u8(os, static_cast<std::uint8_t>(r.ta_state));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::vector<RawRecord> read_records(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (std::memcmp(magic, io::kRecordMagic, 8) != 0)
    throw std::runtime_error("bad record file magic: " + path);
  if (io::get<std::uint32_t>(is) != io::kSchemaVersion)
    throw std::runtime_error("unsupported record schema version: " + path);
  const auto n = io::get<std::uint64_t>(is);
  std::vector<RawRecord> recs(n);
  for (auto& r : recs) {
    r.step = io::get<std::uint64_t>(is);
    r.ego.v = io::get<double>(is);
    r.ego.s = io::get<double>(is);
    r.ego.lane_id = static_cast<int>(io::get<double>(is));
    r.ego.left_avail = io::get<double>(is) != 0.0;
    r.ego.right_avail = io::get<double>(is) != 0.0;
    r.ego.command = static_cast<LaneChangeCommand>(static_cast<int>(io::get<double>(is)));
    r.ego.x = io::get<double>(is);
    r.ego.y = io::get<double>(is);
    r.ego.heading = io::get<double>(is);
    for (int k = 0; k < kMaxObjects; ++k) {
      ObjectState& o = r.objects[k];
      o.v = io::get<double>(is);
      o.x = io::get<double>(is);
      o.y = io::get<double>(is);
      o.lane_id = static_cast<int>(io::get<double>(is));
      o.length = io::get<double>(is);
      o.present = io::get<double>(is) != 0.0;
    }
    r.command = static_cast<LaneChangeCommand>(io::get<std::uint8_t>(is));
    r.ta_state = static_cast<TAState>(io::get<std::uint8_t>(is));
  }
  if (!is) throw std::runtime_error("truncated record file: " + path);
  return recs;
}

inline void write_futures(const std::string& path, const std::vector<FutureLabel>& futs) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  os.write(io::kFutureMagic, 8);
  io::put_u32(os, io::kSchemaVersion);
  io::put_u64(os, futs.size());
  for (const auto& f : futs) {
    for (auto c : f.commands) io::put_u8(os, static_cast<std::uint8_t>(c));
    for (double v : f.velocities) io::put_f64(os, v);
    for (const auto& p : f.positions) {
      io::put_f64(os, p.x);
      io::put_f64(os, p.y);
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::vector<FutureLabel> read_futures(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (std::memcmp(magic, io::kFutureMagic, 8) != 0)
    throw std::runtime_error("bad future file magic: " + path);
  if (io::get<std::uint32_t>(is) != io::kSchemaVersion)
    throw std::runtime_error("unsupported future schema version: " + path);
  const auto n = io::get<std::uint64_t>(is);
  std::vector<FutureLabel> futs(n);
  for (auto& f : futs) {
    for (auto& c : f.commands)
      c = static_cast<LaneChangeCommand>(io::get<std::uint8_t>(is));
    for (auto& v : f.velocities) v = io::get<double>(is);
    for (auto& p : f.positions) {
      p.x = io::get<double>(is);
      p.y = io::get<double>(is);
    }
  }
  if (!is) throw std::runtime_error("truncated future file: " + path);
  return futs;
}

// ---------------------------------------------------------------------------
// manifest: plain UTF-8 key=value lines, sorted by key

struct Manifest {
  std::map<std::string, std::string> kv;

  void set(const std::string& k, const std::string& v) { kv[k] = v; }
  void set_int(const std::string& k, long long v) { kv[k] = std::to_string(v); }
  std::string get(const std::string& k, const std::string& dflt = "") const {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : it->second;
  }
  long long get_int(const std::string& k, long long dflt = 0) const {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : std::stoll(it->second);
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
    if (!os) throw std::runtime_error("manifest write failed: " + path);
  }
  static Manifest load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    Manifest m;
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) m.kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return m;
  }
};

struct Episode {
  std::string dir;
  Manifest manifest;
  std::vector<RawRecord> records;
  std::vector<FutureLabel> futures;           // processed only
  std::vector<TATransition> ta_log;           // sim-step timestamps
  std::vector<Event> events;
};

inline std::string raster_path(const std::string& dir, std::uint64_t record) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "r%06llu.png", static_cast<unsigned long long>(record));
  return dir + "/rasters/" + buf;
}

inline void write_ta_log(const std::string& path, const std::vector<TATransition>& log) {
  std::ofstream os(path);
  for (const auto& t : log)
    os << t.step << ' ' << to_string(t.from) << ' ' << to_string(t.to) << '\n';
}

inline std::vector<TATransition> read_ta_log(const std::string& path) {
  std::ifstream is(path);
  std::vector<TATransition> log;
  std::string from, to;
  TATransition t;
  auto parse = [](const std::string& s) {
    for (int i = 0; i < kNumTAStates; ++i)
      if (s == to_string(static_cast<TAState>(i))) return static_cast<TAState>(i);
    throw std::runtime_error("bad TA state name: " + s);
  };
  while (is >> t.step >> from >> to) {
    t.from = parse(from);
    t.to = parse(to);
    log.push_back(t);
  }
  return log;
}

inline void write_events(const std::string& path, const std::vector<Event>& events) {
  std::ofstream os(path);
  for (const auto& e : events)
    os << e.step << ' ' << static_cast<int>(e.type) << ' ' << e.a << ' ' << e.b << '\n';
}

inline std::vector<Event> read_events(const std::string& path) {
  std::ifstream is(path);
  std::vector<Event> events;
  int step, type, a, b;
  while (is >> step >> type >> a >> b)
    events.push_back({static_cast<Event::Type>(type), step, a, b});
  return events;
}

// ---------------------------------------------------------------------------
// collection

struct EpisodeSummary {
  std::string dir;
  std::uint64_t records = 0;
  int commands = 0;        // raw left/right labels
  int executed_changes = 0;
  int ego_collisions = 0;
  bool valid = true;
};

// Runs sim + Travel Assist + expert and records at 25 Hz. The expert is
// queried on record steps only, so every raw command lands on a record.
inline EpisodeSummary record_episode(const SimConfig& cfg, const std::string& out_dir,
                                     const RuleThresholds& thresholds = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir + "/rasters");

  Simulator sim;
  sim.reset(cfg);
  TravelAssist ta(sim.track().lane_count, sim.track().lane_width);
  ExpertDriver expert(thresholds);

  EpisodeSummary summary;
  summary.dir = out_dir;
  std::vector<RawRecord> records;
  std::vector<Event> all_events;
  std::ofstream trace(out_dir + "/expert_trace.txt");

  TAInput held{LaneChangeCommand::KeepLane, 0.0};
  try {
    for (int step = 0; step < cfg.max_steps; ++step) {
      auto [ego, objects] = sim.observe();
      TAInput in;
      if (step % kRecordEvery == 0) {
        in = expert.decide(ego, extract_neighborhood(ego, objects), ta.state());
        held = {LaneChangeCommand::KeepLane, in.target_speed};

        RawRecord rec;
        rec.step = static_cast<std::uint64_t>(step / kRecordEvery);
        rec.ego = ego;
        rec.ego.command = in.lane_request;
        rec.objects = objects;
        rec.command = in.lane_request;
        rec.ta_state = ta.state();
        png::write_file(raster_path(out_dir, rec.step), sim.render_lane_raster());

        const auto& tr = expert.last_trace();
        trace << rec.step << ' ' << tr.blocked << ' ' << tr.left.safety << ' '
              << tr.left.speed_gain << ' ' << tr.left.availability << ' '
              << tr.right.safety << ' ' << tr.right.speed_gain << ' '
              << tr.right.availability << ' ' << to_string(tr.decision) << '\n';

        if (in.lane_request == LaneChangeCommand::Left ||
            in.lane_request == LaneChangeCommand::Right)
          ++summary.commands;
        records.push_back(std::move(rec));
      } else {
        in = held;
      }
      auto ego_cmd = ego;
      ego_cmd.command = in.lane_request;
      const TAOutput control = ta.step(ego_cmd, in, objects, step);
      if (control.lane_committed >= 0) sim.set_ego_lane(control.lane_committed);
      auto events = sim.step({control.accel, control.lateral});
      for (const auto& e : events) {
        if (e.type == Event::Type::EgoCollision) ++summary.ego_collisions;
        all_events.push_back(e);
      }
    }
  } catch (const std::exception&) {
    // disk failure or similar: mark the partial directory invalid
    Manifest m;
    m.set("valid", "0");
    m.set("drop_reason", "io_error");
    m.save(out_dir + "/manifest.txt");
    throw;
  }

  for (const auto& t : ta.log())
    if (t.to == TAState::Success) ++summary.executed_changes;

  summary.records = records.size();
  write_records(out_dir + "/records.bin", records);
  write_ta_log(out_dir + "/ta_log.txt", ta.log());
  write_events(out_dir + "/events.txt", all_events);

  Manifest m;
  m.set("schema_version", std::to_string(io::kSchemaVersion));
  m.set("kind", "raw");
  m.set_int("seed", static_cast<long long>(cfg.seed));
  m.set("density", std::to_string(cfg.density));
  m.set("track", cfg.track);
  m.set("dt", std::to_string(cfg.dt));
  m.set_int("record_every", kRecordEvery);
  m.set_int("records", static_cast<long long>(records.size()));
  m.set_int("raw_commands", summary.commands);
  m.set_int("executed_changes", summary.executed_changes);
  m.set_int("ego_collisions", summary.ego_collisions);
  m.set("valid", "1");
  m.save(out_dir + "/manifest.txt");
  return summary;
}

inline Episode load_episode(const std::string& dir) {
  Episode ep;
  ep.dir = dir;
  ep.manifest = Manifest::load(dir + "/manifest.txt");
  ep.records = read_records(dir + "/records.bin");
  if (std::filesystem::exists(dir + "/futures.bin"))
    ep.futures = read_futures(dir + "/futures.bin");
  if (std::filesystem::exists(dir + "/ta_log.txt"))
    ep.ta_log = read_ta_log(dir + "/ta_log.txt");
  if (std::filesystem::exists(dir + "/events.txt"))
    ep.events = read_events(dir + "/events.txt");
  return ep;
}

// ---------------------------------------------------------------------------
// preprocessing

// Drop everything at and after the first ego collision, then the final 2.5 s
// so every remaining record has valid future labels. Returns false when the
// episode is too short to train on and must be dropped.
inline bool prune_collisions(Episode& ep) {
  std::size_t cut = ep.records.size();
  bool collided = false;
  for (const auto& e : ep.events)
    if (e.type == Event::Type::EgoCollision) {
      cut = std::min(cut, static_cast<std::size_t>(e.step / kRecordEvery));
      collided = true;
      break;
    }
  if (collided && cut < ep.records.size()) {
    ep.records.resize(cut);
    ep.manifest.set("pruned_at_collision", std::to_string(cut));
  }
  if (ep.records.size() < static_cast<std::size_t>(kMinUsableRecords)) {
    ep.manifest.set("valid", "0");
    ep.manifest.set("drop_reason", collided ? "collision_too_early" : "too_short");
    return false;
  }
  return true;
}

// Usable sample count after the tail trim.
inline std::size_t usable_records(const Episode& ep) {
  return ep.records.size() > static_cast<std::size_t>(kTailTrim)
             ? ep.records.size() - kTailTrim
             : 0;
}

struct ExecutedChange {
  std::size_t receipt = 0;   // record of command acceptance
  std::size_t movement = 0;  // record of StartMovement
  std::size_t success = 0;   // record of Success
  LaneChangeCommand direction = LaneChangeCommand::KeepLane;
};

inline std::vector<ExecutedChange> executed_changes(const Episode& ep) {
  std::vector<ExecutedChange> out;
  std::optional<ExecutedChange> cur;
  for (const auto& t : ep.ta_log) {
    const auto rec = static_cast<std::size_t>(t.step / kRecordEvery);
    if (t.to == TAState::Instantiated) {
      cur = ExecutedChange{rec, 0, 0, LaneChangeCommand::KeepLane};
      if (rec < ep.records.size()) cur->direction = ep.records[rec].ego.command;
    } else if (cur && t.to == TAState::StartMovement) {
      cur->movement = rec;
    } else if (cur && t.to == TAState::Success) {
      cur->success = rec;
      if (cur->success < ep.records.size() &&
          (cur->direction == LaneChangeCommand::Left ||
           cur->direction == LaneChangeCommand::Right))
        out.push_back(*cur);
      cur.reset();
    } else if (t.to == TAState::Failed) {
      cur.reset();
    }
  }
  return out;
}

// Rewrite labels: 20 records before each accepted command carry the command
// class, the movement span carries Transition, everything else KeepLane.
// Returns the number of overlap conflicts (later command wins).
inline int augment_commands(Episode& ep) {
  const auto changes = executed_changes(ep);
  std::vector<bool> written(ep.records.size(), false);
  int conflicts = 0;
  for (auto& r : ep.records) r.command = LaneChangeCommand::KeepLane;
  for (const auto& ch : changes) {
    const std::size_t lo = ch.receipt >= 20 ? ch.receipt - 20 : 0;
    for (std::size_t i = lo; i <= ch.receipt && i < ep.records.size(); ++i) {
      if (written[i]) ++conflicts;
      ep.records[i].command = ch.direction;
      written[i] = true;
    }
    for (std::size_t i = ch.movement; i < ch.success && i < ep.records.size(); ++i) {
      if (written[i]) ++conflicts;
      ep.records[i].command = LaneChangeCommand::Transition;
      written[i] = true;
    }
  }
  ep.manifest.set_int("augment_conflicts", conflicts);
  ep.manifest.set_int("executed_changes", static_cast<long long>(changes.size()));
  return conflicts;
}

inline void extract_futures(Episode& ep) {
  const std::size_t n = usable_records(ep);
  ep.futures.assign(n, {});
  for (std::size_t t = 0; t < n; ++t) {
    const auto& base = ep.records[t].ego;
    FutureLabel& f = ep.futures[t];
    std::vector<Vec2> globals;
    for (int k = 0; k < 5; ++k) {
      const auto& rec = ep.records[t + kFutureOffsets[k]];
      f.commands[k] = rec.command;
      f.velocities[k] = rec.ego.v;
      globals.push_back({rec.ego.x, rec.ego.y});
    }
    const auto locals = to_local_frame({base.x, base.y, base.heading}, globals);
    for (int k = 0; k < 5; ++k) f.positions[k] = locals[k];
  }
}

struct PreprocessReport {
  bool kept = false;
  std::string drop_reason;
  std::size_t samples = 0;
  int conflicts = 0;
};

inline PreprocessReport preprocess_episode(const std::string& raw_dir,
                                           const std::string& out_dir) {
  namespace fs = std::filesystem;
  Episode ep = load_episode(raw_dir);
  PreprocessReport report;
  if (ep.manifest.get("valid") != "1") {
    report.drop_reason = "invalid_raw";
    return report;
  }
  if (!prune_collisions(ep)) {
    report.drop_reason = ep.manifest.get("drop_reason");
    return report;
  }
  report.conflicts = augment_commands(ep);
  extract_futures(ep);

  fs::create_directories(out_dir + "/rasters");
  write_records(out_dir + "/records.bin", ep.records);
  write_futures(out_dir + "/futures.bin", ep.futures);
  write_ta_log(out_dir + "/ta_log.txt", ep.ta_log);
  for (std::size_t i = 0; i < ep.records.size(); ++i) {
    const auto src = raster_path(raw_dir, ep.records[i].step);
    const auto dst = raster_path(out_dir, ep.records[i].step);
    fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
  }
  ep.manifest.set("kind", "processed");
  ep.manifest.set("source", raw_dir);
  ep.manifest.set_int("records", static_cast<long long>(ep.records.size()));
  ep.manifest.set_int("samples", static_cast<long long>(ep.futures.size()));
  ep.manifest.save(out_dir + "/manifest.txt");

  report.kept = true;
  report.samples = ep.futures.size();
  return report;
}

// ---------------------------------------------------------------------------
// statistics

struct DatasetStats {
  std::uint64_t episodes = 0;
  std::uint64_t dropped_episodes = 0;
  std::uint64_t samples = 0;
  std::uint64_t left_commands = 0;
  std::uint64_t right_commands = 0;
  std::uint64_t transition_commands = 0;
  double min_speed = 0.0;
  double max_speed = 0.0;
  double avg_samples_per_episode = 0.0;
  std::map<std::string, int> drop_reasons;

  std::uint64_t lane_change_commands() const { return left_commands + right_commands; }
};

inline DatasetStats compute_stats(const std::vector<std::string>& episode_dirs) {
  DatasetStats st;
  st.min_speed = std::numeric_limits<double>::infinity();
  st.max_speed = -std::numeric_limits<double>::infinity();
  for (const auto& dir : episode_dirs) {
    const Manifest m = Manifest::load(dir + "/manifest.txt");
    if (m.get("valid") != "1") {
      ++st.dropped_episodes;
      ++st.drop_reasons[m.get("drop_reason", "unknown")];
      continue;
    }
    ++st.episodes;
    const auto records = read_records(dir + "/records.bin");
    const bool processed = m.get("kind") == "processed";
    const std::size_t usable = processed && records.size() > kTailTrim
                                   ? records.size() - kTailTrim
                                   : records.size();
    st.samples += usable;
    for (std::size_t i = 0; i < usable; ++i) {
      switch (records[i].command) {
        case LaneChangeCommand::Left: ++st.left_commands; break;
        case LaneChangeCommand::Right: ++st.right_commands; break;
        case LaneChangeCommand::Transition: ++st.transition_commands; break;
        default: break;
      }
      st.min_speed = std::min(st.min_speed, records[i].ego.v);
      st.max_speed = std::max(st.max_speed, records[i].ego.v);
    }
  }
  if (st.episodes > 0)
    st.avg_samples_per_episode = static_cast<double>(st.samples) / st.episodes;
  if (st.samples == 0) st.min_speed = st.max_speed = 0.0;
  return st;
}

inline std::vector<std::string> list_episode_dirs(const std::string& root) {
  namespace fs = std::filesystem;
  std::vector<std::string> dirs;
  if (fs::exists(root + "/manifest.txt")) {
    dirs.push_back(root);
    return dirs;
  }
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "manifest.txt"))
      dirs.push_back(e.path().string());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

} // namespace osha
