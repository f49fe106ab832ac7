#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "osha/dataset.hpp"

using namespace osha;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string tmp_dir(const std::string& name) {
  const auto dir = (fs::temp_directory_path() / ("osha_test_" + name)).string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<RawRecord> random_records(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  std::vector<RawRecord> recs(n);
  for (int i = 0; i < n; ++i) {
    auto& r = recs[i];
    r.step = static_cast<std::uint64_t>(i);
    r.ego = {u(rng), u(rng), static_cast<int>(rng() % 3), bool(rng() % 2),
             bool(rng() % 2), static_cast<LaneChangeCommand>(rng() % 4),
             u(rng), u(rng), u(rng)};
    for (auto& o : r.objects)
      o = {u(rng), u(rng), u(rng), static_cast<int>(rng() % kMaxLanes), 4.0 + u(rng) / 50,
           bool(rng() % 2)};
    r.command = static_cast<LaneChangeCommand>(rng() % 4);
    r.ta_state = static_cast<TAState>(rng() % kNumTAStates);
  }
  return recs;
}

// A synthetic straight-line episode: constant speed, fixed heading, labels
// assigned by the caller.
Episode straight_episode(int n, double v, double heading) {
  Episode ep;
  ep.manifest.set("valid", "1");
  ep.records.resize(n);
  const double dt_rec = kSimDt * kRecordEvery;
  for (int i = 0; i < n; ++i) {
    auto& r = ep.records[i];
    r.step = static_cast<std::uint64_t>(i);
    r.ego.v = v;
    r.ego.s = 22.2;
    r.ego.x = 10.0 + std::cos(heading) * v * dt_rec * i;
    r.ego.y = -5.0 + std::sin(heading) * v * dt_rec * i;
    r.ego.heading = heading;
  }
  return ep;
}

} // namespace

TEST_CASE("command and state enums survive the byte round trip") {
  for (int c = 0; c < 4; ++c) {
    const auto cmd = static_cast<LaneChangeCommand>(c);
    CHECK(static_cast<LaneChangeCommand>(static_cast<std::uint8_t>(cmd)) == cmd);
  }
  for (int s = 0; s < kNumTAStates; ++s) {
    const auto st = static_cast<TAState>(s);
    CHECK(static_cast<TAState>(static_cast<std::uint8_t>(st)) == st);
  }
}

TEST_CASE("record file round trip is byte identical") {
  const auto dir = tmp_dir("records_rt");
  const auto recs = random_records(257, 11);
  write_records(dir + "/a.bin", recs);
  const auto back = read_records(dir + "/a.bin");
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].step == recs[i].step);
    CHECK(back[i].ego.v == recs[i].ego.v);
    CHECK(back[i].ego.heading == recs[i].ego.heading);
    CHECK(back[i].ego.command == recs[i].ego.command);
    CHECK(back[i].command == recs[i].command);
    CHECK(back[i].ta_state == recs[i].ta_state);
    for (int k = 0; k < kMaxObjects; ++k) {
      CHECK(back[i].objects[k].x == recs[i].objects[k].x);
      CHECK(back[i].objects[k].present == recs[i].objects[k].present);
    }
  }
  write_records(dir + "/b.bin", back);
  CHECK(slurp(dir + "/a.bin") == slurp(dir + "/b.bin"));
  // row size is fixed: header 20 bytes + n * 1042
  CHECK(fs::file_size(dir + "/a.bin") == 20 + 257 * 1042);
}

TEST_CASE("future file round trip is byte identical") {
  const auto dir = tmp_dir("futures_rt");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50, 50);
  std::vector<FutureLabel> futs(64);
  for (auto& f : futs) {
    for (auto& c : f.commands) c = static_cast<LaneChangeCommand>(rng() % 4);
    for (auto& v : f.velocities) v = u(rng);
    for (auto& p : f.positions) p = {u(rng), u(rng)};
  }
  write_futures(dir + "/a.bin", futs);
  const auto back = read_futures(dir + "/a.bin");
  REQUIRE(back.size() == futs.size());
  for (std::size_t i = 0; i < futs.size(); ++i) {
    CHECK(back[i].commands == futs[i].commands);
    CHECK(back[i].velocities == futs[i].velocities);
    for (int k = 0; k < 5; ++k) {
      CHECK(back[i].positions[k].x == futs[i].positions[k].x);
      CHECK(back[i].positions[k].y == futs[i].positions[k].y);
    }
  }
  write_futures(dir + "/b.bin", back);
  CHECK(slurp(dir + "/a.bin") == slurp(dir + "/b.bin"));
}

TEST_CASE("manifest round trip") {
  const auto dir = tmp_dir("manifest");
  Manifest m;
  m.set("kind", "raw");
  m.set_int("records", 1234);
  m.set("track", "training");
  m.save(dir + "/manifest.txt");
  const auto back = Manifest::load(dir + "/manifest.txt");
  CHECK(back.get("kind") == "raw");
  CHECK(back.get_int("records") == 1234);
  CHECK(back.get("missing", "dflt") == "dflt");
}

TEST_CASE("prune keeps the example arithmetic") {
  // collision at record 5000 of 6000: 5000 remain, 4937 usable after the trim
  Episode ep = straight_episode(6000, 10.0, 0.0);
  ep.events.push_back({Event::Type::EgoCollision, 5000 * kRecordEvery, -1, 0});
  REQUIRE(prune_collisions(ep));
  CHECK(ep.records.size() == 5000);
  CHECK(usable_records(ep) == 4937);

  // no collision: nothing removed
  Episode clean = straight_episode(300, 10.0, 0.0);
  REQUIRE(prune_collisions(clean));
  CHECK(clean.records.size() == 300);
  CHECK(usable_records(clean) == 237);

  // early collision: episode dropped with a reason
  Episode early = straight_episode(6000, 10.0, 0.0);
  early.events.push_back({Event::Type::EgoCollision, 100 * kRecordEvery, -1, 0});
  CHECK_FALSE(prune_collisions(early));
  CHECK(early.manifest.get("valid") == "0");
  CHECK(early.manifest.get("drop_reason") == "collision_too_early");

  // too short even without a collision
  Episode shorty = straight_episode(100, 10.0, 0.0);
  CHECK_FALSE(prune_collisions(shorty));
  CHECK(shorty.manifest.get("drop_reason") == "too_short");
}

TEST_CASE("augmentation rewrites the scripted episode exactly") {
  Episode ep = straight_episode(400, 10.0, 0.0);
  // one executed left change: accepted at record 100, movement 130..179
  ep.records[100].ego.command = LaneChangeCommand::Left;
  ep.records[100].command = LaneChangeCommand::Left;
  ep.ta_log = {{200, TAState::None, TAState::Instantiated},
               {242, TAState::Instantiated, TAState::ReadyToChange},
               {260, TAState::ReadyToChange, TAState::StartMovement},
               {360, TAState::StartMovement, TAState::Success},
               {362, TAState::Success, TAState::None}};

  const int conflicts = augment_commands(ep);
  CHECK(conflicts == 0);

  int left = 0, transition = 0, keep = 0;
  for (int i = 0; i < 400; ++i) {
    const auto c = ep.records[i].command;
    if (c == LaneChangeCommand::Left) {
      ++left;
      CHECK(i >= 80);
      CHECK(i <= 100);
    } else if (c == LaneChangeCommand::Transition) {
      ++transition;
      CHECK(i >= 130);
      CHECK(i < 180);
    } else {
      CHECK(c == LaneChangeCommand::KeepLane);
      ++keep;
    }
  }
  CHECK(left == 21);       // 20 artificial + the original emission
  CHECK(transition == 50); // movement span
  CHECK(keep == 400 - 71);
}

TEST_CASE("augmentation erases rejected commands and resolves conflicts") {
  Episode ep = straight_episode(400, 10.0, 0.0);
  // a rejected command at record 40 (Instantiated then Failed): wiped
  ep.records[40].ego.command = LaneChangeCommand::Left;
  ep.records[40].command = LaneChangeCommand::Left;
  // change A (right) accepted at 100, movement 120..169
  ep.records[100].ego.command = LaneChangeCommand::Right;
  // change B (left) accepted at 180, movement 200..249: its window
  // 160..180 overlaps A's transition span 120..169 -> 10 conflicts
  ep.records[180].ego.command = LaneChangeCommand::Left;
  ep.ta_log = {{80, TAState::None, TAState::Instantiated},
               {84, TAState::Instantiated, TAState::ReadyToChange},
               {86, TAState::ReadyToChange, TAState::Interrupted},
               {88, TAState::Interrupted, TAState::Failed},
               {90, TAState::Failed, TAState::None},
               {200, TAState::None, TAState::Instantiated},
               {238, TAState::Instantiated, TAState::ReadyToChange},
               {240, TAState::ReadyToChange, TAState::StartMovement},
               {340, TAState::StartMovement, TAState::Success},
               {342, TAState::Success, TAState::None},
               {360, TAState::None, TAState::Instantiated},
               {398, TAState::Instantiated, TAState::ReadyToChange},
               {400, TAState::ReadyToChange, TAState::StartMovement},
               {500, TAState::StartMovement, TAState::Success},
               {502, TAState::Success, TAState::None}};

  const int conflicts = augment_commands(ep);
  CHECK(conflicts == 10);
  CHECK(ep.records[40].command == LaneChangeCommand::KeepLane); // rejected: wiped
  // B's window wins where it overlaps A's transition span
  for (int i = 160; i <= 180; ++i)
    CHECK(ep.records[i].command == LaneChangeCommand::Left);
  for (int i = 120; i < 160; ++i)
    CHECK(ep.records[i].command == LaneChangeCommand::Transition);
  for (int i = 80; i < 100; ++i)
    CHECK(ep.records[i].command == LaneChangeCommand::Right);
  for (int i = 200; i < 250; ++i)
    CHECK(ep.records[i].command == LaneChangeCommand::Transition);
}

TEST_CASE("future extraction matches the constant-velocity oracle") {
  const double v = 12.5, heading = 0.3;
  Episode ep = straight_episode(300, v, heading);
  for (int i = 0; i < 300; ++i)
    ep.records[i].command =
        i % 5 == 0 ? LaneChangeCommand::Left : LaneChangeCommand::KeepLane;
  extract_futures(ep);
  REQUIRE(ep.futures.size() == 237);
  const double dt_rec = kSimDt * kRecordEvery;
  for (std::size_t t = 0; t < ep.futures.size(); t += 13) {
    const auto& f = ep.futures[t];
    for (int k = 0; k < 5; ++k) {
      const int off = kFutureOffsets[k];
      CHECK(f.velocities[k] == v); // exact copy
      CHECK(f.commands[k] == ep.records[t + off].command);
      // straight-line motion: local future pose is (v * dt * off, 0)
      CHECK(f.positions[k].x == doctest::Approx(v * dt_rec * off).epsilon(1e-12));
      CHECK(f.positions[k].y == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("recorded episodes are deterministic and complete") {
  const auto dir_a = tmp_dir("collect_a");
  const auto dir_b = tmp_dir("collect_b");
  SimConfig cfg;
  cfg.density = 10.0;
  cfg.seed = 3;
  cfg.max_steps = 1000;

  const auto sa = record_episode(cfg, dir_a);
  const auto sb = record_episode(cfg, dir_b);
  CHECK(sa.records == 500);
  CHECK(sb.records == 500);
  CHECK(slurp(dir_a + "/records.bin") == slurp(dir_b + "/records.bin"));
  CHECK(slurp(dir_a + "/ta_log.txt") == slurp(dir_b + "/ta_log.txt"));
  CHECK(slurp(raster_path(dir_a, 250)) == slurp(raster_path(dir_b, 250)));

  // one raster per record, readable and correctly shaped
  std::size_t rasters = 0;
  for (const auto& e : fs::directory_iterator(dir_a + "/rasters")) {
    (void)e;
    ++rasters;
  }
  CHECK(rasters == 500);
  const auto img = png::read_file(raster_path(dir_a, 0));
  CHECK(img.width == 50);
  CHECK(img.height == 100);

  const auto m = Manifest::load(dir_a + "/manifest.txt");
  CHECK(m.get("valid") == "1");
  CHECK(m.get_int("records") == 500);
  CHECK(m.get("track") == "training");

  // every raw lane-change label sits on a record with matching ego.command
  const auto recs = read_records(dir_a + "/records.bin");
  for (const auto& r : recs)
    if (r.command != LaneChangeCommand::KeepLane) CHECK(r.ego.command == r.command);
}

TEST_CASE("preprocess produces a valid processed episode") {
  const auto raw = tmp_dir("pre_raw");
  const auto out = tmp_dir("pre_out");
  SimConfig cfg;
  cfg.density = 12.0;
  cfg.seed = 8;
  cfg.max_steps = 2000; // 1000 records

  record_episode(cfg, raw);
  const auto report = preprocess_episode(raw, out);
  REQUIRE(report.kept);
  CHECK(report.samples == 1000 - kTailTrim);

  const auto ep = load_episode(out);
  CHECK(ep.manifest.get("kind") == "processed");
  CHECK(ep.futures.size() == report.samples);
  CHECK(ep.records.size() == 1000);
  CHECK(fs::exists(raster_path(out, 0)));
  CHECK(fs::exists(raster_path(out, 999)));

  // labels were rewritten: Transition appears iff a change executed
  bool any_transition = false;
  for (const auto& r : ep.records)
    any_transition |= r.command == LaneChangeCommand::Transition;
  const auto changes = executed_changes(ep);
  CHECK(any_transition == !changes.empty());

  // deterministic preprocessing
  const auto out2 = tmp_dir("pre_out2");
  preprocess_episode(raw, out2);
  CHECK(slurp(out + "/records.bin") == slurp(out2 + "/records.bin"));
  CHECK(slurp(out + "/futures.bin") == slurp(out2 + "/futures.bin"));
}

TEST_CASE("stats aggregate labels and drops") {
  const auto root = tmp_dir("stats");
  // episode 1: processed, scripted labels
  {
    const auto dir = root + "/ep1";
    fs::create_directories(dir);
    Episode ep = straight_episode(300, 15.0, 0.0);
    for (int i = 0; i < 10; ++i) ep.records[i].command = LaneChangeCommand::Left;
    for (int i = 10; i < 14; ++i) ep.records[i].command = LaneChangeCommand::Right;
    for (int i = 14; i < 40; ++i) ep.records[i].command = LaneChangeCommand::Transition;
    write_records(dir + "/records.bin", ep.records);
    Manifest m;
    m.set("valid", "1");
    m.set("kind", "processed");
    m.save(dir + "/manifest.txt");
  }
  // episode 2: dropped
  {
    const auto dir = root + "/ep2";
    fs::create_directories(dir);
    Manifest m;
    m.set("valid", "0");
    m.set("drop_reason", "collision_too_early");
    m.save(dir + "/manifest.txt");
  }
  const auto dirs = list_episode_dirs(root);
  REQUIRE(dirs.size() == 2);
  const auto st = compute_stats(dirs);
  CHECK(st.episodes == 1);
  CHECK(st.dropped_episodes == 1);
  CHECK(st.drop_reasons.at("collision_too_early") == 1);
  CHECK(st.samples == 237); // 300 - tail trim
  CHECK(st.left_commands == 10);
  CHECK(st.right_commands == 4);
  CHECK(st.transition_commands == 26);
  CHECK(st.lane_change_commands() == 14);
  CHECK(st.min_speed == doctest::Approx(15.0));
  CHECK(st.max_speed == doctest::Approx(15.0));
  CHECK(st.avg_samples_per_episode == doctest::Approx(237.0));
}
