#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ftip/eval.hpp"

#include "oracles.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ftip;
using namespace ftip::eval;

namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "ftip_eval_test";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

cascade::NetworkModel random_net(const nn::NetworkSpec& spec, std::uint64_t seed) {
  auto w = nn::init_weights<float>(spec, 2.449489742783178, seed);
  Rng rng(seed);
  for (auto& l : w.layers)
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = float(rng.uniform(0.2, 0.5));
  return {spec, w};
}

cascade::TrainedModels tiny_models(std::uint64_t seed) {
  const cascade::Architecture arch{{4, 8}, {16}};
  cascade::TrainedModels m;
  m.geometry = {36, 32, 16};
  m.rough_hand = random_net(cascade::hand_spec(m.geometry, arch), seed);
  m.attention_hand = random_net(cascade::hand_spec(m.geometry, arch), seed + 1);
  m.finger_multi =
      random_net(cascade::finger_spec(m.geometry, arch, FingerStrategy::MFD), seed + 2);
  m.finger_single =
      random_net(cascade::finger_spec(m.geometry, arch, FingerStrategy::SPD), seed + 3);
  return m;
}

std::vector<datagen::LabeledFrame> frames(std::size_t n) {
  datagen::SceneParams p;
  p.image_size = {64, 48};
  p.seed = 5;
  std::vector<datagen::LabeledFrame> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(datagen::generate_frame(p, i));
  return out;
}

}  // namespace

TEST_CASE("curve examples") {
  const std::vector<double> half{0.5};
  CHECK(overlap_curve(std::vector<double>{0.6, 0.4}, half).detection_rates[0] == 0.5);
  const auto all = overlap_curve(std::vector<double>{1.0, 1.0, 1.0}, overlap_thresholds());
  for (double r : all.detection_rates) CHECK(r == 1.0);
  CHECK(error_curve(std::vector<double>{10, 30}, std::vector<double>{20}).detection_rates[0] == 0.5);
  CHECK(error_curve(std::vector<double>{0.5, 3}, std::vector<double>{0}).detection_rates[0] == 0.0);
  // inclusive thresholds
  CHECK(overlap_curve(std::vector<double>{0.5}, half).detection_rates[0] == 1.0);
  CHECK(error_curve(std::vector<double>{20}, std::vector<double>{20}).detection_rates[0] == 1.0);

  CHECK_THROWS(overlap_curve(std::vector<double>{}, half));
  CHECK_THROWS(error_curve(std::vector<double>{}, half));
  CHECK_THROWS(overlap_curve(std::vector<double>{1.5}, half));
  CHECK_THROWS(error_curve(std::vector<double>{-1}, half));

  const auto grid = overlap_thresholds();
  CHECK(grid.size() == 21);
  CHECK(grid.front() == 0.0);
  CHECK(grid.back() == 1.0);
  CHECK(error_thresholds().size() == 101);
}

TEST_CASE("curves are monotone and match direct counting") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> ious, errors;
    const int n = int(rng.uniform_int(1, 50));
    for (int i = 0; i < n; ++i) {
      ious.push_back(rng.bernoulli(0.1) ? std::round(rng.uniform() * 20) / 20 : rng.uniform());
      errors.push_back(rng.bernoulli(0.1) ? double(rng.uniform_int(0, 100)) : rng.uniform(0, 120));
    }
    const auto oc = overlap_curve(ious, overlap_thresholds());
    const auto ec = error_curve(errors, error_thresholds());
    for (std::size_t i = 0; i < oc.thresholds.size(); ++i) {
      CHECK(oc.detection_rates[i] == oracles::fraction_at_least(ious, oc.thresholds[i]));
      if (i) CHECK(oc.detection_rates[i] <= oc.detection_rates[i - 1]);
    }
    for (std::size_t i = 0; i < ec.thresholds.size(); ++i) {
      CHECK(ec.detection_rates[i] == oracles::fraction_at_most(errors, ec.thresholds[i]));
      if (i) CHECK(ec.detection_rates[i] >= ec.detection_rates[i - 1]);
    }
  }
}

TEST_CASE("overlap definitions") {
  const BBox gt{0, 0, 10, 10}, pred{0, 0, 5, 10};
  CHECK(overlap_rate(pred, gt) == doctest::Approx(0.5));
  CHECK(overlap_rate(gt, pred, OverlapDefinition::intersection_over_gt) == doctest::Approx(1.0));
  CHECK(overlap_rate(pred, gt, OverlapDefinition::intersection_over_gt) == doctest::Approx(0.5));
}

TEST_CASE("curve CSV format and round trip") {
  const auto path = scratch("curve.csv");
  write_curve_csv({{0.5}, {0.94}}, path);
  CHECK(slurp(path) == "threshold,detection_rate\n0.5,0.94\n");

  const auto c = error_curve(std::vector<double>{1.0 / 3, 2.5, 7.125, 90}, error_thresholds());
  write_curve_csv(c, path);
  const auto back = read_curve_csv(path);
  REQUIRE(back.thresholds.size() == c.thresholds.size());
  for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
    CHECK(back.thresholds[i] == std::stod(format_value(c.thresholds[i])));
    CHECK(back.detection_rates[i] == std::stod(format_value(c.detection_rates[i])));
  }
  CHECK_THROWS(write_curve_csv({}, path));
}

TEST_CASE("cross table") {
  SUBCASE("rendering order and format") {
    CrossTable t;
    const double reported[3][2] = {{18.93, 20.34}, {15.71, 16.93}, {10.71, 12.50}};
    const HandStrategy rows[] = {HandStrategy::RHD, HandStrategy::AHD, HandStrategy::GT};
    for (int r = 0; r < 3; ++r) {
      t.cells.push_back({rows[r], FingerStrategy::MFD, reported[r][0], 100});
      t.cells.push_back({rows[r], FingerStrategy::SPD, reported[r][1], 100});
    }
    const auto path = scratch("cross.csv");
    write_cross_csv(t, path);
    CHECK(slurp(path) ==
          "hand_strategy,finger_strategy,mean_error_px,frames\n"
          "RHD,MFD,18.93,100\nRHD,SPD,20.34,100\n"
          "AHD,MFD,15.71,100\nAHD,SPD,16.93,100\n"
          "GT,MFD,10.71,100\nGT,SPD,12.5,100\n");
    const auto back = read_cross_csv(path);
    CHECK(back.at(HandStrategy::AHD, FingerStrategy::MFD).mean_error_px == 15.71);
    CHECK(back.cells.size() == 6);
    CHECK_THROWS(write_cross_csv(CrossTable{}, path));
  }

  SUBCASE("perfect predictions give zero cells") {
    EvalRun run;
    for (int i = 0; i < 3; ++i) {
      EvalRecord r;
      for (auto h : {HandStrategy::RHD, HandStrategy::AHD, HandStrategy::GT})
        for (auto f : {FingerStrategy::MFD, FingerStrategy::SPD}) r.finger_error[{h, f}] = 0.0;
      run.records.push_back(r);
    }
    const auto t = cross_table(run);
    REQUIRE(t.cells.size() == 6);
    for (const auto& c : t.cells) {
      CHECK(c.mean_error_px == 0.0);
      CHECK(c.frames == 3);
    }
    CHECK(t.cells[0].hand == HandStrategy::RHD);
    CHECK(t.cells[0].finger == FingerStrategy::MFD);
    CHECK(t.cells[5].hand == HandStrategy::GT);
    CHECK(t.cells[5].finger == FingerStrategy::SPD);
  }
}

TEST_CASE("evaluate on a smoke set") {
  const auto m = tiny_models(3);
  const auto fs = frames(10);
  const auto run = evaluate(m, fs);
  CHECK(run.failures.empty());
  REQUIRE(run.records.size() == 10);
  const auto table = cross_table(run);
  CHECK(table.cells.size() == 6);
  for (const auto& c : table.cells) {
    CHECK(std::isfinite(c.mean_error_px));
    CHECK(c.mean_error_px >= 0);
  }

  // Aggregates equal a brute-force recomputation.
  double sum = 0;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const auto d = cascade::run_cascade(m, fs[i].image, HandStrategy::RHD, FingerStrategy::MFD);
    sum += geometry::iou(d.hand_box, fs[i].hand_box);
  }
  CHECK(mean_iou(run.records, HandStrategy::RHD) == doctest::Approx(sum / 10).epsilon(1e-9));

  SUBCASE("GT column does not depend on the hand nets") {
    auto other = m;
    other.rough_hand = random_net(m.rough_hand.spec, 77);
    other.attention_hand = random_net(m.attention_hand.spec, 78);
    const auto t2 = cross_table(evaluate(other, fs));
    for (auto f : {FingerStrategy::MFD, FingerStrategy::SPD})
      CHECK(t2.at(HandStrategy::GT, f).mean_error_px ==
            table.at(HandStrategy::GT, f).mean_error_px);
  }

  SUBCASE("failing frames are counted and excluded") {
    auto broken = fs;
    broken[2].hand_box = {5, 5, 5, 5};
    const auto r = evaluate(m, broken);
    CHECK(r.failures.size() == 1);
    CHECK(r.failures[0].frame_id == "2");
    CHECK(r.records.size() == 9);
    CHECK(cross_table(r).failures == 1);
  }
}

TEST_CASE("zone metrics") {
  auto record = [](BBox gt, double iou) {
    EvalRecord r;
    r.image_size = {100, 100};
    r.gt_box = gt;
    r.hand_iou[HandStrategy::RHD] = iou;
    return r;
  };
  const std::vector<EvalRecord> centered{record({40, 40, 60, 60}, 0.8), record({45, 45, 55, 55}, 0.6)};
  auto z = zone_metrics(centered);
  CHECK(z[HandStrategy::RHD].focus_frames == 2);
  CHECK(*z[HandStrategy::RHD].focus_mean_iou == doctest::Approx(0.7));
  CHECK_FALSE(z[HandStrategy::RHD].surround_mean_iou);

  std::vector<EvalRecord> mixed = centered;
  mixed.push_back(record({0, 0, 10, 10}, 0.2));
  const auto whole = zone_metrics(mixed, {0, 0, 1, 1});
  CHECK_FALSE(whole.at(HandStrategy::RHD).surround_mean_iou);
  CHECK(whole.at(HandStrategy::RHD).focus_frames == 3);
  const auto split = zone_metrics(mixed);
  CHECK(*split.at(HandStrategy::RHD).surround_mean_iou == doctest::Approx(0.2));
  CHECK(split.at(HandStrategy::RHD).surround_frames == 1);

  const auto path = scratch("zones.csv");
  write_zone_csv(zone_metrics(centered), path);
  CHECK(slurp(path) ==
        "hand_strategy,zone,mean_iou,frames\nRHD,focus,0.7,2\nRHD,surrounding,absent,0\n");
}

TEST_CASE("latency benchmark") {
  const auto m = tiny_models(4);
  const auto fs = frames(3);
  std::vector<geometry::Image> images;
  for (const auto& f : fs) images.push_back(f.image);
  CHECK_THROWS_WITH(benchmark_latency(m, images, 10), "repetitions ≥ 30 required");

  const auto r = benchmark_latency(m, images, 30, 2);
  REQUIRE(r.stages.size() == 3);
  CHECK(r.stages[0].name == "hand");
  CHECK(r.stages[1].name == "finger");
  CHECK(r.stages[2].name == "processing");
  for (const auto& s : r.stages) {
    CHECK(s.mean_ms > 0);
    CHECK(s.p95_ms >= 0);
  }
  CHECK(r.total_mean_ms > 0);
  CHECK(r.n == 30);
  CHECK_FALSE(r.env.empty());

  const auto path = scratch("timing.json");
  write_timing_json(r, path);
  const auto back = read_timing_json(path);
  CHECK(back.n == 30);
  CHECK(back.total_mean_ms == r.total_mean_ms);
  CHECK(back.stages[1].p95_ms == r.stages[1].p95_ms);
  CHECK(back.env == r.env);
}
