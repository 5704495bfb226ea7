#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ftip/cli.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace ftip;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small but complete geometry so every command finishes in seconds.
const std::vector<std::string> kTiny{
    "--count", "12", "--width", "64", "--height", "48", "--train-size", "36", "--crop-size",
    "32", "--mfd-patch", "16", "--channels", "4,8", "--hidden", "16", "--hand-epochs", "2",
    "--finetune-epochs", "1", "--finger-epochs", "2"};

Result tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTiny.begin(), kTiny.end());
  return run(args);
}

struct Workspace {
  fs::path root;
  explicit Workspace(const std::string& name)
      : root(fs::temp_directory_path() / ("ftip_cli_test_" + name)) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string data() const { return (root / "data").string(); }
  std::string models() const { return (root / "models").string(); }
  std::string out() const { return (root / "out").string(); }
};

void build_models(const Workspace& w, const std::string& seed = "1") {
  REQUIRE(tiny({"gen-data", "--data", w.data()}).code == 0);
  for (const char* stage : {"hand", "finetune", "finger-mfd", "finger-spd"}) {
    const auto r = tiny({"train", "--stage", stage, "--data", w.data(), "--models",
                         w.models(), "--out", w.out(), "--seed", seed});
    INFO(r.err);
    REQUIRE(r.code == 0);
  }
}

fs::path first_png(const fs::path& dir) {
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.path().extension() == ".png") return e.path();
  return {};
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run({}).code != cli::kExitOk);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({"train", "--stage", "everything"}).code == cli::kExitUsage);
  CHECK(run({"gen-data", "--placement", "diagonal"}).code == cli::kExitUsage);

  Workspace w("cfg");
  const fs::path cfg = w.root / "bad.toml";
  std::ofstream(cfg) << "no-such-key = 3\n";
  CHECK(run({"gen-data", "--config", cfg.string(), "--data", w.data()}).code ==
        cli::kExitUsage);
}

TEST_CASE("gen-data is deterministic and accepts an empty dataset") {
  Workspace a("gen_a"), b("gen_b");
  CHECK(tiny({"gen-data", "--data", a.data()}).code == 0);
  CHECK(tiny({"gen-data", "--data", b.data()}).code == 0);
  const auto manifest = slurp(fs::path(a.data()) / "manifest.jsonl");
  CHECK(!manifest.empty());
  CHECK(manifest == slurp(fs::path(b.data()) / "manifest.jsonl"));
  CHECK(slurp(first_png(a.data())) == slurp(first_png(b.data())));

  Workspace e("gen_empty");
  CHECK(run({"gen-data", "--count", "0", "--data", e.data()}).code == 0);
}

TEST_CASE("fine-tuning without base weights names the missing file") {
  Workspace w("finetune");
  REQUIRE(tiny({"gen-data", "--data", w.data()}).code == 0);
  const auto r = tiny({"train", "--stage", "finetune", "--data", w.data(), "--models",
                       w.models(), "--out", w.out()});
  CHECK(r.code == cli::kExitFailure);
  CHECK(r.err.find("rough_hand.cdw") != std::string::npos);
}

TEST_CASE("train, eval, bench and detect") {
  Workspace w("pipeline");
  build_models(w);

  // Loss log: header plus one row per epoch.
  std::istringstream loss(slurp(fs::path(w.out()) / "loss_finger-mfd.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(loss, line)) ++rows;
  CHECK(rows == 2);

  // Weights are reproducible.
  Workspace again("pipeline_again");
  build_models(again);
  for (const char* f : {"rough_hand.cdw", "attention_hand.cdw", "finger_mfd.cdw",
                        "finger_spd.cdw", "models.json"})
    CHECK(slurp(fs::path(w.models()) / f) == slurp(fs::path(again.models()) / f));

  SUBCASE("eval writes every declared file with monotone curves") {
    REQUIRE(tiny({"eval", "--data", w.data(), "--models", w.models(), "--out", w.out()}).code ==
            0);
    for (const auto& f : cli::eval_output_files()) CHECK(fs::exists(fs::path(w.out()) / f));
    for (const auto& f : cli::eval_output_files()) {
      if (!f.ends_with(".csv") || (!f.starts_with("overlap_") && !f.starts_with("error_")))
        continue;
      const auto c = eval::read_curve_csv(fs::path(w.out()) / f);
      const bool rising = f.starts_with("error_");
      for (std::size_t i = 1; i < c.detection_rates.size(); ++i)
        CHECK((rising ? c.detection_rates[i] >= c.detection_rates[i - 1]
                      : c.detection_rates[i] <= c.detection_rates[i - 1]));
    }

    // Ground-truth boxes make the fingertip curve independent of the hand nets.
    const auto before = slurp(fs::path(w.out()) / "error_GT_MFD.csv");
    Workspace other("pipeline_other");
    build_models(other, "99");
    for (const char* f : {"rough_hand.cdw", "attention_hand.cdw"})
      fs::copy_file(fs::path(other.models()) / f, fs::path(w.models()) / f,
                    fs::copy_options::overwrite_existing);
    REQUIRE(tiny({"eval", "--data", w.data(), "--models", w.models(), "--out", w.out()}).code ==
            0);
    CHECK(slurp(fs::path(w.out()) / "error_GT_MFD.csv") == before);
  }

  SUBCASE("bench enforces the repetition floor and reports three stages") {
    CHECK(tiny({"bench", "--data", w.data(), "--models", w.models(), "--out", w.out(), "--reps",
                "10"})
              .code == cli::kExitUsage);
    REQUIRE(tiny({"bench", "--data", w.data(), "--models", w.models(), "--out", w.out(),
                  "--reps", "30", "--warmup", "2"})
                .code == 0);
    const auto j = nlohmann::json::parse(slurp(fs::path(w.out()) / "timing.json"));
    for (const char* k : {"hand", "finger", "processing"}) {
      CHECK(j[k]["mean_ms"].get<double>() >= 0);
      CHECK(j[k].contains("p95_ms"));
    }
    CHECK(j["total_ms"].contains("stderr_ms"));
    CHECK(j["n"].get<int>() == 30);
  }

  SUBCASE("detect reports in-bounds coordinates") {
    const auto image = first_png(w.data()).string();
    const auto mfd = tiny({"detect", "--image", image, "--data", w.data(), "--models",
                           w.models(), "--out", w.out(), "--annotate",
                           (w.root / "annotated.png").string()});
    REQUIRE(mfd.code == 0);
    CHECK(fs::exists(w.root / "annotated.png"));
    const auto j = nlohmann::json::parse(mfd.out);
    const auto box = j["hand_box"].get<std::vector<double>>();
    REQUIRE(box.size() == 4);
    CHECK(box[0] >= 0);
    CHECK(box[1] >= 0);
    CHECK(box[2] <= 64);
    CHECK(box[3] <= 48);
    const auto tip = j["fingertip"].get<std::vector<double>>();
    CHECK((tip[0] >= 0 && tip[0] <= 64 && tip[1] >= 0 && tip[1] <= 48));
    CHECK(j.contains("joint"));

    // Repeat runs agree on everything except wall-clock timings.
    const auto again_run = tiny({"detect", "--image", image, "--data", w.data(), "--models",
                                 w.models(), "--out", w.out()});
    auto k = nlohmann::json::parse(again_run.out);
    CHECK(k["hand_box"] == j["hand_box"]);
    CHECK(k["fingertip"] == j["fingertip"]);
    CHECK(k["joint"] == j["joint"]);

    const auto spd = tiny({"detect", "--image", image, "--finger", "SPD", "--data", w.data(),
                           "--models", w.models(), "--out", w.out()});
    REQUIRE(spd.code == 0);
    CHECK_FALSE(nlohmann::json::parse(spd.out).contains("joint"));

    CHECK(tiny({"detect", "--image", (w.root / "nope.png").string(), "--data", w.data(),
                "--models", w.models(), "--out", w.out()})
              .code == cli::kExitFailure);
  }
}
