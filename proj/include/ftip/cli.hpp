#pragma once

#include "ftip/cascade.hpp"
#include "ftip/datagen.hpp"
#include "ftip/eval.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace ftip::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

struct StageTraining {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 16;
  int epochs = 10;
  double lr_decay = 1.0;
};

// Everything a command may need. Each field has a same-named command-line
// flag and config-file key.
struct RunConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path models_dir = "models";
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 1;

  // gen-data
  std::size_t count = 100;
  int width = 128;
  int height = 128;
  std::string placement = "gaussian";
  double sigma_x = -1;
  double sigma_y = -1;
  double dark_fraction = 0.3;
  double left_weight = 0.6;

  // network inputs and architecture
  int train_size = 128;
  int crop_size = 112;
  int mfd_patch = 96;
  double margin = 0.15;
  std::vector<int> channels{16, 32, 64, 64, 128};
  std::vector<int> hidden{256, 128};

  StageTraining hand;
  StageTraining finetune{0.003, 0.9, 16, 5, 1.0};
  StageTraining finger;
  double affine_scale_min = 0.9;
  double affine_scale_max = 1.1;
  double affine_rotation = 15;

  // eval
  std::vector<double> focus_zone{0.25, 0.25, 0.75, 0.75};
  std::vector<double> overlap_thresholds = eval::overlap_thresholds();
  std::vector<double> error_thresholds = eval::error_thresholds();

  // bench / detect
  std::string hand_strategy = "AHD";
  std::string finger_strategy = "MFD";
  int reps = 100;
  int warmup = 5;
};

// Named sub-seeds of the top-level seed.
std::uint64_t data_seed(std::uint64_t seed);

datagen::SceneParams scene_params(const RunConfig& c);
cascade::TrainSettings train_settings(const RunConfig& c, const StageTraining& stage);

// Files written by `eval` into the output directory.
std::vector<std::string> eval_output_files();

// Entry point. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ftip::cli
