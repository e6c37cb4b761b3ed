#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dropcap::cli {

// Flat run configuration.  Values resolve with precedence
// command line > config file > task defaults.
struct RunConfig {
  std::string task = "mc";  // "mc" or "relu"
  std::string data;         // mc: synthetic|movielens, relu: planted|mnist

  int width = 0;
  std::vector<double> rates;
  std::vector<std::uint64_t> seeds;
  double lr = 0.0;
  int batch = 0;
  int epochs = 0;
  std::string mode = "mask";  // mask | penalty
  bool symmetrize = false;
  std::string out = "records.csv";
  double delta = 0.05;

  // synthetic completion
  int d2 = 100;
  int d0 = 80;
  int rank = 3;
  double observe_frac = 0.4;
  bool normalize = true;

  // movielens
  std::string movielens;
  bool center = true;
  double test_frac = 0.1;

  // planted teacher
  int input_dim = 16;
  int teacher_width = 4;
  int n_train = 200;
  int n_test = 2000;
  double noise_std = 0.3;
  std::string input_dist = "gaussian";  // gaussian | folded

  // mnist
  std::string train_images, train_labels, test_images, test_labels;
  int class_a = 4;
  int class_b = 7;

  // bounds / reports
  std::string quantities;
  double k_const = 1.0;
  int beta_dirs = 512;
};

RunConfig default_config(const std::string& task);

// key=value lines, '#' comments; unknown keys are an error.
void apply_config_file(RunConfig& cfg, const std::string& path);

void validate_config(const RunConfig& cfg);

std::uint64_t config_hash(const RunConfig& cfg);
std::string make_run_id(const RunConfig& cfg, std::uint64_t seed);

// exit codes: 0 ok, 1 config error, 2 check failure, 3 divergence
int cmd_mc_train(const RunConfig& cfg);
int cmd_relu_train(const RunConfig& cfg);
int cmd_audit(const RunConfig& cfg, bool inject_bug);
int cmd_bounds(const RunConfig& cfg);

int run_cli(int argc, const char* const* argv);

}  // namespace dropcap::cli
