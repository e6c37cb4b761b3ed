#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dropcap/matrix.hpp"
#include "dropcap/records.hpp"
#include "dropcap/relunet.hpp"
#include "dropcap/rng.hpp"
#include "dropcap/sensing.hpp"

namespace dropcap::datasets {

// Random d2 x d0 matrix of exact rank min(rank, d2, d0), product of two
// Gaussian factors; normalize rescales the spectral norm to 1.
Matrix gen_low_rank(int d2, int d0, int rank, SeededRng& rng, bool normalize);

// n i.i.d. indicator observations (row, col, m(row, col)) with indices drawn
// from the model's row/column distributions (with replacement).
sensing::SensingSample sample_indicator_observations(
    const Matrix& m, const sensing::MeasurementModel& model, int n,
    SeededRng& rng);

struct CompletionTask {
  Matrix ground_truth;
  sensing::SensingSample train;
  sensing::SensingSample test;
  sensing::MeasurementModel model;
};

// Matrix completion stand-in: low-rank ground truth, uniform indicator
// model, observe_fraction of all cells drawn without replacement as the
// train set and the remaining cells as the test set.
CompletionTask make_completion_task(int d2, int d0, int rank,
                                    double observe_fraction, bool normalize,
                                    SeededRng rng);

enum class InputDist { kGaussian, kFoldedGaussian };

struct RegressionTask {
  std::optional<relunet::TwoLayerNet> teacher;
  relunet::LabeledSet train;
  relunet::LabeledSet test;
  double noise_std = 0.0;
};

// Planted single-output teacher of width d1 on R^d0.  Targets are the
// teacher output plus Gaussian noise, clipped to [-1, 1].  kFoldedGaussian
// applies |.| coordinatewise to the inputs (an asymmetric distribution for
// the symmetrization experiments).
RegressionTask gen_planted_teacher(int d0, int d1, int n_train, int n_test,
                                   InputDist dist, double noise_std,
                                   SeededRng rng);

// IDX container as stored on disk: big-endian magic then big-endian u32
// dimensions, then the payload bytes.
struct IdxTensor {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;
};

IdxTensor parse_idx_bytes(const std::vector<std::uint8_t>& bytes,
                          const std::string& origin);
IdxTensor parse_idx(const std::string& path);

// Two-class slice of an image/label IDX pair: pixels scaled to [0,1],
// class_a mapped to -1, class_b to +1, everything else dropped.
relunet::LabeledSet load_binary_pair_data(const IdxTensor& images,
                                          const IdxTensor& labels, int class_a,
                                          int class_b);
relunet::LabeledSet load_binary_pair(const std::string& images_path,
                                     const std::string& labels_path,
                                     int class_a, int class_b);

struct MovieLensData {
  sensing::SensingSample sample;      // centered ratings when center is set
  sensing::MeasurementModel model;    // empirical user/movie frequencies
  std::vector<long long> user_ids;    // dense index -> original id
  std::vector<long long> movie_ids;
  double global_mean = 0.0;
  bool centered = true;
};

// Parses "UserID::MovieID::Rating::Timestamp" lines; ids are reindexed
// densely in order of first appearance.
MovieLensData parse_movielens(const std::string& path, bool center = true);
MovieLensData parse_movielens_text(const std::string& text, bool center,
                                   const std::string& origin);

// Deterministic shuffle split; the test side receives floor(n * f) samples.
std::pair<sensing::SensingSample, sensing::SensingSample> split(
    const sensing::SensingSample& sample, double test_fraction, SeededRng rng);

}  // namespace dropcap::datasets
