#include "dropcap/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace dropcap::datasets {
namespace {

int draw_categorical(const std::vector<double>& cdf, double u) {
  return static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), u) -
                          cdf.begin());
}

std::vector<double> make_cdf(const std::vector<double>& probs) {
  std::vector<double> cdf(probs.size());
  std::partial_sum(probs.begin(), probs.end(), cdf.begin());
  return cdf;
}

}  // namespace

Matrix gen_low_rank(int d2, int d0, int rank, SeededRng& rng, bool normalize) {
  if (d2 < 1 || d0 < 1 || rank < 1)
    throw std::invalid_argument("gen_low_rank: dims and rank must be >= 1");
  rank = std::min({rank, d2, d0});
  Matrix g1 = random_gaussian(d2, rank, rng);
  Matrix g2 = random_gaussian(d0, rank, rng);
  Matrix m = g1 * g2.transposed();
  if (normalize) {
    double top = spectral_norm(m);
    if (top > 0.0) m = m.scaled(1.0 / top);
  }
  return m;
}

sensing::SensingSample sample_indicator_observations(
    const Matrix& m, const sensing::MeasurementModel& model, int n,
    SeededRng& rng) {
  if (model.kind != sensing::MeasurementModel::Kind::kIndicator)
    throw std::invalid_argument(
        "sample_indicator_observations: indicator model required");
  if (model.d2() != m.rows() || model.d0() != m.cols())
    throw std::invalid_argument(
        "sample_indicator_observations: shape mismatch");
  if (n < 1)
    throw std::invalid_argument("sample_indicator_observations: n >= 1");
  std::vector<double> row_cdf = make_cdf(model.row_probs);
  std::vector<double> col_cdf = make_cdf(model.col_probs);
  sensing::SensingSample out;
  out.indicator.reserve(n);
  for (int t = 0; t < n; ++t) {
    int r = draw_categorical(row_cdf, rng.uniform01());
    int c = draw_categorical(col_cdf, rng.uniform01());
    out.indicator.push_back(sensing::IndicatorObs{r, c, m(r, c)});
  }
  return out;
}

CompletionTask make_completion_task(int d2, int d0, int rank,
                                    double observe_fraction, bool normalize,
                                    SeededRng rng) {
  if (!(observe_fraction > 0.0 && observe_fraction < 1.0))
    throw std::invalid_argument(
        "make_completion_task: observe_fraction outside (0,1)");
  Matrix truth = gen_low_rank(d2, d0, rank, rng, normalize);

  std::vector<int> cells(static_cast<std::size_t>(d2) * d0);
  std::iota(cells.begin(), cells.end(), 0);
  for (int i = static_cast<int>(cells.size()) - 1; i > 0; --i)
    std::swap(cells[i], cells[rng.uniform_int(i + 1)]);

  int n_train = static_cast<int>(observe_fraction * cells.size());
  if (n_train < 1 || n_train >= static_cast<int>(cells.size()))
    throw std::invalid_argument("make_completion_task: degenerate split");

  sensing::SensingSample train, test;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    int r = cells[k] / d0;
    int c = cells[k] % d0;
    auto& dst = (static_cast<int>(k) < n_train) ? train : test;
    dst.indicator.push_back(sensing::IndicatorObs{r, c, truth(r, c)});
  }
  auto model = sensing::MeasurementModel::indicator(
      std::vector<double>(d2, 1.0 / d2), std::vector<double>(d0, 1.0 / d0));
  return CompletionTask{std::move(truth), std::move(train), std::move(test),
                        std::move(model)};
}

RegressionTask gen_planted_teacher(int d0, int d1, int n_train, int n_test,
                                   InputDist dist, double noise_std,
                                   SeededRng rng) {
  if (d0 < 1 || d1 < 1 || n_train < 1 || n_test < 1)
    throw std::invalid_argument("gen_planted_teacher: bad sizes");
  if (noise_std < 0.0)
    throw std::invalid_argument("gen_planted_teacher: negative noise");
  SeededRng net_rng = rng.derived(1);
  relunet::TwoLayerNet teacher = relunet::he_init_net(1, d1, d0, net_rng);

  auto gen_set = [&](int n, SeededRng set_rng) {
    Matrix xs(d0, n);
    Matrix ys(1, n);
    for (int i = 0; i < n; ++i) {
      std::vector<double> x(d0);
      for (int r = 0; r < d0; ++r) {
        double g = set_rng.gaussian();
        x[r] = dist == InputDist::kFoldedGaussian ? std::fabs(g) : g;
        xs(r, i) = x[r];
      }
      double y = relunet::forward(teacher, x)[0];
      if (noise_std > 0.0) y += noise_std * set_rng.gaussian();
      ys(0, i) = std::clamp(y, -1.0, 1.0);
    }
    return relunet::make_labeled_set(std::move(xs), std::move(ys));
  };

  RegressionTask task{teacher, gen_set(n_train, rng.derived(2)),
                      gen_set(n_test, rng.derived(3)), noise_std};
  return task;
}

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (static_cast<std::uint32_t>(b[off]) << 24) |
         (static_cast<std::uint32_t>(b[off + 1]) << 16) |
         (static_cast<std::uint32_t>(b[off + 2]) << 8) |
         static_cast<std::uint32_t>(b[off + 3]);
}

}  // namespace

IdxTensor parse_idx_bytes(const std::vector<std::uint8_t>& bytes,
                          const std::string& origin) {
  if (bytes.size() < 4)
    throw std::runtime_error("parse_idx: " + origin + ": truncated header");
  IdxTensor t;
  t.magic = read_be32(bytes, 0);
  std::size_t ndim;
  if (t.magic == 0x00000803u) {
    ndim = 3;  // images: count x rows x cols
  } else if (t.magic == 0x00000801u) {
    ndim = 1;  // labels: count
  } else {
    std::ostringstream os;
    os << "parse_idx: " << origin << ": bad magic 0x" << std::hex << t.magic;
    throw std::runtime_error(os.str());
  }
  if (bytes.size() < 4 + 4 * ndim)
    throw std::runtime_error("parse_idx: " + origin + ": truncated dims");
  std::size_t total = 1;
  for (std::size_t k = 0; k < ndim; ++k) {
    std::uint32_t d = read_be32(bytes, 4 + 4 * k);
    t.dims.push_back(d);
    total *= d;
  }
  if (bytes.size() != 4 + 4 * ndim + total)
    throw std::runtime_error("parse_idx: " + origin + ": payload size " +
                             std::to_string(bytes.size() - 4 - 4 * ndim) +
                             " does not match dims product " +
                             std::to_string(total));
  t.payload.assign(bytes.begin() + 4 + 4 * ndim, bytes.end());
  return t;
}

IdxTensor parse_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("parse_idx: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_idx_bytes(bytes, path);
}

relunet::LabeledSet load_binary_pair_data(const IdxTensor& images,
                                          const IdxTensor& labels, int class_a,
                                          int class_b) {
  if (images.magic != 0x00000803u)
    throw std::runtime_error("load_binary_pair: first argument is not images");
  if (labels.magic != 0x00000801u)
    throw std::runtime_error("load_binary_pair: second argument is not labels");
  if (images.dims[0] != labels.dims[0])
    throw std::runtime_error(
        "load_binary_pair: image count " + std::to_string(images.dims[0]) +
        " != label count " + std::to_string(labels.dims[0]));
  if (class_a == class_b)
    throw std::invalid_argument("load_binary_pair: classes must differ");

  const std::size_t count = images.dims[0];
  const std::size_t pixels =
      static_cast<std::size_t>(images.dims[1]) * images.dims[2];
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < count; ++i) {
    int lab = labels.payload[i];
    if (lab == class_a || lab == class_b) keep.push_back(i);
  }
  if (keep.empty())
    throw std::runtime_error("load_binary_pair: no samples in either class");

  Matrix xs(static_cast<int>(pixels), static_cast<int>(keep.size()));
  Matrix ys(1, static_cast<int>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    std::size_t i = keep[k];
    for (std::size_t p = 0; p < pixels; ++p)
      xs(static_cast<int>(p), static_cast<int>(k)) =
          images.payload[i * pixels + p] / 255.0;
    ys(0, static_cast<int>(k)) = labels.payload[i] == class_a ? -1.0 : 1.0;
  }
  return relunet::make_labeled_set(std::move(xs), std::move(ys));
}

relunet::LabeledSet load_binary_pair(const std::string& images_path,
                                     const std::string& labels_path,
                                     int class_a, int class_b) {
  return load_binary_pair_data(parse_idx(images_path), parse_idx(labels_path),
                               class_a, class_b);
}

MovieLensData parse_movielens_text(const std::string& text, bool center,
                                   const std::string& origin) {
  std::unordered_map<long long, int> user_index, movie_index;
  std::vector<long long> user_ids, movie_ids;
  std::vector<int> rows, cols;
  std::vector<double> ratings;

  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    // UserID::MovieID::Rating::Timestamp
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
      std::size_t next = line.find("::", pos);
      if (next == std::string::npos) {
        parts.push_back(line.substr(pos));
        break;
      }
      parts.push_back(line.substr(pos, next - pos));
      pos = next + 2;
    }
    if (parts.size() != 4)
      throw std::runtime_error(origin + ": line " + std::to_string(lineno) +
                               ": expected 4 '::'-separated fields, got " +
                               std::to_string(parts.size()));
    long long uid, mid;
    double rating;
    try {
      uid = std::stoll(parts[0]);
      mid = std::stoll(parts[1]);
      rating = std::stod(parts[2]);
    } catch (const std::exception&) {
      throw std::runtime_error(origin + ": line " + std::to_string(lineno) +
                               ": malformed numeric field");
    }
    auto [uit, unew] = user_index.try_emplace(uid, (int)user_ids.size());
    if (unew) user_ids.push_back(uid);
    auto [mit, mnew] = movie_index.try_emplace(mid, (int)movie_ids.size());
    if (mnew) movie_ids.push_back(mid);
    rows.push_back(uit->second);
    cols.push_back(mit->second);
    ratings.push_back(rating);
  }
  if (ratings.empty())
    throw std::runtime_error(origin + ": no rating lines found");

  double mean =
      std::accumulate(ratings.begin(), ratings.end(), 0.0) / ratings.size();
  const double n = static_cast<double>(ratings.size());
  std::vector<double> row_probs(user_ids.size(), 0.0);
  std::vector<double> col_probs(movie_ids.size(), 0.0);
  for (std::size_t k = 0; k < ratings.size(); ++k) {
    row_probs[rows[k]] += 1.0 / n;
    col_probs[cols[k]] += 1.0 / n;
  }
  // counts/n sum to 1 up to rounding; renormalize so the model ctor accepts
  double rsum = std::accumulate(row_probs.begin(), row_probs.end(), 0.0);
  double csum = std::accumulate(col_probs.begin(), col_probs.end(), 0.0);
  for (double& p : row_probs) p /= rsum;
  for (double& p : col_probs) p /= csum;

  MovieLensData out{
      {}, sensing::MeasurementModel::indicator(row_probs, col_probs),
      std::move(user_ids), std::move(movie_ids), mean, center};
  out.sample.indicator.reserve(ratings.size());
  for (std::size_t k = 0; k < ratings.size(); ++k)
    out.sample.indicator.push_back(sensing::IndicatorObs{
        rows[k], cols[k], center ? ratings[k] - mean : ratings[k]});
  return out;
}

MovieLensData parse_movielens(const std::string& path, bool center) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_movielens: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_movielens_text(ss.str(), center, path);
}

std::pair<sensing::SensingSample, sensing::SensingSample> split(
    const sensing::SensingSample& sample, double test_fraction,
    SeededRng rng) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0))
    throw std::invalid_argument("split: test_fraction outside [0,1]");
  const int n = static_cast<int>(sample.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
  int n_test = static_cast<int>(test_fraction * n);

  sensing::SensingSample train, test;
  auto push = [&](sensing::SensingSample& dst, int i) {
    if (sample.is_indicator())
      dst.indicator.push_back(sample.indicator[i]);
    else
      dst.dense.push_back(sample.dense[i]);
  };
  for (int k = 0; k < n; ++k) push(k < n_test ? test : train, idx[k]);
  return {std::move(train), std::move(test)};
}

}  // namespace dropcap::datasets
