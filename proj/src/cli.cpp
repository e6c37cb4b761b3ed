#include "dropcap/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "dropcap/datasets.hpp"
#include "dropcap/matrix.hpp"
#include "dropcap/records.hpp"
#include "dropcap/relunet.hpp"
#include "dropcap/sensing.hpp"

namespace dropcap::cli {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(s);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

std::vector<double> parse_double_list(const std::string& v) {
  std::vector<double> out;
  for (const auto& p : split_on(v, ',')) out.push_back(std::stod(trim(p)));
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& v) {
  std::vector<std::uint64_t> out;
  for (const auto& p : split_on(v, ',')) out.push_back(std::stoull(trim(p)));
  return out;
}

}  // namespace

RunConfig default_config(const std::string& task) {
  RunConfig cfg;
  cfg.task = task;
  for (std::uint64_t s = 0; s < 20; ++s) cfg.seeds.push_back(s);
  cfg.rates = {0.5};
  if (task == "mc") {
    cfg.data = "synthetic";
    cfg.width = 20;
    cfg.lr = 1.0;
    cfg.batch = 2000;
    cfg.epochs = 100;
    cfg.noise_std = 0.0;
  } else if (task == "relu") {
    cfg.data = "planted";
    cfg.width = 32;
    cfg.lr = 1e-3;
    cfg.batch = 32;
    cfg.epochs = 30;
  } else if (task == "none") {
    cfg.width = 1;
    cfg.lr = 1.0;
    cfg.batch = 1;
    cfg.epochs = 1;
  } else {
    throw std::invalid_argument("default_config: unknown task " + task);
  }
  return cfg;
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  ": expected key=value");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    try {
      if (key == "data") cfg.data = val;
      else if (key == "width") cfg.width = std::stoi(val);
      else if (key == "rates") cfg.rates = parse_double_list(val);
      else if (key == "seeds") cfg.seeds = parse_seed_list(val);
      else if (key == "lr") cfg.lr = std::stod(val);
      else if (key == "batch") cfg.batch = std::stoi(val);
      else if (key == "epochs") cfg.epochs = std::stoi(val);
      else if (key == "mode") cfg.mode = val;
      else if (key == "symmetrize") cfg.symmetrize = parse_bool(val, key);
      else if (key == "out") cfg.out = val;
      else if (key == "delta") cfg.delta = std::stod(val);
      else if (key == "d2") cfg.d2 = std::stoi(val);
      else if (key == "d0") cfg.d0 = std::stoi(val);
      else if (key == "rank") cfg.rank = std::stoi(val);
      else if (key == "observe_frac") cfg.observe_frac = std::stod(val);
      else if (key == "normalize") cfg.normalize = parse_bool(val, key);
      else if (key == "movielens") cfg.movielens = val;
      else if (key == "center") cfg.center = parse_bool(val, key);
      else if (key == "test_frac") cfg.test_frac = std::stod(val);
      else if (key == "input_dim") cfg.input_dim = std::stoi(val);
      else if (key == "teacher_width") cfg.teacher_width = std::stoi(val);
      else if (key == "n_train") cfg.n_train = std::stoi(val);
      else if (key == "n_test") cfg.n_test = std::stoi(val);
      else if (key == "noise_std") cfg.noise_std = std::stod(val);
      else if (key == "input_dist") cfg.input_dist = val;
      else if (key == "train_images") cfg.train_images = val;
      else if (key == "train_labels") cfg.train_labels = val;
      else if (key == "test_images") cfg.test_images = val;
      else if (key == "test_labels") cfg.test_labels = val;
      else if (key == "class_a") cfg.class_a = std::stoi(val);
      else if (key == "class_b") cfg.class_b = std::stoi(val);
      else if (key == "quantities") cfg.quantities = val;
      else if (key == "k_const") cfg.k_const = std::stod(val);
      else if (key == "beta_dirs") cfg.beta_dirs = std::stoi(val);
      else
        throw std::invalid_argument("config: unknown key " + key);
    } catch (const std::exception& e) {
      // our own diagnostics carry a config: prefix; stoi/stod do not
      if (std::string_view(e.what()).rfind("config:", 0) == 0) throw;
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  ": bad value for " + key);
    }
  }
}

void validate_config(const RunConfig& cfg) {
  if (cfg.task != "mc" && cfg.task != "relu" && cfg.task != "none")
    throw std::invalid_argument("config: unknown task " + cfg.task);
  if (cfg.width < 1) throw std::invalid_argument("config: width must be >= 1");
  if (cfg.rates.empty()) throw std::invalid_argument("config: no rates");
  for (double r : cfg.rates)
    if (!(r >= 0.0 && r < 1.0))
      throw std::invalid_argument("config: rate outside [0,1)");
  if (cfg.seeds.empty()) throw std::invalid_argument("config: no seeds");
  if (cfg.lr <= 0.0) throw std::invalid_argument("config: lr must be > 0");
  if (cfg.batch < 1) throw std::invalid_argument("config: batch must be >= 1");
  if (cfg.epochs < 1)
    throw std::invalid_argument("config: epochs must be >= 1");
  if (cfg.mode != "mask" && cfg.mode != "penalty")
    throw std::invalid_argument("config: mode must be mask or penalty");
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0))
    throw std::invalid_argument("config: delta outside (0,1)");
  if (cfg.task == "mc" && cfg.data != "synthetic" && cfg.data != "movielens")
    throw std::invalid_argument("config: mc data must be synthetic|movielens");
  if (cfg.task == "relu" && cfg.data != "planted" && cfg.data != "mnist")
    throw std::invalid_argument("config: relu data must be planted|mnist");
  if (cfg.input_dist != "gaussian" && cfg.input_dist != "folded")
    throw std::invalid_argument("config: input_dist must be gaussian|folded");
  if (cfg.noise_std < 0.0)
    throw std::invalid_argument("config: noise_std must be >= 0");
}

std::uint64_t config_hash(const RunConfig& cfg) {
  std::ostringstream os;
  os << cfg.task << '|' << cfg.data << '|' << cfg.width << '|' << cfg.lr << '|'
     << cfg.batch << '|' << cfg.epochs << '|' << cfg.mode << '|'
     << cfg.symmetrize << '|' << cfg.delta << '|' << cfg.d2 << '|' << cfg.d0
     << '|' << cfg.rank << '|' << cfg.observe_frac << '|' << cfg.normalize
     << '|' << cfg.movielens << '|' << cfg.center << '|' << cfg.test_frac
     << '|' << cfg.input_dim << '|' << cfg.teacher_width << '|' << cfg.n_train
     << '|' << cfg.n_test << '|' << cfg.noise_std << '|' << cfg.input_dist
     << '|' << cfg.train_images << '|' << cfg.train_labels << '|'
     << cfg.test_images << '|' << cfg.test_labels << '|' << cfg.class_a << '|'
     << cfg.class_b << '|' << cfg.k_const << '|' << cfg.beta_dirs;
  for (double r : cfg.rates) os << '|' << r;
  for (auto s : cfg.seeds) os << '|' << s;
  std::string bytes = os.str();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string make_run_id(const RunConfig& cfg, std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "c%016llx-s%llu",
                static_cast<unsigned long long>(config_hash(cfg)),
                static_cast<unsigned long long>(seed));
  return buf;
}

namespace {

sensing::TrainMode mode_of(const RunConfig& cfg) {
  return cfg.mode == "mask" ? sensing::TrainMode::kSampledMask
                            : sensing::TrainMode::kExplicitPenalty;
}

}  // namespace

int cmd_mc_train(const RunConfig& cfg) {
  validate_config(cfg);
  std::vector<double> rates = cfg.rates;
  std::vector<std::uint64_t> seeds = cfg.seeds;
  std::sort(rates.begin(), rates.end());
  std::sort(seeds.begin(), seeds.end());

  std::optional<datasets::MovieLensData> ml;
  if (cfg.data == "movielens")
    ml = datasets::parse_movielens(cfg.movielens, cfg.center);

  std::vector<ExperimentRecord> all;
  bool diverged = false;
  for (std::uint64_t seed : seeds) {
    SeededRng root(seed);

    sensing::SensingSample train, test;
    int d2, d0;
    if (cfg.data == "synthetic") {
      auto task = datasets::make_completion_task(
          cfg.d2, cfg.d0, cfg.rank, cfg.observe_frac, cfg.normalize,
          root.derived(101));
      train = std::move(task.train);
      test = std::move(task.test);
      d2 = cfg.d2;
      d0 = cfg.d0;
      // observation noise corrupts training labels only; test entries stay
      // clean so test loss measures recovery of the planted matrix
      if (cfg.noise_std > 0.0) {
        SeededRng noise_rng = root.derived(103);
        for (auto& obs : train.indicator)
          obs.y += cfg.noise_std * noise_rng.gaussian();
      }
    } else {
      auto parts = datasets::split(ml->sample, cfg.test_frac, root.derived(102));
      train = std::move(parts.first);
      test = std::move(parts.second);
      d2 = ml->model.d2();
      d0 = ml->model.d0();
    }

    for (std::size_t ri = 0; ri < rates.size(); ++ri) {
      sensing::DropoutConfig d(rates[ri]);
      SeededRng init_rng = root.derived(200 + ri);
      sensing::FactorPair init =
          sensing::he_init_factors(d2, d0, cfg.width, init_rng);
      sensing::TrainHp hp{cfg.lr, cfg.batch, cfg.epochs};
      sensing::RunMeta meta{make_run_id(cfg, seed), seed};
      auto result =
          sensing::sgd_dropout_train(init, train, d, hp, mode_of(cfg),
                                     root.derived(300 + ri), &test, meta);
      diverged = diverged || result.diverged;
      all.insert(all.end(), result.records.begin(), result.records.end());
    }
  }
  write_records(all, cfg.out);
  std::printf("wrote %zu records to %s\n", all.size(), cfg.out.c_str());
  return diverged ? 3 : 0;
}

int cmd_relu_train(const RunConfig& cfg) {
  validate_config(cfg);
  std::vector<double> rates = cfg.rates;
  std::vector<std::uint64_t> seeds = cfg.seeds;
  std::sort(rates.begin(), rates.end());
  std::sort(seeds.begin(), seeds.end());

  std::optional<relunet::LabeledSet> mnist_train, mnist_test;
  if (cfg.data == "mnist") {
    mnist_train = datasets::load_binary_pair(cfg.train_images, cfg.train_labels,
                                             cfg.class_a, cfg.class_b);
    mnist_test = datasets::load_binary_pair(cfg.test_images, cfg.test_labels,
                                            cfg.class_a, cfg.class_b);
  }

  std::vector<ExperimentRecord> all;
  bool diverged = false;
  for (std::uint64_t seed : seeds) {
    SeededRng root(seed);

    relunet::LabeledSet train{{}, {}}, test{{}, {}};
    if (cfg.data == "planted") {
      auto dist = cfg.input_dist == "folded"
                      ? datasets::InputDist::kFoldedGaussian
                      : datasets::InputDist::kGaussian;
      auto task = datasets::gen_planted_teacher(
          cfg.input_dim, cfg.teacher_width, cfg.n_train, cfg.n_test, dist,
          cfg.noise_std, root.derived(100));
      train = std::move(task.train);
      test = std::move(task.test);
    } else {
      train = *mnist_train;
      test = *mnist_test;
    }
    // symmetrize the training sample only; test loss stays a measurement
    // against the original input distribution
    if (cfg.symmetrize) train = relunet::symmetrize(train, root.derived(401));

    for (std::size_t ri = 0; ri < rates.size(); ++ri) {
      sensing::DropoutConfig d(rates[ri]);
      SeededRng init_rng = root.derived(200 + ri);
      relunet::TwoLayerNet init = relunet::he_init_net(
          train.targets.rows(), cfg.width, train.inputs.rows(), init_rng);
      relunet::TrainHp hp{cfg.lr, cfg.batch, cfg.epochs};
      relunet::RunMeta meta{make_run_id(cfg, seed), seed};
      auto result = relunet::sgd_dropout_train(init, train, d, hp,
                                               mode_of(cfg),
                                               root.derived(300 + ri), &test,
                                               meta, cfg.beta_dirs);
      diverged = diverged || result.diverged;
      all.insert(all.end(), result.records.begin(), result.records.end());
    }
  }
  write_records(all, cfg.out);
  std::printf("wrote %zu records to %s\n", all.size(), cfg.out.c_str());
  return diverged ? 3 : 0;
}

namespace {

struct AuditState {
  bool all_pass = true;
  void report(bool pass, const char* name, const std::string& detail) {
    std::printf("[%s] %s: %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
    all_pass = all_pass && pass;
  }
};

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void audit_sensing_identity(AuditState& st, std::uint64_t base_seed,
                            double bug_factor) {
  SeededRng rng(base_seed, 11);
  // indicator instance
  Matrix u = random_gaussian(6, 4, rng, 0.9);
  Matrix v = random_gaussian(5, 4, rng, 0.9);
  sensing::FactorPair f(u, v);
  std::vector<double> rp = {0.3, 0.2, 0.15, 0.15, 0.1, 0.1};
  std::vector<double> cp = {0.25, 0.25, 0.2, 0.2, 0.1};
  auto model = sensing::MeasurementModel::indicator(rp, cp);
  Matrix truth = random_gaussian(6, 5, rng, 0.5);
  SeededRng obs_rng = rng.derived(1);
  auto sample = datasets::sample_indicator_observations(truth, model, 40,
                                                        obs_rng);
  // dense instance
  SeededRng rng2(base_seed, 12);
  sensing::FactorPair g(random_gaussian(4, 3, rng2, 0.8),
                        random_gaussian(3, 3, rng2, 0.8));
  sensing::SensingSample dense_sample;
  for (int j = 0; j < 30; ++j) {
    Matrix a = random_gaussian(4, 3, rng2);
    dense_sample.dense.push_back(sensing::DenseObs{a, rng2.gaussian()});
  }

  const double rates[] = {0.0, 0.3, 0.5};
  int check = 0;
  for (double rate : rates) {
    sensing::DropoutConfig d(rate);
    for (int inst = 0; inst < 2; ++inst) {
      const sensing::FactorPair& fp = inst == 0 ? f : g;
      const sensing::SensingSample& sp = inst == 0 ? sample : dense_sample;
      auto mc = sensing::dropout_objective_mc(fp, sp, d, 200000,
                                              rng.derived(1000 + check));
      double closed = sensing::erm_loss(fp, sp) +
                      bug_factor * d.lambda *
                          sensing::explicit_regularizer(fp, sp);
      double dev = std::fabs(mc.mean - closed);
      double tol = 3.0 * mc.std_error;
      char name[64];
      std::snprintf(name, sizeof(name), "identity-sensing-%s rate=%.1f",
                    inst == 0 ? "indicator" : "dense", rate);
      st.report(dev <= tol, name,
                "|mc - closed| = " + num(dev) + ", 3*stderr = " + num(tol));
      ++check;
    }
  }
}

void audit_relu_identity(AuditState& st, std::uint64_t base_seed,
                         double bug_factor) {
  SeededRng rng(base_seed, 21);
  relunet::TwoLayerNet net(random_gaussian(2, 6, rng, 0.8),
                           random_gaussian(5, 6, rng, 0.8));
  Matrix xs = random_gaussian(5, 30, rng);
  Matrix ys(2, 30);
  for (int i = 0; i < 30; ++i)
    for (int r = 0; r < 2; ++r) ys(r, i) = 0.7 * (2.0 * rng.uniform01() - 1.0);
  auto data = relunet::make_labeled_set(xs, ys);

  const double rates[] = {0.0, 0.5};
  int check = 0;
  for (double rate : rates) {
    sensing::DropoutConfig d(rate);
    auto mc = relunet::dropout_objective_mc(net, data, d, 200000,
                                            rng.derived(2000 + check));
    double closed = relunet::empirical_loss(net, data) +
                    bug_factor * relunet::explicit_regularizer(net, data, d);
    double dev = std::fabs(mc.mean - closed);
    double tol = 3.0 * mc.std_error;
    char name[64];
    std::snprintf(name, sizeof(name), "identity-relu rate=%.1f", rate);
    st.report(dev <= tol, name,
              "|mc - closed| = " + num(dev) + ", 3*stderr = " + num(tol));
    ++check;
  }
}

void audit_theta(AuditState& st, std::uint64_t base_seed) {
  struct Case {
    int d2, d0, rank, d1;
    bool weighted;
  };
  const Case cases[] = {{4, 3, 2, 4, true}, {5, 5, 3, 5, true},
                        {5, 4, 2, 4, false}};
  int idx = 0;
  for (const auto& c : cases) {
    SeededRng rng(base_seed, 31 + idx);
    Matrix m = datasets::gen_low_rank(c.d2, c.d0, c.rank, rng, false);
    sensing::MeasurementModel model = sensing::MeasurementModel::gaussian(
        c.d2, c.d0);
    if (c.weighted) {
      std::vector<double> rp(c.d2), cp(c.d0);
      double rs = 0.0, cs = 0.0;
      for (auto& p : rp) rs += (p = 0.5 + rng.uniform01());
      for (auto& p : cp) cs += (p = 0.5 + rng.uniform01());
      for (auto& p : rp) p /= rs;
      for (auto& p : cp) p /= cs;
      model = sensing::MeasurementModel::indicator(rp, cp);
    }
    double theta = c.weighted
                       ? sensing::induced_regularizer_weighted(m, model, c.d1)
                       : sensing::induced_regularizer_gaussian(m, c.d1);
    auto eq = sensing::equalized_minimizer(m, model, c.d1);
    double r_eq = sensing::expected_regularizer(eq, model);
    double scale = std::max(1.0, theta);
    char name[64];
    std::snprintf(name, sizeof(name), "theta-equalized-%s[%d]",
                  c.weighted ? "weighted" : "gaussian", idx);
    st.report(std::fabs(r_eq - theta) <= 1e-8 * scale, name,
              "|R(equalized) - theta| = " + num(std::fabs(r_eq - theta)));

    auto oracle = sensing::theta_minimization_oracle(m, model, c.d1,
                                                     rng.derived(7));
    std::snprintf(name, sizeof(name), "theta-oracle-%s[%d]",
                  c.weighted ? "weighted" : "gaussian", idx);
    bool ok = oracle.value >= theta - 1e-6 * scale &&
              std::fabs(oracle.value - theta) <= 1e-6 * scale &&
              oracle.constraint_residual <= 1e-8 * (1.0 + m.frobenius_norm());
    st.report(ok, name,
              "oracle - theta = " + num(oracle.value - theta) +
                  ", constraint residual = " + num(oracle.constraint_residual));
    ++idx;
  }
}

void audit_isotropy(AuditState& st, std::uint64_t base_seed) {
  SeededRng rng(base_seed, 41);
  relunet::TwoLayerNet net(random_gaussian(1, 5, rng, 0.7),
                           random_gaussian(6, 5, rng, 0.7));
  sensing::DropoutConfig d(0.5);
  auto chk = relunet::isotropy_regularizer_check(net, 400000, d,
                                                 rng.derived(1));
  double dev = std::fabs(chk.lhs - chk.rhs);
  double tol = 3.0 * chk.std_error;
  st.report(dev <= tol, "isotropy-path-norm",
            "|mc - lambda/2 * path| = " + num(dev) + ", 3*stderr = " + num(tol));
}

}  // namespace

int cmd_audit(const RunConfig& cfg, bool inject_bug) {
  validate_config(cfg);
  std::uint64_t base_seed = cfg.seeds.front();
  double bug_factor = inject_bug ? 1.01 : 1.0;
  if (inject_bug)
    std::printf("audit: injected-bug mode, lambda scaled by %.2f\n",
                bug_factor);
  AuditState st;
  audit_sensing_identity(st, base_seed, bug_factor);
  audit_relu_identity(st, base_seed, bug_factor);
  audit_theta(st, base_seed);
  audit_isotropy(st, base_seed);
  std::printf("audit: %s\n", st.all_pass ? "all checks passed"
                                         : "checks FAILED");
  return st.all_pass ? 0 : 2;
}

namespace {

double cell(const std::vector<std::string>& fields, std::size_t i) {
  if (i >= fields.size()) return kNan;
  std::string t = trim(fields[i]);
  if (t.empty()) return kNan;
  return std::stod(t);
}

std::string bound_or_reason(const std::function<double()>& f) {
  try {
    double v = f();
    if (std::isnan(v)) return "n/a (missing inputs)";
    return num(v);
  } catch (const std::exception& e) {
    return std::string("n/a (") + e.what() + ")";
  }
}

}  // namespace

int cmd_bounds(const RunConfig& cfg) {
  validate_config(cfg);
  if (cfg.quantities.empty())
    throw std::invalid_argument("bounds: --quantities file required");
  std::ifstream in(cfg.quantities);
  if (!in)
    throw std::invalid_argument("bounds: cannot open " + cfg.quantities);

  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("bounds: empty quantities file");
  const std::string expect =
      "label,n,delta,d2,d0,alpha,beta,x_mahal,rank_c,train_loss,"
      "train_loss_sym,alpha_sym,min_pq,k_const";
  if (trim(line) != expect)
    throw std::invalid_argument("bounds: unexpected header, want: " + expect);

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_on(line, ',');
    std::string label = f.empty() ? "" : trim(f[0]);
    double n_d = cell(f, 1);
    if (std::isnan(n_d) || n_d < 1.0)
      throw std::invalid_argument("bounds: line " + std::to_string(lineno) +
                                  ": bad n");
    std::size_t n = static_cast<std::size_t>(n_d);
    double delta = cell(f, 2);
    if (std::isnan(delta)) delta = cfg.delta;
    double d2 = cell(f, 3);
    double d0 = cell(f, 4);
    double alpha = cell(f, 5);
    double beta = cell(f, 6);
    double x_mahal = cell(f, 7);
    double rank_c = cell(f, 8);
    double train_loss = cell(f, 9);
    double train_loss_sym = cell(f, 10);
    double alpha_sym = cell(f, 11);
    double min_pq = cell(f, 12);
    double k_const = cell(f, 13);
    if (std::isnan(k_const)) k_const = cfg.k_const;

    auto have = [](std::initializer_list<double> xs) {
      for (double x : xs)
        if (std::isnan(x)) return false;
      return true;
    };

    std::printf("row %s: n=%zu delta=%s\n", label.c_str(), n,
                num(delta).c_str());
    std::printf("  completion:                 %s\n",
                bound_or_reason([&]() -> double {
                  if (!have({train_loss, alpha, d2})) return kNan;
                  return sensing::gen_bound_mc(train_loss, alpha, (int)d2, n,
                                               delta);
                }).c_str());
    std::printf("  completion-optimistic:      %s\n",
                bound_or_reason([&]() -> double {
                  if (!have({alpha, d2})) return kNan;
                  return sensing::gen_bound_optimistic(alpha, (int)d2, n,
                                                       delta, k_const);
                }).c_str());
    std::printf("  rademacher:                 %s\n",
                bound_or_reason([&]() -> double {
                  if (!have({alpha, beta, x_mahal})) return kNan;
                  return relunet::rademacher_bound(alpha, beta, x_mahal, n);
                }).c_str());
    std::printf("  rademacher-expected:        %s\n",
                bound_or_reason([&]() -> double {
                  if (!have({alpha, beta, rank_c})) return kNan;
                  return relunet::rademacher_bound_expected(alpha, beta,
                                                            (int)rank_c, n);
                }).c_str());
    std::printf("  regression:                 %s\n",
                bound_or_reason([&]() -> double {
                  if (!have({train_loss, alpha, beta, x_mahal})) return kNan;
                  return relunet::gen_bound_regression(train_loss, alpha, beta,
                                                       x_mahal, n, delta);
                }).c_str());
    std::printf("  regression-symmetrized:     %s\n",
                bound_or_reason([&]() -> double {
                  if (!have({train_loss_sym, alpha_sym, x_mahal})) return kNan;
                  return relunet::gen_bound_symmetrized(
                      train_loss_sym, alpha_sym, x_mahal, n, delta);
                }).c_str());
    std::printf("  classification:             %s\n",
                bound_or_reason([&]() -> double {
                  if (!have({train_loss, alpha, beta, x_mahal})) return kNan;
                  return relunet::gen_bound_classification(
                      train_loss, alpha, beta, x_mahal, n, delta, false);
                }).c_str());
    std::printf("  classification-symmetrized: %s\n",
                bound_or_reason([&]() -> double {
                  if (!have({train_loss_sym, alpha_sym, x_mahal})) return kNan;
                  return relunet::gen_bound_classification(
                      train_loss_sym, alpha_sym, 1.0, x_mahal, n, delta,
                      true);
                }).c_str());
    if (!std::isnan(min_pq) && !std::isnan(d2) && !std::isnan(d0)) {
      double needed = std::log(d2) / (n * std::sqrt(d2 * d0));
      if (min_pq < needed)
        std::printf(
            "  flag: indicator sampling precondition violated "
            "(min p*q = %s < %s)\n",
            num(min_pq).c_str(), num(needed).c_str());
    }
  }
  return 0;
}

namespace {

// One subcommand's parsed values plus which options the user actually set.
// Precedence is CLI > config file > task defaults, so each option records an
// applier that fires only when its count() is positive.
struct SubSpec {
  CLI::App* sub = nullptr;
  std::string task;
  std::string config_path;
  CLI::Option* config_opt = nullptr;
  RunConfig vals;
  std::vector<std::pair<CLI::Option*,
                        std::function<void(RunConfig&, const RunConfig&)>>>
      appliers;

  void bind(CLI::Option* o,
            std::function<void(RunConfig&, const RunConfig&)> fn) {
    appliers.emplace_back(o, std::move(fn));
  }
};

void register_train_options(SubSpec& s) {
  CLI::App* sub = s.sub;
  s.config_opt =
      sub->add_option("--config", s.config_path, "key=value config file");
  s.bind(sub->add_option("--seed", s.vals.seeds, "RNG seed (repeatable)"),
         [](RunConfig& c, const RunConfig& v) { c.seeds = v.seeds; });
  s.bind(sub->add_option("--rate", s.vals.rates,
                         "dropout rate in [0,1) (repeatable)"),
         [](RunConfig& c, const RunConfig& v) { c.rates = v.rates; });
  s.bind(sub->add_option("--width", s.vals.width, "factor / hidden width"),
         [](RunConfig& c, const RunConfig& v) { c.width = v.width; });
  s.bind(sub->add_option("--lr", s.vals.lr, "SGD step size"),
         [](RunConfig& c, const RunConfig& v) { c.lr = v.lr; });
  s.bind(sub->add_option("--batch", s.vals.batch, "minibatch size"),
         [](RunConfig& c, const RunConfig& v) { c.batch = v.batch; });
  s.bind(sub->add_option("--epochs", s.vals.epochs, "training epochs"),
         [](RunConfig& c, const RunConfig& v) { c.epochs = v.epochs; });
  s.bind(sub->add_option("--mode", s.vals.mode,
                         "mask (sampled dropout) or penalty (explicit)"),
         [](RunConfig& c, const RunConfig& v) { c.mode = v.mode; });
  s.bind(sub->add_option("--out", s.vals.out, "output CSV path"),
         [](RunConfig& c, const RunConfig& v) { c.out = v.out; });
  s.bind(sub->add_option("--data", s.vals.data, "dataset kind"),
         [](RunConfig& c, const RunConfig& v) { c.data = v.data; });
}

void register_mc_options(SubSpec& s) {
  CLI::App* sub = s.sub;
  s.bind(sub->add_option("--d2", s.vals.d2, "target rows"),
         [](RunConfig& c, const RunConfig& v) { c.d2 = v.d2; });
  s.bind(sub->add_option("--d0", s.vals.d0, "target cols"),
         [](RunConfig& c, const RunConfig& v) { c.d0 = v.d0; });
  s.bind(sub->add_option("--rank", s.vals.rank, "planted rank"),
         [](RunConfig& c, const RunConfig& v) { c.rank = v.rank; });
  s.bind(sub->add_option("--observe-frac", s.vals.observe_frac,
                         "fraction of entries observed"),
         [](RunConfig& c, const RunConfig& v) {
           c.observe_frac = v.observe_frac;
         });
  s.bind(sub->add_flag("--normalize,!--no-normalize", s.vals.normalize,
                       "scale planted matrix to unit spectral norm"),
         [](RunConfig& c, const RunConfig& v) { c.normalize = v.normalize; });
  s.bind(sub->add_option("--noise-std", s.vals.noise_std,
                         "train-label observation noise (synthetic)"),
         [](RunConfig& c, const RunConfig& v) { c.noise_std = v.noise_std; });
  s.bind(sub->add_option("--movielens", s.vals.movielens,
                         "ratings file, :: separated"),
         [](RunConfig& c, const RunConfig& v) { c.movielens = v.movielens; });
  s.bind(sub->add_flag("--center,!--no-center", s.vals.center,
                       "subtract global mean rating"),
         [](RunConfig& c, const RunConfig& v) { c.center = v.center; });
  s.bind(sub->add_option("--test-frac", s.vals.test_frac,
                         "held-out fraction for ratings data"),
         [](RunConfig& c, const RunConfig& v) { c.test_frac = v.test_frac; });
}

void register_relu_options(SubSpec& s) {
  CLI::App* sub = s.sub;
  s.bind(sub->add_flag("--symmetrize", s.vals.symmetrize,
                       "random sign flip applied to inputs"),
         [](RunConfig& c, const RunConfig& v) {
           c.symmetrize = v.symmetrize;
         });
  s.bind(sub->add_option("--input-dim", s.vals.input_dim, "input dimension"),
         [](RunConfig& c, const RunConfig& v) { c.input_dim = v.input_dim; });
  s.bind(sub->add_option("--teacher-width", s.vals.teacher_width,
                         "planted teacher width"),
         [](RunConfig& c, const RunConfig& v) {
           c.teacher_width = v.teacher_width;
         });
  s.bind(sub->add_option("--n-train", s.vals.n_train, "training samples"),
         [](RunConfig& c, const RunConfig& v) { c.n_train = v.n_train; });
  s.bind(sub->add_option("--n-test", s.vals.n_test, "test samples"),
         [](RunConfig& c, const RunConfig& v) { c.n_test = v.n_test; });
  s.bind(sub->add_option("--noise-std", s.vals.noise_std,
                         "label noise stddev"),
         [](RunConfig& c, const RunConfig& v) { c.noise_std = v.noise_std; });
  s.bind(sub->add_option("--input-dist", s.vals.input_dist,
                         "gaussian or folded"),
         [](RunConfig& c, const RunConfig& v) {
           c.input_dist = v.input_dist;
         });
  s.bind(sub->add_option("--train-images", s.vals.train_images,
                         "idx image file, training split"),
         [](RunConfig& c, const RunConfig& v) {
           c.train_images = v.train_images;
         });
  s.bind(sub->add_option("--train-labels", s.vals.train_labels,
                         "idx label file, training split"),
         [](RunConfig& c, const RunConfig& v) {
           c.train_labels = v.train_labels;
         });
  s.bind(sub->add_option("--test-images", s.vals.test_images,
                         "idx image file, test split"),
         [](RunConfig& c, const RunConfig& v) {
           c.test_images = v.test_images;
         });
  s.bind(sub->add_option("--test-labels", s.vals.test_labels,
                         "idx label file, test split"),
         [](RunConfig& c, const RunConfig& v) {
           c.test_labels = v.test_labels;
         });
  s.bind(sub->add_option("--class-a", s.vals.class_a, "label mapped to -1"),
         [](RunConfig& c, const RunConfig& v) { c.class_a = v.class_a; });
  s.bind(sub->add_option("--class-b", s.vals.class_b, "label mapped to +1"),
         [](RunConfig& c, const RunConfig& v) { c.class_b = v.class_b; });
  s.bind(sub->add_option("--beta-dirs", s.vals.beta_dirs,
                         "extra random directions for the shrinkage ratio"),
         [](RunConfig& c, const RunConfig& v) { c.beta_dirs = v.beta_dirs; });
}

RunConfig resolve_config(SubSpec& s) {
  RunConfig cfg = default_config(s.task);
  if (s.config_opt != nullptr && s.config_opt->count() > 0)
    apply_config_file(cfg, s.config_path);
  for (auto& [opt, fn] : s.appliers)
    if (opt->count() > 0) fn(cfg, s.vals);
  validate_config(cfg);
  return cfg;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"dropout regularization workbench for factored models"};
  app.require_subcommand(1);

  SubSpec mc;
  mc.task = "mc";
  mc.sub = app.add_subcommand("mc-train",
                              "train factored matrix models with dropout");
  register_train_options(mc);
  register_mc_options(mc);

  SubSpec relu;
  relu.task = "relu";
  relu.sub = app.add_subcommand("relu-train",
                                "train two-layer relu nets with dropout");
  register_train_options(relu);
  register_relu_options(relu);

  SubSpec audit;
  audit.task = "none";
  audit.sub = app.add_subcommand(
      "audit", "cross-check closed forms against Monte-Carlo oracles");
  audit.config_opt = audit.sub->add_option("--config", audit.config_path,
                                           "key=value config file");
  audit.bind(
      audit.sub->add_option("--seed", audit.vals.seeds, "base audit seed"),
      [](RunConfig& c, const RunConfig& v) { c.seeds = v.seeds; });
  bool inject_bug = false;
  audit.sub->add_flag("--inject-bug", inject_bug,
                      "perturb the penalty weight to prove the audit bites");

  SubSpec bounds;
  bounds.task = "none";
  bounds.sub = app.add_subcommand(
      "bounds", "evaluate generalization bounds from a quantities CSV");
  bounds.config_opt = bounds.sub->add_option("--config", bounds.config_path,
                                             "key=value config file");
  bounds.bind(bounds.sub->add_option("--quantities", bounds.vals.quantities,
                                     "input CSV of measured quantities"),
              [](RunConfig& c, const RunConfig& v) {
                c.quantities = v.quantities;
              });
  bounds.bind(bounds.sub->add_option("--delta", bounds.vals.delta,
                                     "confidence parameter"),
              [](RunConfig& c, const RunConfig& v) { c.delta = v.delta; });
  bounds.bind(bounds.sub->add_option("--k-const", bounds.vals.k_const,
                                     "constant in the optimistic-rate bound"),
              [](RunConfig& c, const RunConfig& v) {
                c.k_const = v.k_const;
              });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (mc.sub->parsed()) return cmd_mc_train(resolve_config(mc));
    if (relu.sub->parsed()) return cmd_relu_train(resolve_config(relu));
    if (audit.sub->parsed())
      return cmd_audit(resolve_config(audit), inject_bug);
    if (bounds.sub->parsed()) return cmd_bounds(resolve_config(bounds));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

}  // namespace dropcap::cli
