#include "dropcap/records.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dropcap {
namespace {

const char* kHeader =
    "run_id,epoch,dropout_rate,width,train_loss,test_loss,gap,reg_value,"
    "alpha_hat,beta_hat,phi,seed";

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

// stod rejects subnormals (ERANGE), which %.17g happily produces; from_chars
// round-trips the full double range including nan and inf
double parse_double(const std::string& s, std::size_t lineno) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc::invalid_argument || ptr != s.data() + s.size())
    throw std::runtime_error("read_records: bad number '" + s + "' at line " +
                             std::to_string(lineno));
  return v;
}

}  // namespace

void write_records(const std::vector<ExperimentRecord>& records,
                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_records: cannot open " + path);
  out << kHeader << "\n";
  for (const auto& r : records) {
    if (r.run_id.find(',') != std::string::npos)
      throw std::invalid_argument("write_records: run_id contains a comma");
    out << r.run_id << ',' << r.epoch << ',' << fmt(r.dropout_rate) << ','
        << r.width << ',' << fmt(r.train_loss) << ',' << fmt(r.test_loss)
        << ',' << fmt(r.gap) << ',' << fmt(r.reg_value) << ','
        << fmt(r.alpha_hat) << ',' << fmt(r.beta_hat) << ',' << fmt(r.phi)
        << ',' << r.seed << "\n";
  }
  if (!out) throw std::runtime_error("write_records: write failed on " + path);
}

std::vector<ExperimentRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_records: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("read_records: empty file " + path);
  if (line != kHeader)
    throw std::runtime_error("read_records: unexpected header in " + path);
  std::vector<ExperimentRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_line(line);
    if (f.size() != 12)
      throw std::runtime_error("read_records: bad field count at line " +
                               std::to_string(lineno));
    ExperimentRecord r;
    r.run_id = f[0];
    r.epoch = std::stoi(f[1]);
    r.dropout_rate = parse_double(f[2], lineno);
    r.width = std::stoi(f[3]);
    r.train_loss = parse_double(f[4], lineno);
    r.test_loss = parse_double(f[5], lineno);
    r.gap = parse_double(f[6], lineno);
    r.reg_value = parse_double(f[7], lineno);
    r.alpha_hat = parse_double(f[8], lineno);
    r.beta_hat = parse_double(f[9], lineno);
    r.phi = parse_double(f[10], lineno);
    r.seed = std::stoull(f[11]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace dropcap
