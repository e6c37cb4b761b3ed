#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dropcap {

// One CSV row of per-epoch metrics.  Columns (in order):
// run_id,epoch,dropout_rate,width,train_loss,test_loss,gap,reg_value,
// alpha_hat,beta_hat,phi,seed
struct ExperimentRecord {
  std::string run_id;
  int epoch = 0;
  double dropout_rate = 0.0;
  int width = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double gap = 0.0;
  double reg_value = 0.0;
  double alpha_hat = 0.0;
  double beta_hat = 0.0;
  double phi = 0.0;
  std::uint64_t seed = 0;
};

// Writes header plus one row per record; floats carry 17 significant digits
// so a read-back round-trips exactly.
void write_records(const std::vector<ExperimentRecord>& records,
                   const std::string& path);

std::vector<ExperimentRecord> read_records(const std::string& path);

}  // namespace dropcap
