#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "race/aoi_metrics.hpp"
#include "race/errors.hpp"
#include "race/simulation.hpp"

namespace race {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Per-round columns: episode, t, delta_0..delta_{N-1}, theta_0..theta_{N-1},
// phi_0..phi_{K-1} (device index or -1), delta_max, reward_0..reward_{K-1},
// objective_cum, accuracy.
inline std::string round_csv_header(std::size_t devices, int agents) {
  std::string h = "episode,t";
  for (std::size_t i = 0; i < devices; ++i) h += ",delta_" + std::to_string(i);
  for (std::size_t i = 0; i < devices; ++i) h += ",theta_" + std::to_string(i);
  for (int k = 0; k < agents; ++k) h += ",phi_" + std::to_string(k);
  h += ",delta_max";
  for (int k = 0; k < agents; ++k) h += ",reward_" + std::to_string(k);
  h += ",objective_cum,accuracy";
  return h;
}

inline std::string round_csv_row(const RoundLedger& l) {
  std::string r = std::to_string(l.episode) + "," + std::to_string(l.round);
  for (double v : l.aoi) r += "," + fmt17(v);
  for (double v : l.theta) r += "," + fmt17(v);
  for (int d : l.assignment) r += "," + std::to_string(d);
  r += "," + fmt17(l.round_delay);
  for (double v : l.reward) r += "," + fmt17(v);
  r += "," + fmt17(l.objective_cum) + "," + fmt17(l.accuracy);
  return r;
}

inline std::string summary_csv_header() {
  return "policy,episode,seed,sum_aoi,objective,mean_reward,final_flmd,final_accuracy";
}

inline std::string summary_csv_row(const std::string& policy, const EpisodeSummary& s) {
  return policy + "," + std::to_string(s.episode) + "," + std::to_string(s.seed) + "," +
         fmt17(s.sum_aoi) + "," + fmt17(s.objective) + "," + fmt17(s.mean_reward) + "," +
         fmt17(s.final_flmd) + "," + fmt17(s.final_accuracy);
}

class CsvFile {
 public:
  CsvFile() = default;
  CsvFile(const std::string& path, const std::string& header) { open(path, header); }

  void open(const std::string& path, const std::string& header) {
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error("cannot write " + path);
    path_ = path;
    line(header);
  }
  bool is_open() const { return out_.is_open(); }
  void line(const std::string& s) {
    out_ << s << '\n';
    if (!out_) throw Error("write failed for " + path_);
  }
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  std::string path_;
};

}  // namespace race
