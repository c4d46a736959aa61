#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "coop/sim.hpp"

namespace coop {

/// Fixed column order: t, s_norm, rot_err, x_err_x, x_err_y, x_err_z, V,
/// then o_err_norm_i and r_err_norm_i for each agent i.
inline std::vector<std::string> csv_columns(int agents) {
  std::vector<std::string> cols = {"t", "s_norm", "rot_err", "x_err_x", "x_err_y", "x_err_z", "V"};
  for (int i = 0; i < agents; ++i) cols.push_back("o_err_norm_" + std::to_string(i));
  for (int i = 0; i < agents; ++i) cols.push_back("r_err_norm_" + std::to_string(i));
  return cols;
}

/// 17 significant digits, so every value round-trips exactly.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string to_csv(const SimRecord& rec) {
  std::string out;
  const auto cols = csv_columns(rec.agent_count);
  for (std::size_t k = 0; k < cols.size(); ++k) out += (k ? "," : "") + cols[k];
  out += '\n';
  for (std::size_t r = 0; r < rec.t.size(); ++r) {
    std::vector<double> row = {rec.t[r], rec.s_norm[r], rec.rot_err[r], rec.x_err[r](0),
                               rec.x_err[r](1), rec.x_err[r](2), rec.v[r]};
    row.insert(row.end(), rec.o_err_norm[r].begin(), rec.o_err_norm[r].end());
    row.insert(row.end(), rec.r_err_norm[r].begin(), rec.r_err_norm[r].end());
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out += ',';
      out += format_double(row[k]);
    }
    out += '\n';
  }
  return out;
}

inline void write_csv(const SimRecord& rec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << to_csv(rec);
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace coop
