#pragma once

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "chiralwg/chiral_device.hpp"
#include "chiralwg/mode_fields.hpp"
#include "json.hpp"

namespace testsupport {

// Default nanobeam, solved once per process.
inline const chiralwg::GuidedMode& default_mode() {
  static const chiralwg::GuidedMode m = [] {
    chiralwg::CrossSection cs;
    return chiralwg::longitudinal_field(chiralwg::solve_modes(cs, 940.0, 1).front());
  }();
  return m;
}

inline std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline nlohmann::json fixture(const std::string& name) {
  return nlohmann::json::parse(slurp(std::string(CHIRALWG_FIXTURES) + "/" + name));
}

// Fundamental TE root of a symmetric slab of width d (field parallel to the
// interfaces), by bisection on tan(kappa d/2) = gamma / kappa.
inline double slab_te_root(double d_nm, double n1, double n2, double lambda_nm) {
  const double k0 = 2.0 * M_PI / lambda_nm;
  auto f = [&](double n) {
    const double ka = k0 * std::sqrt(n1 * n1 - n * n);
    const double ga = k0 * std::sqrt(n * n - n2 * n2);
    return std::tan(ka * d_nm / 2.0) - ga / ka;
  };
  double lo = std::sqrt(std::max(n2 * n2, n1 * n1 - std::pow(M_PI / (k0 * d_nm), 2))) + 1e-13;
  double hi = n1 - 1e-13;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline chiralwg::CrossSection slab_section(double pitch_y_nm) {
  chiralwg::CrossSection cs;
  cs.core_width_nm = 400.0;
  cs.core_height_nm = 20000.0;
  cs.padding_nm = 400.0;
  cs.grid_ny = static_cast<int>(std::lround((cs.core_width_nm + 2 * cs.padding_nm) / pitch_y_nm));
  cs.grid_nz = static_cast<int>(std::lround((cs.core_height_nm + 2 * cs.padding_nm) / 200.0));
  return cs;
}

}  // namespace testsupport
