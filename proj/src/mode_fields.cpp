#include "chiralwg/mode_fields.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "chiralwg/errors.hpp"

namespace chiralwg {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kAlignTol = 1e-9;

int aligned_cells(double length, double pitch, const char* what) {
  const double cells = length / pitch;
  const double rounded = std::round(cells);
  if (std::abs(cells - rounded) > kAlignTol * std::max(1.0, cells)) {
    std::ostringstream os;
    os << what << " (" << length << " nm) is not a whole number of " << pitch << " nm cells";
    throw InvalidConfig(os.str());
  }
  return static_cast<int>(rounded);
}

SpMat identity(int n) {
  SpMat m(n, n);
  m.setIdentity();
  return m;
}

// Forward difference from the n-1 interior nodes to the n half points.
// Boundary node values are zero (PEC for the tangential component).
SpMat forward_diff(int n, double h) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * n);
  for (int k = 0; k < n; ++k) {
    if (k <= n - 2) t.emplace_back(k, k, 1.0 / h);
    if (k >= 1) t.emplace_back(k, k - 1, -1.0 / h);
  }
  SpMat m(n, n - 1);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

SpMat diag(const VectorXd& v) {
  SpMat m(v.size(), v.size());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) t.emplace_back(i, i, v[i]);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

SpMat kron(const SpMat& a, const SpMat& b) {
  SpMat out = Eigen::kroneckerProduct(a, b).eval();
  out.makeCompressed();
  return out;
}

// Sample permittivities of the three staggered lattices.
struct StaggeredPermittivity {
  VectorXd eps_y;  // Y lattice: i in [0, ny), j in [1, nz-1]
  VectorXd eps_z;  // Z lattice: i in [1, ny-1], j in [0, nz)
  VectorXd eps_x;  // N lattice: i in [1, ny-1], j in [1, nz-1]
};

StaggeredPermittivity staggered_permittivity(const CrossSection& cs) {
  const RealGrid cells = cell_permittivity(cs);
  const int ny = cs.grid_ny;
  const int nz = cs.grid_nz;
  StaggeredPermittivity s;
  s.eps_y.resize(static_cast<Eigen::Index>(ny) * (nz - 1));
  s.eps_z.resize(static_cast<Eigen::Index>(ny - 1) * nz);
  s.eps_x.resize(static_cast<Eigen::Index>(ny - 1) * (nz - 1));
  for (int i = 0; i < ny; ++i)
    for (int j = 1; j < nz; ++j)
      s.eps_y[i * (nz - 1) + (j - 1)] = 0.5 * (cells(i, j - 1) + cells(i, j));
  for (int i = 1; i < ny; ++i)
    for (int j = 0; j < nz; ++j) s.eps_z[(i - 1) * nz + j] = 0.5 * (cells(i - 1, j) + cells(i, j));
  for (int i = 1; i < ny; ++i)
    for (int j = 1; j < nz; ++j)
      s.eps_x[(i - 1) * (nz - 1) + (j - 1)] =
          0.25 * (cells(i - 1, j - 1) + cells(i, j - 1) + cells(i - 1, j) + cells(i, j));
  return s;
}

// Transverse operator A (scaled by 1/k0^2) acting on [E_y; E_z];
// eigenvalues are n_eff^2.
SpMat assemble_operator(const CrossSection& cs, double wavelength_nm) {
  const double k0 = 2.0 * std::numbers::pi / wavelength_nm;
  const double hy = cs.pitch_y_nm() * k0;
  const double hz = cs.pitch_z_nm() * k0;
  const int ny = cs.grid_ny;
  const int nz = cs.grid_nz;

  const SpMat dfy = forward_diff(ny, hy);
  const SpMat dfz = forward_diff(nz, hz);
  const SpMat dby = SpMat(-SpMat(dfy.transpose()));
  const SpMat dbz = SpMat(-SpMat(dfz.transpose()));

  const SpMat ay_ny = kron(dfy, identity(nz - 1));  // N -> Y
  const SpMat ay_zc = kron(dfy, identity(nz));      // Z -> C
  const SpMat az_nz = kron(identity(ny - 1), dfz);  // N -> Z
  const SpMat az_yc = kron(identity(ny), dfz);      // Y -> C
  const SpMat by_yn = kron(dby, identity(nz - 1));  // Y -> N
  const SpMat by_cz = kron(dby, identity(nz));      // C -> Z
  const SpMat bz_zn = kron(identity(ny - 1), dbz);  // Z -> N
  const SpMat bz_cy = kron(identity(ny), dbz);      // C -> Y

  const StaggeredPermittivity p = staggered_permittivity(cs);
  const SpMat ey = diag(p.eps_y);
  const SpMat ez = diag(p.eps_z);
  const SpMat inv_ex = diag(p.eps_x.cwiseInverse());

  const SpMat div_y = inv_ex * by_yn * ey;  // Y -> N
  const SpMat div_z = inv_ex * bz_zn * ez;  // Z -> N

  const SpMat a_yy = ey + bz_cy * az_yc + ay_ny * div_y;
  const SpMat a_yz = ay_ny * div_z - bz_cy * ay_zc;
  const SpMat a_zy = az_nz * div_y - by_cz * az_yc;
  const SpMat a_zz = ez + by_cz * ay_zc + az_nz * div_z;

  const Eigen::Index n_y = a_yy.rows();
  const Eigen::Index n_z = a_zz.rows();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(a_yy.nonZeros() + a_yz.nonZeros() + a_zy.nonZeros() + a_zz.nonZeros());
  auto append = [&t](const SpMat& m, Eigen::Index r0, Eigen::Index c0) {
    for (int k = 0; k < m.outerSize(); ++k)
      for (SpMat::InnerIterator it(m, k); it; ++it) t.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
  };
  append(a_yy, 0, 0);
  append(a_yz, 0, n_y);
  append(a_zy, n_y, 0);
  append(a_zz, n_y, n_y);
  SpMat a(n_y + n_z, n_y + n_z);
  a.setFromTriplets(t.begin(), t.end());
  a.makeCompressed();
  return a;
}

// Deterministic start block: eps-weighted box envelopes times low-order
// polynomials, alternating between E_y and E_z.
MatrixXd start_block(const CrossSection& cs, int block) {
  const int ny = cs.grid_ny;
  const int nz = cs.grid_nz;
  const double hy = cs.pitch_y_nm();
  const double hz = cs.pitch_z_nm();
  const double ly = cs.box_width_nm();
  const double lz = cs.box_height_nm();
  const double y0 = -0.5 * ly;
  const double z0 = -0.5 * lz;
  const double sy = 0.5 * cs.core_width_nm;
  const double sz = 0.5 * cs.core_height_nm;
  const StaggeredPermittivity p = staggered_permittivity(cs);
  const Eigen::Index n_y = static_cast<Eigen::Index>(ny) * (nz - 1);
  const Eigen::Index n_z = static_cast<Eigen::Index>(ny - 1) * nz;

  static constexpr int kPowers[][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2},
                                       {2, 1}, {1, 2}, {3, 0}, {0, 3}, {2, 2}, {3, 1}};
  constexpr int kNumPowers = static_cast<int>(sizeof(kPowers) / sizeof(kPowers[0]));

  MatrixXd v = MatrixXd::Zero(n_y + n_z, block);
  for (int c = 0; c < block; ++c) {
    const bool on_ez = (c % 2) == 1;
    const int* pw = kPowers[(c / 2) % kNumPowers];
    auto value = [&](double y, double z, double eps) {
      const double env = std::sin(std::numbers::pi * (y - y0) / ly) * std::sin(std::numbers::pi * (z - z0) / lz);
      return eps * env * std::pow(y / sy, pw[0]) * std::pow(z / sz, pw[1]);
    };
    if (!on_ez) {
      for (int i = 0; i < ny; ++i)
        for (int j = 1; j < nz; ++j) {
          const Eigen::Index k = i * (nz - 1) + (j - 1);
          v(k, c) = value(y0 + (i + 0.5) * hy, z0 + j * hz, p.eps_y[k]);
        }
    } else {
      for (int i = 1; i < ny; ++i)
        for (int j = 0; j < nz; ++j) {
          const Eigen::Index k = (i - 1) * nz + j;
          v(n_y + k, c) = value(y0 + i * hy, z0 + (j + 0.5) * hz, p.eps_z[k]);
        }
    }
    v.col(c).normalize();
  }
  return v;
}

MatrixXd orthonormalize(const MatrixXd& w) {
  Eigen::HouseholderQR<MatrixXd> qr(w);
  return qr.householderQ() * MatrixXd::Identity(w.rows(), w.cols());
}

struct RitzResult {
  MatrixXd vectors;
  VectorXd values;
  VectorXd residuals;
};

RitzResult rayleigh_ritz(const SpMat& a, const MatrixXd& q) {
  const MatrixXd aq = a * q;
  const MatrixXd h = q.transpose() * aq;
  Eigen::EigenSolver<MatrixXd> es(h);
  const Eigen::Index p = h.rows();
  std::vector<Eigen::Index> order(p);
  for (Eigen::Index i = 0; i < p; ++i) order[i] = i;
  const VectorXd re = es.eigenvalues().real();
  std::stable_sort(order.begin(), order.end(), [&re](Eigen::Index l, Eigen::Index r) { return re[l] > re[r]; });
  MatrixXd y(p, p);
  RitzResult out;
  out.values.resize(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    y.col(k) = es.eigenvectors().col(order[k]).real();
    if (y.col(k).norm() == 0.0) y.col(k) = es.eigenvectors().col(order[k]).imag();
    y.col(k).normalize();
    out.values[k] = re[order[k]];
  }
  out.vectors = q * y;
  const MatrixXd av = aq * y;
  out.residuals.resize(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double nv = out.vectors.col(k).norm();
    out.vectors.col(k) /= nv;
    out.residuals[k] = (av.col(k) / nv - out.values[k] * out.vectors.col(k)).norm();
  }
  return out;
}

void factorize(Eigen::SparseLU<SpMat>& lu, const SpMat& a, double shift) {
  SpMat shifted = a;
  for (Eigen::Index i = 0; i < shifted.rows(); ++i) shifted.coeffRef(i, i) -= shift;
  shifted.makeCompressed();
  lu.compute(shifted);
  if (lu.info() != Eigen::Success) throw EigenSolverFailure("sparse LU factorisation failed: " + lu.lastErrorMessage());
}

GuidedMode unpack_mode(const CrossSection& cs, double wavelength_nm, double n_eff2, const VectorXd& v,
                       double residual) {
  const int ny = cs.grid_ny;
  const int nz = cs.grid_nz;
  const Eigen::Index n_y = static_cast<Eigen::Index>(ny) * (nz - 1);
  GuidedMode m;
  m.section = cs;
  m.wavelength_nm = wavelength_nm;
  m.n_eff = std::sqrt(n_eff2);
  m.eigen_residual = residual;
  m.ey = ComplexGrid(ny, nz + 1);
  m.ez = ComplexGrid(ny + 1, nz);
  for (int i = 0; i < ny; ++i)
    for (int j = 1; j < nz; ++j) m.ey(i, j) = v[i * (nz - 1) + (j - 1)];
  for (int i = 1; i < ny; ++i)
    for (int j = 0; j < nz; ++j) m.ez(i, j) = v[n_y + (i - 1) * nz + j];
  return m;
}

}  // namespace

int CrossSection::core_cells_y() const { return static_cast<int>(std::round(core_width_nm / pitch_y_nm())); }
int CrossSection::core_cells_z() const { return static_cast<int>(std::round(core_height_nm / pitch_z_nm())); }

void CrossSection::validate() const {
  if (!(clad_index >= 1.0)) throw InvalidConfig("clad_index must be >= 1");
  if (!(core_index > clad_index)) {
    // A homogeneous box (core_index == clad_index) is allowed for solver checks.
    if (core_index != clad_index) throw InvalidConfig("core_index must exceed clad_index");
  }
  if (!(core_width_nm > 0.0) || !(core_height_nm > 0.0)) throw InvalidConfig("core dimensions must be positive");
  if (grid_ny < 2 || grid_nz < 2) throw InvalidConfig("grid needs at least 2 cells per axis");
  if (!(padding_nm >= core_width_nm)) throw InvalidConfig("padding_nm must be at least core_width_nm");
  const double hy = pitch_y_nm();
  const double hz = pitch_z_nm();
  const int cy = aligned_cells(core_width_nm, hy, "core_width_nm");
  const int cz = aligned_cells(core_height_nm, hz, "core_height_nm");
  aligned_cells(padding_nm, hy, "padding_nm along y");
  aligned_cells(padding_nm, hz, "padding_nm along z");
  if (cy < 8 || cz < 8) {
    std::ostringstream os;
    os << "core spans " << cy << " x " << cz << " cells; at least 8 are needed in each direction";
    throw GridTooCoarse(os.str());
  }
}

CrossSection CrossSection::refined(int factor) const {
  CrossSection out = *this;
  out.grid_ny *= factor;
  out.grid_nz *= factor;
  return out;
}

RealGrid cell_permittivity(const CrossSection& cs) {
  const int ny = cs.grid_ny;
  const int nz = cs.grid_nz;
  const double hy = cs.pitch_y_nm();
  const double hz = cs.pitch_z_nm();
  const double y0 = -0.5 * cs.box_width_nm();
  const double z0 = -0.5 * cs.box_height_nm();
  const double core = cs.core_index * cs.core_index;
  const double clad = cs.clad_index * cs.clad_index;
  RealGrid eps(ny, nz, clad);
  for (int i = 0; i < ny; ++i) {
    const double y = y0 + (i + 0.5) * hy;
    if (std::abs(y) >= 0.5 * cs.core_width_nm) continue;
    for (int j = 0; j < nz; ++j) {
      const double z = z0 + (j + 0.5) * hz;
      if (std::abs(z) < 0.5 * cs.core_height_nm) eps(i, j) = core;
    }
  }
  return eps;
}

double GuidedMode::y_node(int i) const { return -0.5 * section.box_width_nm() + i * section.pitch_y_nm(); }
double GuidedMode::z_node(int j) const { return -0.5 * section.box_height_nm() + j * section.pitch_z_nm(); }

double GuidedMode::ey_fraction() const {
  double py = 0.0;
  double pz = 0.0;
  for (const auto& v : ey.data()) py += std::norm(v);
  for (const auto& v : ez.data()) pz += std::norm(v);
  return py + pz > 0.0 ? py / (py + pz) : 0.0;
}

GuidedMode GuidedMode::reversed() const {
  GuidedMode out = *this;
  out.direction = direction == Direction::forward ? Direction::backward : Direction::forward;
  for (auto& v : out.ex.data()) v = -v;
  return out;
}

std::vector<GuidedMode> solve_modes(const CrossSection& cs, double wavelength_nm, int n_modes,
                                    const SolverOptions& options) {
  cs.validate();
  if (!(wavelength_nm > 0.0)) throw InvalidConfig("wavelength must be positive");
  if (n_modes < 1) throw InvalidConfig("n_modes must be >= 1");

  const SpMat a = assemble_operator(cs, wavelength_nm);
  const int block = std::max(n_modes + 3, 4);
  const double scale = std::max(1.0, cs.core_index * cs.core_index);
  const double coarse_tol = 1e-7 * scale;

  double shift = std::pow(options.shift_fraction * cs.core_index, 2);
  Eigen::SparseLU<SpMat> lu;
  factorize(lu, a, shift);

  MatrixXd v = start_block(cs, block);
  RitzResult ritz;
  double last_checkpoint = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int it = 0; it < options.max_iterations; ++it) {
    const MatrixXd w = lu.solve(v);
    if (lu.info() != Eigen::Success) throw EigenSolverFailure("shift-invert solve failed");
    ritz = rayleigh_ritz(a, orthonormalize(w));
    v = ritz.vectors;
    const double worst = ritz.residuals.head(n_modes).maxCoeff();
    if (worst <= coarse_tol) {
      converged = true;
      break;
    }
    // Slow progress means the shift is too far from the top of the spectrum
    // compared with the spread of nearby eigenvalues. Step it down toward the
    // leading Ritz value while keeping it above that value.
    if ((it + 1) % 8 == 0) {
      const double r0 = ritz.residuals[0];
      if (r0 > 0.25 * last_checkpoint || it == 7) {
        const double target = ritz.values[0] + std::max(4.0 * r0, 0.25 * (shift - ritz.values[0]));
        if (target < shift && target > ritz.values[0]) {
          shift = target;
          factorize(lu, a, shift);
        }
      }
      last_checkpoint = r0;
    }
  }
  if (!converged) throw EigenSolverFailure("shift-invert subspace iteration did not converge");

  // Polish each wanted pair by inverse iteration at its own Ritz value.
  struct Found {
    double lambda;
    VectorXd vec;
    double residual;
  };
  std::vector<Found> found;
  for (int k = 0; k < n_modes; ++k) {
    double lambda = ritz.values[k];
    VectorXd x = ritz.vectors.col(k);
    double res = ritz.residuals[k];
    if (res > options.residual_tolerance) {
      Eigen::SparseLU<SpMat> polish;
      factorize(polish, a, lambda + 1e-9 * scale);
      for (int p = 0; p < 12 && res > 0.05 * options.residual_tolerance; ++p) {
        x = polish.solve(x);
        x.normalize();
        const VectorXd ax = a * x;
        lambda = x.dot(ax);
        res = (ax - lambda * x).norm();
      }
    }
    if (res > options.residual_tolerance) {
      std::ostringstream os;
      os << "mode " << k << " residual " << res << " exceeds tolerance " << options.residual_tolerance;
      throw EigenSolverFailure(os.str());
    }
    bool duplicate = false;
    for (const auto& f : found)
      if (std::abs(f.lambda - lambda) <= 1e-9 * scale && std::abs(f.vec.dot(x)) > 0.99) duplicate = true;
    if (!duplicate) found.push_back({lambda, x, res});
  }

  const double lo = cs.clad_index * cs.clad_index;
  const double hi = cs.core_index * cs.core_index;
  const bool homogeneous = cs.core_index == cs.clad_index;
  std::vector<GuidedMode> modes;
  for (const auto& f : found) {
    const bool guided = homogeneous ? (f.lambda > 0.0 && f.lambda <= hi) : (f.lambda > lo && f.lambda < hi);
    if (!guided) continue;
    GuidedMode m = unpack_mode(cs, wavelength_nm, f.lambda, f.vec, f.residual);
    fix_gauge(m);
    modes.push_back(std::move(m));
  }
  if (modes.empty()) {
    std::ostringstream os;
    os << "no eigenvalue in (" << lo << ", " << hi << ") among the " << n_modes << " leading modes";
    throw NoGuidedMode(os.str());
  }
  std::sort(modes.begin(), modes.end(), [](const GuidedMode& l, const GuidedMode& r) { return l.n_eff > r.n_eff; });
  return modes;
}

void fix_gauge(GuidedMode& mode) {
  cplx peak{0.0, 0.0};
  for (const auto& v : mode.ey.data())
    if (std::abs(v) > std::abs(peak)) peak = v;
  if (std::abs(peak) == 0.0) throw GaugeError("E_y vanishes everywhere; gauge is undefined");
  const cplx rot = std::conj(peak) / std::abs(peak) / std::abs(peak);
  for (auto& v : mode.ey.data()) v *= rot;
  for (auto& v : mode.ez.data()) v *= rot;
  mode.ex = ComplexGrid{};
  mode.gauge_note = "global phase rotated so the largest |E_y| sample is real and positive; max|E_y| = 1";
}

GuidedMode longitudinal_field(const GuidedMode& mode) {
  const CrossSection& cs = mode.section;
  const int ny = cs.grid_ny;
  const int nz = cs.grid_nz;
  double amp = 0.0;
  double imag = 0.0;
  for (const auto& v : mode.ey.data()) {
    amp = std::max(amp, std::abs(v));
    imag = std::max(imag, std::abs(v.imag()));
  }
  for (const auto& v : mode.ez.data()) {
    amp = std::max(amp, std::abs(v));
    imag = std::max(imag, std::abs(v.imag()));
  }
  if (amp == 0.0 || imag > 1e-12 * amp)
    throw GaugeError("transverse fields are not real in the fixed gauge; call fix_gauge first");

  const double k0 = 2.0 * std::numbers::pi / mode.wavelength_nm;
  const double hy = cs.pitch_y_nm() * k0;
  const double hz = cs.pitch_z_nm() * k0;
  const double beta = (mode.direction == Direction::forward ? 1.0 : -1.0) * mode.n_eff;
  const RealGrid cells = cell_permittivity(cs);
  auto eps_y = [&](int i, int j) { return 0.5 * (cells(i, j - 1) + cells(i, j)); };
  auto eps_z = [&](int i, int j) { return 0.5 * (cells(i - 1, j) + cells(i, j)); };

  GuidedMode out = mode;
  out.ex = ComplexGrid(ny + 1, nz + 1);
  for (int i = 1; i < ny; ++i) {
    for (int j = 1; j < nz; ++j) {
      const double eps_x = 0.25 * (cells(i - 1, j - 1) + cells(i, j - 1) + cells(i - 1, j) + cells(i, j));
      const double dy = (eps_y(i, j) * mode.ey(i, j).real() - eps_y(i - 1, j) * mode.ey(i - 1, j).real()) / hy;
      const double dz = (eps_z(i, j) * mode.ez(i, j).real() - eps_z(i, j - 1) * mode.ez(i, j - 1).real()) / hz;
      out.ex(i, j) = cplx(0.0, (dy + dz) / (beta * eps_x));
    }
  }
  return out;
}

namespace {

// Bilinear sample of a lattice with origin (y0, z0) and pitches (hy, hz);
// coordinates outside the sampled range clamp to the edge samples.
cplx bilinear(const ComplexGrid& g, double y0, double z0, double hy, double hz, double y, double z) {
  const double fy = std::clamp((y - y0) / hy, 0.0, static_cast<double>(g.ny() - 1));
  const double fz = std::clamp((z - z0) / hz, 0.0, static_cast<double>(g.nz() - 1));
  const int iy = std::min(static_cast<int>(std::floor(fy)), g.ny() - 2 < 0 ? 0 : g.ny() - 2);
  const int iz = std::min(static_cast<int>(std::floor(fz)), g.nz() - 2 < 0 ? 0 : g.nz() - 2);
  const double ty = fy - iy;
  const double tz = fz - iz;
  const int iy1 = std::min(iy + 1, g.ny() - 1);
  const int iz1 = std::min(iz + 1, g.nz() - 1);
  // Exact at samples: skip the zero-weight neighbours so no rounding creeps in.
  if (ty == 0.0 && tz == 0.0) return g(iy, iz);
  return (1.0 - ty) * (1.0 - tz) * g(iy, iz) + ty * (1.0 - tz) * g(iy1, iz) + (1.0 - ty) * tz * g(iy, iz1) +
         ty * tz * g(iy1, iz1);
}

}  // namespace

FieldTriple mode_at(const GuidedMode& mode, double y_nm, double z_nm) {
  const CrossSection& cs = mode.section;
  const double hy = cs.pitch_y_nm();
  const double hz = cs.pitch_z_nm();
  const double y0 = -0.5 * cs.box_width_nm();
  const double z0 = -0.5 * cs.box_height_nm();
  const double tol = 1e-9 * std::max(cs.box_width_nm(), cs.box_height_nm());
  if (y_nm < y0 - tol || y_nm > -y0 + tol || z_nm < z0 - tol || z_nm > -z0 + tol) {
    std::ostringstream os;
    os << "point (" << y_nm << ", " << z_nm << ") nm lies outside the computational box";
    throw OutOfBounds(os.str());
  }
  FieldTriple f{};
  f.ey = bilinear(mode.ey, y0 + 0.5 * hy, z0, hy, hz, y_nm, z_nm);
  f.ez = bilinear(mode.ez, y0, z0 + 0.5 * hz, hy, hz, y_nm, z_nm);
  f.ex = mode.has_longitudinal() ? bilinear(mode.ex, y0, z0, hy, hz, y_nm, z_nm) : cplx{};
  return f;
}

HelicityPoint stokes_s3(const FieldTriple& f) {
  const double den = std::norm(f.ex) + std::norm(f.ey);
  if (den < 1e-30) return {0.0, true};
  return {2.0 * std::imag(std::conj(f.ex) * f.ey) / den, false};
}

namespace {

// Least-squares quadratic over a 3x3 stencil, maximised along the centre row.
// Returns (offset in cells along y, fitted value).
std::pair<double, double> refine_on_row(const RealGrid& s, int i, int j) {
  // f = a + b*u + c*v + d*u^2 + e*v^2 + g*u*v on u, v in {-1, 0, 1}.
  Eigen::Matrix<double, 9, 6> m;
  Eigen::Matrix<double, 9, 1> rhs;
  int r = 0;
  for (int du = -1; du <= 1; ++du)
    for (int dv = -1; dv <= 1; ++dv) {
      m.row(r) << 1.0, du, dv, du * du, dv * dv, du * dv;
      rhs[r] = s(i + du, j + dv);
      ++r;
    }
  const Eigen::Matrix<double, 6, 1> c = m.colPivHouseholderQr().solve(rhs);
  const double b = c[1];
  const double d = c[3];
  if (d == 0.0) return {0.0, s(i, j)};
  const double u = std::clamp(-b / (2.0 * d), -1.0, 1.0);
  return {u, c[0] + b * u + d * u * u};
}

}  // namespace

HelicityMap helicity_map(const GuidedMode& mode, const HelicityOptions& options) {
  if (!mode.has_longitudinal()) throw GaugeError("helicity_map needs E_x; call longitudinal_field first");
  const CrossSection& cs = mode.section;
  const int ny = cs.grid_ny;
  const int nz = cs.grid_nz;
  HelicityMap map;
  map.y_nm.resize(ny + 1);
  map.z_nm.resize(nz + 1);
  for (int i = 0; i <= ny; ++i) map.y_nm[i] = mode.y_node(i);
  for (int j = 0; j <= nz; ++j) map.z_nm[j] = mode.z_node(j);
  map.s3 = RealGrid(ny + 1, nz + 1);
  map.degenerate = Grid2<unsigned char>(ny + 1, nz + 1, 0);
  for (int i = 0; i <= ny; ++i) {
    for (int j = 0; j <= nz; ++j) {
      // E_y at a node is the mean of its two y-neighbours, which is what
      // bilinear interpolation returns there.
      const cplx ey_left = i > 0 ? mode.ey(i - 1, j) : mode.ey(0, j);
      const cplx ey_right = i < ny ? mode.ey(i, j) : mode.ey(ny - 1, j);
      const FieldTriple f{mode.ex(i, j), 0.5 * (ey_left + ey_right), cplx{}};
      const HelicityPoint h = stokes_s3(f);
      map.s3(i, j) = h.value;
      map.degenerate(i, j) = h.degenerate ? 1 : 0;
      if (!h.degenerate && std::abs(h.value) <= options.eps_l) map.l_lines.emplace_back(i, j);
    }
  }

  int row = 0;
  for (int j = 1; j <= nz; ++j)
    if (std::abs(map.z_nm[j]) < std::abs(map.z_nm[row])) row = j;
  map.plane_row = row;

  if (row >= 1 && row < nz) {
    for (int i = 1; i < ny; ++i) {
      const double here = std::abs(map.s3(i, row));
      if (here < 1.0 - options.eps_c) continue;
      if (here < std::abs(map.s3(i - 1, row)) || here < std::abs(map.s3(i + 1, row))) continue;
      // Reject plateaus counted twice.
      if (here == std::abs(map.s3(i - 1, row)) && !map.c_points.empty() &&
          std::abs(map.c_points.back().y_nm - map.y_nm[i - 1]) < cs.pitch_y_nm())
        continue;
      const double sign = map.s3(i, row) >= 0.0 ? 1.0 : -1.0;
      // Fit |S3| on the stencil around (i, row).
      RealGrid stencil(3, 3);
      for (int a = -1; a <= 1; ++a)
        for (int b = -1; b <= 1; ++b) stencil(a + 1, b + 1) = std::abs(map.s3(i + a, row + b));
      const auto [du, peak] = refine_on_row(stencil, 1, 1);
      const double y = map.y_nm[i] + du * cs.pitch_y_nm();
      const double value = std::min(1.0, peak);
      map.c_points.push_back({y, map.z_nm[row], sign * value, value});
    }
  }
  return map;
}

void write_mode_csv(const GuidedMode& mode, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  out << std::setprecision(12);
  out << "y_nm,z_nm,Ex_re,Ex_im,Ey_re,Ey_im,Ez_re,Ez_im\n";
  const int ny = mode.section.grid_ny;
  const int nz = mode.section.grid_nz;
  for (int i = 0; i <= ny; ++i) {
    for (int j = 0; j <= nz; ++j) {
      const double y = mode.y_node(i);
      const double z = mode.z_node(j);
      const FieldTriple f = mode_at(mode, y, z);
      out << y << ',' << z << ',' << f.ex.real() << ',' << f.ex.imag() << ',' << f.ey.real() << ','
          << f.ey.imag() << ',' << f.ez.real() << ',' << f.ez.imag() << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

void write_helicity_csv(const HelicityMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  out << std::setprecision(12);
  out << "y_nm,z_nm,S3,degenerate\n";
  for (int i = 0; i < map.s3.ny(); ++i)
    for (int j = 0; j < map.s3.nz(); ++j)
      out << map.y_nm[i] << ',' << map.z_nm[j] << ',' << map.s3(i, j) << ',' << int(map.degenerate(i, j)) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

void write_helicity_pgm(const HelicityMap& map, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path);
  const int w = map.s3.ny();
  const int h = map.s3.nz();
  out << "P5\n" << w << ' ' << h << "\n255\n";
  // Top image row is the largest z.
  for (int j = h - 1; j >= 0; --j)
    for (int i = 0; i < w; ++i) {
      const double v = std::round(255.0 * (map.s3(i, j) + 1.0) / 2.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::clamp(v, 0.0, 255.0))));
    }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace chiralwg
