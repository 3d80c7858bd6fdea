#pragma once

// Full-vector finite-difference eigenmodes of a rectangular dielectric
// waveguide, plus the longitudinal field and in-plane helicity analysis.
//
// Coordinates: propagation along x, cross-section in (y, z), origin at the
// core centre. Fields carry exp(i*beta*x).
//
// Discretisation is a 2D Yee cell in the cross-section. With cell corners
// ("nodes") at (y_i, z_j):
//   E_x at (i, j), E_y at (i+1/2, j), E_z at (i, j+1/2).
// The box boundary is a perfect electric conductor, so tangential E vanishes
// on it. Each cell holds one material; permittivity at a field sample is the
// arithmetic mean of the cells that touch it.

#include <complex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace chiralwg {

using cplx = std::complex<double>;

template <typename T>
class Grid2 {
 public:
  Grid2() = default;
  Grid2(int ny, int nz, T fill = T{}) : ny_(ny), nz_(nz), data_(static_cast<std::size_t>(ny) * nz, fill) {}

  int ny() const { return ny_; }
  int nz() const { return nz_; }
  bool empty() const { return data_.empty(); }
  T& operator()(int iy, int iz) { return data_[static_cast<std::size_t>(iy) * nz_ + iz]; }
  const T& operator()(int iy, int iz) const { return data_[static_cast<std::size_t>(iy) * nz_ + iz]; }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

 private:
  int ny_ = 0;
  int nz_ = 0;
  std::vector<T> data_;
};

using ComplexGrid = Grid2<cplx>;
using RealGrid = Grid2<double>;

struct CrossSection {
  double core_width_nm = 280.0;   // along y
  double core_height_nm = 140.0;  // along z
  double core_index = 3.48;
  double clad_index = 1.0;
  int grid_ny = 112;  // cells across the whole padded box
  int grid_nz = 98;
  double padding_nm = 420.0;  // cladding on each side of the core

  double box_width_nm() const { return core_width_nm + 2.0 * padding_nm; }
  double box_height_nm() const { return core_height_nm + 2.0 * padding_nm; }
  double pitch_y_nm() const { return box_width_nm() / grid_ny; }
  double pitch_z_nm() const { return box_height_nm() / grid_nz; }
  int core_cells_y() const;
  int core_cells_z() const;

  // Throws InvalidConfig / GridTooCoarse.
  void validate() const;

  // Cross-section with the same geometry and every pitch divided by factor.
  CrossSection refined(int factor) const;
};

// Cell-centred permittivity. Cell (cy, cz) spans y in
// [y_min + cy*hy, y_min + (cy+1)*hy] and likewise in z.
RealGrid cell_permittivity(const CrossSection& cs);

enum class Direction { forward, backward };  // +x, -x

struct GuidedMode {
  CrossSection section;
  double wavelength_nm = 0.0;
  double n_eff = 0.0;
  Direction direction = Direction::forward;
  ComplexGrid ey;  // ny x (nz+1), samples (i+1/2, j)
  ComplexGrid ez;  // (ny+1) x nz, samples (i, j+1/2)
  ComplexGrid ex;  // (ny+1) x (nz+1) nodes; empty until longitudinal_field
  std::string gauge_note;
  double eigen_residual = 0.0;  // ||A v - n_eff^2 v|| / ||v||, A scaled by 1/k0^2

  bool has_longitudinal() const { return !ex.empty(); }
  double y_node(int i) const;
  double z_node(int j) const;

  // sum|E_y|^2 / (sum|E_y|^2 + sum|E_z|^2); above 1/2 for quasi-TE modes.
  double ey_fraction() const;

  // The counter-propagating partner: beta -> -beta, so E_x -> -E_x.
  GuidedMode reversed() const;
};

struct SolverOptions {
  // Target for shift-and-invert, as a fraction of the core index.
  double shift_fraction = 1.0;
  double residual_tolerance = 1e-10;
  int max_iterations = 600;
};

// Transverse fields only, gauge-fixed, sorted by descending n_eff. Only
// guided modes (clad_index < n_eff < core_index) are returned.
std::vector<GuidedMode> solve_modes(const CrossSection& cs, double wavelength_nm, int n_modes,
                                    const SolverOptions& options = {});

// Rotates the global phase so the largest-magnitude E_y sample is real and
// positive, then scales so max|E_y| = 1. Clears E_x.
void fix_gauge(GuidedMode& mode);

// E_x from div(eps E) = 0 on the staggered grid.
GuidedMode longitudinal_field(const GuidedMode& mode);

struct FieldTriple {
  cplx ex;
  cplx ey;
  cplx ez;
};

// Bilinear interpolation of each component on its own staggered lattice.
FieldTriple mode_at(const GuidedMode& mode, double y_nm, double z_nm);

struct HelicityPoint {
  double value = 0.0;
  bool degenerate = false;
};

// S3 = 2 Im(E_x^* E_y) / (|E_x|^2 + |E_y|^2); 0 and flagged when the
// denominator is below 1e-30.
HelicityPoint stokes_s3(const FieldTriple& f);

struct CPoint {
  double y_nm;
  double z_nm;
  double s3;         // signed value at the refined extremum
  double abs_peak;   // refined |S3|
};

struct HelicityOptions {
  double eps_c = 0.01;
  double eps_l = 0.02;
};

struct HelicityMap {
  std::vector<double> y_nm;  // node coordinates
  std::vector<double> z_nm;
  RealGrid s3;               // (ny+1) x (nz+1)
  Grid2<unsigned char> degenerate;
  std::vector<CPoint> c_points;  // in the z = 0 emitter plane, sorted by y
  std::vector<std::pair<int, int>> l_lines;  // node indices with |S3| <= eps_l
  int plane_row = 0;                         // node row used as the z = 0 plane
};

HelicityMap helicity_map(const GuidedMode& mode, const HelicityOptions& options = {});

// Exports
void write_mode_csv(const GuidedMode& mode, const std::string& path);
void write_helicity_csv(const HelicityMap& map, const std::string& path);
void write_helicity_pgm(const HelicityMap& map, const std::string& path);

}  // namespace chiralwg
