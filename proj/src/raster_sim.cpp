#include "chiralwg/raster_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "chiralwg/errors.hpp"

namespace chiralwg {

int ScanGrid::nx() const { return static_cast<int>(std::lround((x_max_um - x_min_um) / pitch_um)); }
int ScanGrid::ny() const { return static_cast<int>(std::lround((y_max_um - y_min_um) / pitch_um)); }
double ScanGrid::x_at(int ix) const { return x_min_um + (ix + 0.5) * pitch_um; }
double ScanGrid::y_at(int iy) const { return y_min_um + (iy + 0.5) * pitch_um; }

void ScanGrid::validate(const CouplerPair& couplers) const {
  if (!(pitch_um > 0.0)) throw InvalidConfig("raster pitch must be positive");
  if (!(spot_radius_um > 0.0)) throw InvalidConfig("raster spot radius must be positive");
  if (!(x_max_um > x_min_um) || !(y_max_um > y_min_um)) throw InvalidConfig("raster extents are empty");
  if (nx() < 1 || ny() < 1) throw InvalidConfig("raster has no pixels");
  for (const GratingCoupler* c : {&couplers.left, &couplers.right}) {
    if (c->x_um < x_min_um || c->x_um > x_max_um || c->y_um < y_min_um || c->y_um > y_max_um)
      throw InvalidConfig("raster extents must cover both couplers");
  }
}

double GratingPolarizationModel::overlap(const LaserPolarization& pol) const {
  if (pol.kind != PolarizationKind::linear) return 0.5;
  const double d = (pol.theta_deg - axis_deg) * M_PI / 180.0;
  return 0.5 * (1.0 + visibility * std::cos(2.0 * d));
}

double incoupling(double x_um, double y_um, const GratingCoupler& coupler, double spot_radius_um,
                  const LaserPolarization& pol, const GratingPolarizationModel& model) {
  const double dx = x_um - coupler.x_um;
  const double dy = y_um - coupler.y_um;
  const double d2 = dx * dx + dy * dy;
  return coupler.in_efficiency * std::exp(-2.0 * d2 / (spot_radius_um * spot_radius_um)) * model.overlap(pol);
}

double pixel_flux(double x_um, double y_um, const ScanGrid& grid, const DeviceModel& device,
                  const DynamicsSetup& dynamics, Side detection, const GratingPolarizationModel& model) {
  const double el = incoupling(x_um, y_um, device.couplers.left, grid.spot_radius_um, grid.polarization, model);
  const double er = incoupling(x_um, y_um, device.couplers.right, grid.spot_radius_um, grid.polarization, model);
  DirectionalFlux flux = launched_flux(device, Side::left, dynamics.power * el);
  flux += launched_flux(device, Side::right, dynamics.power * er);
  const RateModel rm = build_rate_model(device, flux, dynamics.zeeman, dynamics.noise, dynamics.eta_p, dynamics.pump);
  return steady_state(rm).flux.side_total(detection);
}

RasterMap simulate_map(const ScanGrid& grid, const DeviceModel& device, const DynamicsSetup& dynamics, Side detection,
                       const GratingPolarizationModel& model) {
  grid.validate(device.couplers);
  RasterMap m;
  m.nx = grid.nx();
  m.ny = grid.ny();
  m.detection = detection;
  m.polarization = grid.polarization.label();
  m.B_T = dynamics.zeeman.B_T;
  for (int ix = 0; ix < m.nx; ++ix) m.x_um.push_back(grid.x_at(ix));
  for (int iy = 0; iy < m.ny; ++iy) m.y_um.push_back(grid.y_at(iy));
  m.intensity.assign(static_cast<std::size_t>(m.nx) * m.ny, 0.0);
  for (int iy = 0; iy < m.ny; ++iy)
    for (int ix = 0; ix < m.nx; ++ix)
      m.at(ix, iy) = pixel_flux(m.x_um[ix], m.y_um[iy], grid, device, dynamics, detection, model);
  return m;
}

double disk_integral(const RasterMap& map, double cx_um, double cy_um, double radius_um) {
  double s = 0.0;
  for (int iy = 0; iy < map.ny; ++iy)
    for (int ix = 0; ix < map.nx; ++ix) {
      const double dx = map.x_um[ix] - cx_um;
      const double dy = map.y_um[iy] - cy_um;
      if (dx * dx + dy * dy <= radius_um * radius_um) s += map.at(ix, iy);
    }
  return s;
}

double map_contrast(const RasterMap& map_xl, const RasterMap& map_xr, const CouplerPair& couplers,
                    double disk_radius_um) {
  if (map_xl.nx != map_xr.nx || map_xl.ny != map_xr.ny || map_xl.x_um != map_xr.x_um || map_xl.y_um != map_xr.y_um)
    throw GridMismatch("raster maps are on different grids");
  if (map_xl.detection != map_xr.detection) throw GridMismatch("raster maps have different detection sides");
  const double il = disk_integral(map_xl, couplers.left.x_um, couplers.left.y_um, disk_radius_um);
  const double ir = disk_integral(map_xr, couplers.right.x_um, couplers.right.y_um, disk_radius_um);
  if (il + ir == 0.0) throw ZeroDenominator("both coupler lobes are empty");
  return (ir - il) / (ir + il);
}

void write_map_csv(const RasterMap& map, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  char buf[128];
  f << "x_um,y_um,intensity\n";
  for (int iy = 0; iy < map.ny; ++iy)
    for (int ix = 0; ix < map.nx; ++ix) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", map.x_um[ix], map.y_um[iy], map.at(ix, iy));
      f << buf;
    }
  if (!f) throw IoError("write failed for " + path);
}

void write_map_pgm(const RasterMap& map, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  double peak = 0.0;
  for (double v : map.intensity) peak = std::max(peak, v);
  f << "P5\n" << map.nx << " " << map.ny << "\n255\n";
  for (int iy = map.ny - 1; iy >= 0; --iy)
    for (int ix = 0; ix < map.nx; ++ix) {
      const double v = peak > 0.0 ? map.at(ix, iy) / peak : 0.0;
      f.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)))));
    }
  if (!f) throw IoError("write failed for " + path);
}

RasterMap read_map_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  std::string line;
  int lineno = 1;
  if (!std::getline(f, line) || line != "x_um,y_um,intensity") throw SchemaError(path + ": missing header x_um,y_um,intensity");
  std::vector<double> xs, ys, vs;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    double x, y, v;
    char c1, c2;
    std::istringstream is(line);
    if (!(is >> x >> c1 >> y >> c2 >> v) || c1 != ',' || c2 != ',') {
      std::ostringstream os;
      os << path << ":" << lineno << ": malformed row";
      throw ParseError(os.str());
    }
    xs.push_back(x);
    ys.push_back(y);
    vs.push_back(v);
  }
  RasterMap m;
  for (double x : xs) {
    if (!m.x_um.empty() && x <= m.x_um.back()) break;
    m.x_um.push_back(x);
  }
  m.nx = static_cast<int>(m.x_um.size());
  if (m.nx == 0 || vs.size() % m.nx != 0) throw SchemaError(path + ": rows do not form a rectangular grid");
  m.ny = static_cast<int>(vs.size() / m.nx);
  for (int iy = 0; iy < m.ny; ++iy) m.y_um.push_back(ys[static_cast<std::size_t>(iy) * m.nx]);
  m.intensity = vs;
  return m;
}

}  // namespace chiralwg
