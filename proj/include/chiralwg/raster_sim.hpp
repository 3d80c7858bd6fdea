#pragma once

// Excitation maps: a Gaussian spot scanned over the chip, coupling in through
// either grating, with detection fixed on one coupler at the QD line.

#include <string>
#include <vector>

#include "chiralwg/spin_dynamics.hpp"

namespace chiralwg {

struct ScanGrid {
  double x_min_um = -10.0;
  double x_max_um = 10.0;
  double y_min_um = -5.0;
  double y_max_um = 5.0;
  double pitch_um = 0.2;
  double spot_radius_um = 1.0;  // 1/e^2 intensity radius
  LaserPolarization polarization;

  int nx() const;
  int ny() const;
  double x_at(int ix) const;  // pixel centres
  double y_at(int iy) const;
  void validate(const CouplerPair& couplers) const;
};

struct RasterMap {
  int nx = 0;
  int ny = 0;
  std::vector<double> x_um;
  std::vector<double> y_um;
  std::vector<double> intensity;  // row-major, iy outer
  Side detection = Side::left;
  std::string polarization;
  double B_T = 0.0;

  double& at(int ix, int iy) { return intensity[static_cast<std::size_t>(iy) * nx + ix]; }
  double at(int ix, int iy) const { return intensity[static_cast<std::size_t>(iy) * nx + ix]; }
};

// Linear-polarisation overlap of the grating; circular light always gives 1/2.
struct GratingPolarizationModel {
  double visibility = 0.9;
  double axis_deg = 0.0;

  double overlap(const LaserPolarization& pol) const;
};

double incoupling(double x_um, double y_um, const GratingCoupler& coupler, double spot_radius_um,
                  const LaserPolarization& pol, const GratingPolarizationModel& model = {});

struct DynamicsSetup {
  ZeemanParams zeeman;
  SpinNoise noise;
  double eta_p = 0.95;
  PumpSettings pump;
  double power = 1.0;
};

// Detected flux for one spot position, both Zeeman lines summed.
double pixel_flux(double x_um, double y_um, const ScanGrid& grid, const DeviceModel& device,
                  const DynamicsSetup& dynamics, Side detection, const GratingPolarizationModel& model = {});

RasterMap simulate_map(const ScanGrid& grid, const DeviceModel& device, const DynamicsSetup& dynamics, Side detection,
                       const GratingPolarizationModel& model = {});

// I_L is the disk integral of map_xl around the left
// coupler, I_R that of map_xr around the right coupler, C = (I_R - I_L)/(I_R + I_L).
double map_contrast(const RasterMap& map_xl, const RasterMap& map_xr, const CouplerPair& couplers,
                    double disk_radius_um = 1.5);

double disk_integral(const RasterMap& map, double cx_um, double cy_um, double radius_um);

void write_map_csv(const RasterMap& map, const std::string& path);
void write_map_pgm(const RasterMap& map, const std::string& path);
RasterMap read_map_csv(const std::string& path);

}  // namespace chiralwg
