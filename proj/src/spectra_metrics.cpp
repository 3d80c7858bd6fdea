#include "chiralwg/spectra_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "chiralwg/errors.hpp"

namespace chiralwg {

namespace {

const double kSqrt2Pi = std::sqrt(2.0 * M_PI);

Intensity peak_intensity(const Eigen::VectorXd& p, const Eigen::MatrixXd& cov, int k) {
  const double a = p[3 * k];
  const double s = std::abs(p[3 * k + 2]);
  Eigen::Vector3d grad(s * kSqrt2Pi, 0.0, a * kSqrt2Pi);
  const Eigen::Matrix3d c = cov.block<3, 3>(3 * k, 3 * k);
  const double var = grad.dot(c * grad);
  return {a * s * kSqrt2Pi, std::sqrt(std::max(var, 0.0))};
}

std::vector<PeakGuess> auto_guess(const Spectrum& spec, int n_peaks) {
  const auto& x = spec.energy_ueV;
  const auto& y = spec.intensity;
  const std::size_t n = y.size();
  std::vector<std::size_t> maxima;
  for (std::size_t i = 0; i < n; ++i) {
    const bool left_ok = i == 0 || y[i] > y[i - 1];
    const bool right_ok = i + 1 == n || y[i] >= y[i + 1];
    if (left_ok && right_ok) maxima.push_back(i);
  }
  if (maxima.empty()) maxima.push_back(static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin()));
  // Highest first, ties broken by position so the choice is deterministic.
  std::stable_sort(maxima.begin(), maxima.end(), [&y](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  std::vector<PeakGuess> out;
  std::size_t first_lo = 0, first_hi = 0;
  for (int k = 0; k < n_peaks; ++k) {
    // The second line must lie outside the half-maximum span of the first,
    // otherwise noise spikes on one line would seed both.
    std::size_t i = maxima.front();
    bool found = k == 0;
    for (std::size_t m : maxima)
      if (k > 0 && (m < first_lo || m > first_hi)) {
        i = m;
        found = true;
        break;
      }
    const double half = 0.5 * y[i];
    std::size_t lo = i, hi = i;
    while (lo > 0 && y[lo] > half) --lo;
    while (hi + 1 < n && y[hi] > half) ++hi;
    if (k == 0) {
      first_lo = lo;
      first_hi = hi;
    }
    double sigma = fwhm_to_sigma(x[hi] - x[lo]);
    if (!(sigma > 0.0)) sigma = 2.0 * (x.back() - x.front()) / static_cast<double>(n);
    double center = x[i];
    if (!found) center += sigma;  // a lone line asked to be two peaks
    out.push_back({center, sigma, y[i]});
  }
  return out;
}

struct LmOutcome {
  Eigen::VectorXd params;
  Eigen::MatrixXd cov;
  double reduced_chi2 = 0.0;
  int iterations = 0;
};

LmOutcome levenberg_marquardt(const Spectrum& spec, Eigen::VectorXd p, const FitOptions& opt) {
  const auto& x = spec.energy_ueV;
  const int n = static_cast<int>(x.size());
  const int np = static_cast<int>(p.size());
  Eigen::VectorXd y(n), w(n);
  for (int i = 0; i < n; ++i) {
    y[i] = spec.intensity[i];
    w[i] = 1.0 / std::max(spec.intensity[i] + spec.background, 1.0);
  }
  auto residual = [&](const Eigen::VectorXd& q) {
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) r[i] = y[i] - gaussian_sum(q, x[i]);
    return r;
  };
  auto cost_of = [&](const Eigen::VectorXd& r) { return (w.array() * r.array().square()).sum(); };

  Eigen::VectorXd r = residual(p);
  double cost = cost_of(r);
  const double initial_cost = cost;
  double lambda = -1.0;
  bool converged = cost == 0.0;
  int it = 0;
  for (; it < opt.max_iter && !converged; ++it) {
    const Eigen::MatrixXd j = gaussian_jacobian(p, x);
    const Eigen::MatrixXd jtw = j.transpose() * w.asDiagonal();
    const Eigen::MatrixXd h = jtw * j;
    const Eigen::VectorXd g = jtw * r;
    const double hmax = h.diagonal().maxCoeff();
    if (!(hmax > 0.0)) {
      converged = true;
      break;
    }
    if (lambda < 0.0) lambda = 1e-3;
    bool accepted = false;
    for (int tries = 0; tries < 40 && !accepted; ++tries) {
      Eigen::MatrixXd damped = h;
      for (int k = 0; k < np; ++k) damped(k, k) += lambda * std::max(h(k, k), 1e-12 * hmax);
      const Eigen::VectorXd step = damped.ldlt().solve(g);
      const Eigen::VectorXd trial = p + step;
      const Eigen::VectorXd rt = residual(trial);
      const double ct = cost_of(rt);
      if (std::isfinite(ct) && ct <= cost) {
        const double drop = cost - ct;
        const double step_rel = step.norm() / std::max(p.norm(), 1e-300);
        p = trial;
        r = rt;
        accepted = true;
        lambda = std::max(lambda / 3.0, 1e-15);
        if (drop <= opt.tolerance * std::max(cost, 1e-300) || step_rel <= 1e-14) converged = true;
        cost = ct;
      } else {
        lambda *= 4.0;
      }
    }
    if (!accepted) converged = true;  // no downhill step left at any damping
  }
  if (!converged && !(cost < initial_cost)) {
    std::ostringstream os;
    os << "Levenberg-Marquardt did not reduce the residual in " << opt.max_iter << " iterations";
    throw FitDiverged(os.str());
  }
  LmOutcome out;
  out.iterations = it;
  out.params = p;
  const int dof = std::max(n - np, 1);
  out.reduced_chi2 = cost / dof;
  const Eigen::MatrixXd j = gaussian_jacobian(p, x);
  const Eigen::MatrixXd h = j.transpose() * w.asDiagonal() * j;
  // Weights are inverse count variances; a poor fit inflates the covariance.
  out.cov = std::max(out.reduced_chi2, 1.0) * h.completeOrthogonalDecomposition().pseudoInverse();
  return out;
}

PeakSet to_peakset(const LmOutcome& fit, int n_peaks) {
  PeakSet ps;
  ps.reduced_chi2 = fit.reduced_chi2;
  ps.iterations = fit.iterations;
  for (int k = 0; k < n_peaks; ++k) {
    Peak pk;
    pk.amplitude = fit.params[3 * k];
    pk.center = fit.params[3 * k + 1];
    pk.sigma = std::abs(fit.params[3 * k + 2]);
    const Intensity in = peak_intensity(fit.params, fit.cov, k);
    pk.intensity = in.value;
    pk.intensity_sigma = in.sigma;
    ps.peaks.push_back(pk);
  }
  std::sort(ps.peaks.begin(), ps.peaks.end(), [](const Peak& a, const Peak& b) { return a.center < b.center; });
  if (n_peaks == 2) {
    ps.peaks[0].label = "sigma_plus";
    ps.peaks[1].label = "sigma_minus";
  } else {
    ps.peaks[0].label = "merged";
  }
  return ps;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& text, const std::string& path, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (trim(text.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  std::ostringstream os;
  os << path << ":" << line << ": cannot parse number '" << text << "'";
  throw ParseError(os.str());
}

}  // namespace

void Spectrum::validate() const {
  if (energy_ueV.size() != intensity.size()) throw InvalidConfig("spectrum axis and intensity lengths differ");
  for (std::size_t i = 0; i < energy_ueV.size(); ++i) {
    if (!std::isfinite(energy_ueV[i]) || !std::isfinite(intensity[i])) throw InvalidConfig("spectrum has non-finite values");
    if (i > 0 && !(energy_ueV[i] > energy_ueV[i - 1])) throw InvalidConfig("spectrum energy axis must be strictly increasing");
  }
}

const Peak* PeakSet::find(const std::string& label) const {
  for (const auto& p : peaks)
    if (p.label == label) return &p;
  return nullptr;
}

double PeakSet::total_intensity() const {
  double s = 0.0;
  for (const auto& p : peaks) s += p.intensity;
  return s;
}

double PeakSet::total_intensity_sigma() const {
  // Peaks are treated as independent; the cross-covariance is dropped.
  double v = 0.0;
  for (const auto& p : peaks) v += p.intensity_sigma * p.intensity_sigma;
  return std::sqrt(v);
}

Spectrum synth_spectrum(const FluxReport& flux, Side detection, const ZeemanParams& zeeman,
                        const SynthOptions& options) {
  if (!(options.fwhm_ueV > 0.0)) throw InvalidConfig("linewidth must be positive");
  if (options.n_samples < 2) throw InvalidConfig("spectrum needs at least two samples");
  const double split = zeeman_splitting(zeeman);
  const double sigma = fwhm_to_sigma(options.fwhm_ueV);
  const double area_p = flux.at(detection, Handedness::sigma_plus) * options.exposure_ns;
  const double area_m = flux.at(detection, Handedness::sigma_minus) * options.exposure_ns;
  Eigen::VectorXd params(6);
  params << area_p / (sigma * kSqrt2Pi), -0.5 * split, sigma, area_m / (sigma * kSqrt2Pi), 0.5 * split, sigma;

  Spectrum s;
  s.meta.detection_side = to_string(detection);
  s.meta.B_T = zeeman.B_T;
  s.meta.g_factor = zeeman.g_factor;
  s.energy_ueV.resize(options.n_samples);
  s.intensity.resize(options.n_samples);
  std::optional<std::mt19937_64> rng;
  if (options.noise_seed) rng.emplace(*options.noise_seed);
  for (int i = 0; i < options.n_samples; ++i) {
    const double x = -options.span_ueV + 2.0 * options.span_ueV * i / (options.n_samples - 1);
    s.energy_ueV[i] = x;
    double v = gaussian_sum(params, x) + options.background;
    if (rng) {
      if (v > 0.0) {
        std::poisson_distribution<long long> pd(v);
        v = static_cast<double>(pd(*rng));
      } else {
        v = 0.0;
      }
    }
    s.intensity[i] = v;
  }
  return s;
}

double estimate_background(const Spectrum& spec) {
  if (spec.size() < 20) throw InvalidConfig("background estimate needs at least 20 samples");
  std::vector<double> v = spec.intensity;
  std::sort(v.begin(), v.end());
  const std::size_t q = std::max<std::size_t>(v.size() / 4, 1);
  if (q % 2 == 1) return v[q / 2];
  return 0.5 * (v[q / 2 - 1] + v[q / 2]);
}

Spectrum subtract_background(const Spectrum& spec) {
  const double b = estimate_background(spec);
  Spectrum out = spec;
  for (auto& y : out.intensity) y -= b;
  out.background += b;
  return out;
}

double gaussian_sum(const Eigen::VectorXd& p, double x) {
  double s = 0.0;
  for (int k = 0; 3 * k + 2 < p.size(); ++k) {
    const double d = (x - p[3 * k + 1]) / p[3 * k + 2];
    s += p[3 * k] * std::exp(-0.5 * d * d);
  }
  return s;
}

Eigen::MatrixXd gaussian_jacobian(const Eigen::VectorXd& p, const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd j(n, p.size());
  for (int i = 0; i < n; ++i) {
    for (int k = 0; 3 * k + 2 < p.size(); ++k) {
      const double a = p[3 * k];
      const double mu = p[3 * k + 1];
      const double s = p[3 * k + 2];
      const double u = x[i] - mu;
      const double e = std::exp(-0.5 * u * u / (s * s));
      j(i, 3 * k) = e;
      j(i, 3 * k + 1) = a * e * u / (s * s);
      j(i, 3 * k + 2) = a * e * u * u / (s * s * s);
    }
  }
  return j;
}

PeakSet fit_peaks(const Spectrum& spec, int n_peaks, const std::optional<std::vector<PeakGuess>>& init,
                  const FitOptions& options) {
  if (n_peaks != 1 && n_peaks != 2) throw InvalidConfig("fit_peaks supports one or two peaks");
  spec.validate();
  if (spec.size() < static_cast<std::size_t>(3 * n_peaks + 1)) throw InvalidConfig("too few samples to fit");
  std::vector<PeakGuess> guess = init ? *init : auto_guess(spec, n_peaks);
  if (static_cast<int>(guess.size()) != n_peaks) throw InvalidConfig("initial guess count differs from n_peaks");
  Eigen::VectorXd p(3 * n_peaks);
  for (int k = 0; k < n_peaks; ++k) {
    if (!(guess[k].sigma > 0.0)) throw InvalidConfig("initial peak width must be positive");
    p.segment<3>(3 * k) << guess[k].amplitude, guess[k].center, guess[k].sigma;
  }
  const LmOutcome fit = levenberg_marquardt(spec, p, options);
  PeakSet ps = to_peakset(fit, n_peaks);
  if (n_peaks == 2) {
    const double gap = ps.peaks[1].center - ps.peaks[0].center;
    const double width = 0.5 * (ps.peaks[0].sigma + ps.peaks[1].sigma);
    const bool both_present = ps.peaks[0].amplitude != 0.0 && ps.peaks[1].amplitude != 0.0;
    if (both_present && gap < 0.5 * width) {
      const double a = ps.peaks[0].amplitude + ps.peaks[1].amplitude;
      const double c = (ps.peaks[0].amplitude * ps.peaks[0].center + ps.peaks[1].amplitude * ps.peaks[1].center) / a;
      std::vector<PeakGuess> one{{c, width, a}};
      PeakSet merged = fit_peaks(spec, 1, one, options);
      merged.collapsed = true;
      return merged;
    }
  }
  return ps;
}

std::string to_string(ContrastKind k) { return k == ContrastKind::readout ? "readout" : "initialization"; }

namespace {

ContrastResult signed_ratio(const Intensity& a, const Intensity& b, ContrastKind kind, Side detection) {
  const double sum = a.value + b.value;
  if (sum == 0.0) throw ZeroDenominator("contrast denominator is zero");
  ContrastResult c;
  c.kind = kind;
  c.detection = detection;
  c.value = (a.value - b.value) / sum;
  const double da = 2.0 * b.value / (sum * sum);
  const double db = -2.0 * a.value / (sum * sum);
  c.uncertainty = std::sqrt(da * da * a.sigma * a.sigma + db * db * b.sigma * b.sigma);
  return c;
}

void require_non_negative(const Intensity& i) {
  if (!(i.value >= 0.0) || !(i.sigma >= 0.0)) throw InvalidConfig("contrast inputs must be non-negative");
}

}  // namespace

ContrastResult readout_contrast(const Intensity& sigma_plus, const Intensity& sigma_minus, Side detection) {
  require_non_negative(sigma_plus);
  require_non_negative(sigma_minus);
  return signed_ratio(sigma_plus, sigma_minus, ContrastKind::readout, detection);
}

ContrastResult readout_contrast(const PeakSet& peaks, Side detection) {
  const Peak* p = peaks.find("sigma_plus");
  const Peak* m = peaks.find("sigma_minus");
  if (peaks.peaks.size() != 2 || !p || !m) throw InvalidConfig("readout contrast needs a sigma+/sigma- doublet");
  return readout_contrast(Intensity{std::max(p->intensity, 0.0), p->intensity_sigma},
                          Intensity{std::max(m->intensity, 0.0), m->intensity_sigma}, detection);
}

ContrastResult init_contrast(const std::array<Intensity, 2>& from_left_exc,
                             const std::array<Intensity, 2>& from_right_exc, Side detection) {
  for (const auto& i : from_left_exc) require_non_negative(i);
  for (const auto& i : from_right_exc) require_non_negative(i);
  auto combine = [](const std::array<Intensity, 2>& v) {
    return Intensity{v[0].value + v[1].value, std::sqrt(v[0].sigma * v[0].sigma + v[1].sigma * v[1].sigma)};
  };
  return signed_ratio(combine(from_right_exc), combine(from_left_exc), ContrastKind::initialization, detection);
}

void write_spectrum_csv(const Spectrum& spec, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  char buf[96];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  f << "#excitation_side=" << spec.meta.excitation_side << "\n";
  f << "#detection_side=" << spec.meta.detection_side << "\n";
  f << "#B_T=" << num(spec.meta.B_T) << "\n";
  f << "#pol=" << spec.meta.polarization << "\n";
  f << "#g_factor=" << num(spec.meta.g_factor) << "\n";
  f << "#background=" << num(spec.background) << "\n";
  f << "energy_ueV,intensity\n";
  for (std::size_t i = 0; i < spec.size(); ++i) f << num(spec.energy_ueV[i]) << "," << num(spec.intensity[i]) << "\n";
  if (!f) throw IoError("write failed for " + path);
}

Spectrum read_spectrum_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  std::map<std::string, std::string> header;
  Spectrum s;
  std::string line;
  int lineno = 0;
  bool columns_seen = false;
  while (std::getline(f, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const auto eq = t.find('=');
      if (eq == std::string::npos) {
        std::ostringstream os;
        os << path << ":" << lineno << ": header line is not #key=value";
        throw ParseError(os.str());
      }
      header[trim(t.substr(1, eq - 1))] = trim(t.substr(eq + 1));
      continue;
    }
    if (!columns_seen) {
      if (t != "energy_ueV,intensity") {
        std::ostringstream os;
        os << path << ":" << lineno << ": expected column header 'energy_ueV,intensity'";
        throw ParseError(os.str());
      }
      columns_seen = true;
      continue;
    }
    const auto comma = t.find(',');
    if (comma == std::string::npos || t.find(',', comma + 1) != std::string::npos) {
      std::ostringstream os;
      os << path << ":" << lineno << ": expected two comma-separated values";
      throw ParseError(os.str());
    }
    s.energy_ueV.push_back(parse_number(t.substr(0, comma), path, lineno));
    s.intensity.push_back(parse_number(t.substr(comma + 1), path, lineno));
  }
  for (const char* key : {"excitation_side", "detection_side", "B_T", "pol"})
    if (!header.count(key)) throw SchemaError(path + ": missing header #" + std::string(key) + "=...");
  if (!columns_seen) throw SchemaError(path + ": missing column header energy_ueV,intensity");
  s.meta.excitation_side = header["excitation_side"];
  s.meta.detection_side = header["detection_side"];
  s.meta.polarization = header["pol"];
  s.meta.B_T = parse_number(header["B_T"], path, 0);
  if (header.count("g_factor")) s.meta.g_factor = parse_number(header["g_factor"], path, 0);
  if (header.count("background")) s.background = parse_number(header["background"], path, 0);
  try {
    s.validate();
  } catch (const InvalidConfig& e) {
    throw ParseError(path + ": " + e.what());
  }
  return s;
}

}  // namespace chiralwg
