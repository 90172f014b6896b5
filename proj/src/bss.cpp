// SPDX-License-Identifier: Apache-2.0
#include "sadu/bss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "sadu/error.hpp"

namespace sadu {
namespace {

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

std::string fmt(double x, const char* spec) {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

}  // namespace

Decomposition decompose(std::span<const float> estimate, std::span<const float> reference0,
                        std::span<const float> reference1, std::size_t target) {
  const std::size_t n = estimate.size();
  if (reference0.size() != n || reference1.size() != n) {
    throw DimensionError("decompose: estimate has " + std::to_string(n) + " samples, references " +
                         std::to_string(reference0.size()) + " and " +
                         std::to_string(reference1.size()));
  }
  if (target > 1) throw ContractError("decompose: target index must be 0 or 1");

  const double g00 = dot(reference0, reference0);
  const double g11 = dot(reference1, reference1);
  const double g01 = dot(reference0, reference1);
  if (g00 == 0.0 || g11 == 0.0) throw ContractError("decompose: reference has zero energy");
  const double det = g00 * g11 - g01 * g01;
  if (!(det > 1e-12 * g00 * g11)) throw ContractError("decompose: references are linearly dependent");

  const double b0 = dot(estimate, reference0);
  const double b1 = dot(estimate, reference1);
  const double c0 = (g11 * b0 - g01 * b1) / det;
  const double c1 = (g00 * b1 - g01 * b0) / det;
  const auto& ref_t = target == 0 ? reference0 : reference1;
  const double ct = (target == 0 ? b0 / g00 : b1 / g11);

  Decomposition d;
  d.target.resize(n);
  d.interference.resize(n);
  d.artifact.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double st = ct * ref_t[i];
    const double proj = c0 * reference0[i] + c1 * reference1[i];
    d.target[i] = st;
    d.interference[i] = proj - st;
    d.artifact[i] = estimate[i] - proj;
  }
  return d;
}

double capped_db(double num, double den) {
  if (den <= 0.0) return num > 0.0 ? kMetricCapDb : -kMetricCapDb;
  if (num <= 0.0) return -kMetricCapDb;
  return std::clamp(10.0 * std::log10(num / den), -kMetricCapDb, kMetricCapDb);
}

Metrics sdr_sir_sar(const Decomposition& d) {
  const std::size_t n = d.target.size();
  double e_target = 0.0, e_interf = 0.0, e_artif = 0.0, e_noise = 0.0, e_signal = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double st = d.target[i], ei = d.interference[i], ea = d.artifact[i];
    e_target += st * st;
    e_interf += ei * ei;
    e_artif += ea * ea;
    e_noise += (ei + ea) * (ei + ea);
    e_signal += (st + ei) * (st + ei);
  }
  Metrics m;
  m.sdr = capped_db(e_target, e_noise);
  m.sir = capped_db(e_target, e_interf);
  m.sar = capped_db(e_signal, e_artif);
  return m;
}

EvalReport evaluate_track(const std::string& track, const AudioClip& est_voice,
                          const AudioClip& est_accomp, const AudioClip& ref_voice,
                          const AudioClip& ref_accomp) {
  const std::size_t n = ref_voice.size();
  if (est_voice.size() != n || est_accomp.size() != n || ref_accomp.size() != n) {
    throw DimensionError("evaluate_track: clip lengths differ (" + std::to_string(est_voice.size()) +
                         ", " + std::to_string(est_accomp.size()) + ", " + std::to_string(n) + ", " +
                         std::to_string(ref_accomp.size()) + ")");
  }
  EvalReport report;
  report.track = track;
  report.length = n;
  report.sources.push_back(
      {"voice", sdr_sir_sar(decompose(est_voice.samples, ref_voice.samples, ref_accomp.samples, 0))});
  report.sources.push_back({"accompaniment", sdr_sir_sar(decompose(est_accomp.samples, ref_voice.samples,
                                                                   ref_accomp.samples, 1))});
  return report;
}

std::string report_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "track,source,sdr,sir,sar\n";
  for (const auto& r : reports) {
    for (const auto& s : r.sources) {
      os << r.track << ',' << s.source << ',' << fmt(s.metrics.sdr, "%.6f") << ','
         << fmt(s.metrics.sir, "%.6f") << ',' << fmt(s.metrics.sar, "%.6f") << '\n';
    }
  }
  return os.str();
}

std::string report_json(const std::vector<EvalReport>& reports) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json track;
    track["track"] = r.track;
    track["length"] = r.length;
    for (const auto& s : r.sources) {
      track["sources"][s.source] = {{"sdr", s.metrics.sdr}, {"sir", s.metrics.sir}, {"sar", s.metrics.sar}};
    }
    out.push_back(std::move(track));
  }
  return out.dump(2) + "\n";
}

std::string report_table(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %-14s %9s %9s %9s\n", "track", "source", "SDR", "SIR", "SAR");
  os << line;
  for (const auto& r : reports) {
    for (const auto& s : r.sources) {
      std::snprintf(line, sizeof line, "%-20s %-14s %9.3f %9.3f %9.3f\n", r.track.c_str(),
                    s.source.c_str(), s.metrics.sdr, s.metrics.sir, s.metrics.sar);
      os << line;
    }
  }
  return os.str();
}

}  // namespace sadu
