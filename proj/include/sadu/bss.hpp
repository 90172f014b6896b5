// SPDX-License-Identifier: Apache-2.0
//
// Energy-ratio separation metrics from a global least-squares decomposition
// of each estimate onto the two true sources (no distortion filters).

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sadu/audio.hpp"

namespace sadu {

inline constexpr double kMetricCapDb = 100.0;

struct Decomposition {
  std::vector<double> target;        // projection onto the target reference
  std::vector<double> interference;  // projection onto both references minus `target`
  std::vector<double> artifact;      // residual outside the span of the references
};

/// Raises DimensionError on length mismatch and ContractError for a
/// zero-energy or linearly dependent reference pair.
Decomposition decompose(std::span<const float> estimate, std::span<const float> reference0,
                        std::span<const float> reference1, std::size_t target);

struct Metrics {
  double sdr = 0.0, sir = 0.0, sar = 0.0;  // dB, capped to +-kMetricCapDb
};

Metrics sdr_sir_sar(const Decomposition& d);

/// 10 log10(num / den) clamped to +-kMetricCapDb; a zero denominator gives
/// the positive cap unless the numerator is zero too.
double capped_db(double num, double den);

struct SourceMetrics {
  std::string source;  // "voice" or "accompaniment"
  Metrics metrics;
};

struct EvalReport {
  std::string track;
  std::size_t length = 0;
  std::vector<SourceMetrics> sources;
};

EvalReport evaluate_track(const std::string& track, const AudioClip& est_voice,
                          const AudioClip& est_accomp, const AudioClip& ref_voice,
                          const AudioClip& ref_accomp);

/// "track,source,sdr,sir,sar" with a header line.
std::string report_csv(const std::vector<EvalReport>& reports);
std::string report_json(const std::vector<EvalReport>& reports);
std::string report_table(const std::vector<EvalReport>& reports);

}  // namespace sadu
