// Acoustic emotion features: 16 low-level descriptors per 25 ms frame, their
// regression deltas, and 12 statistical functionals per contour (384 values).
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "emopred/common.hpp"
#include "emopred/wav.hpp"

namespace emopred::afeat {

inline constexpr double kFrameMs = 25.0;
inline constexpr double kHopMs = 10.0;

inline constexpr int kNumMfcc = 12;
inline constexpr int kNumMelFilters = 26;
inline constexpr int kLldCount = 16;
inline constexpr int kNumContours = 2 * kLldCount;
inline constexpr int kNumFunctionals = 12;
inline constexpr int kFeatureDim = kNumContours * kNumFunctionals;
static_assert(kFeatureDim == 384);

// LLD column order.
inline constexpr int kColZcr = 0;
inline constexpr int kColRms = 1;
inline constexpr int kColF0 = 2;
inline constexpr int kColHnr = 3;
inline constexpr int kColMfcc1 = 4;

// Functional order within each 12-value block.
enum Functional : int {
  kMean = 0,
  kStddev,
  kSkewness,
  kKurtosis,
  kMin,
  kMax,
  kRange,
  kMinPos,
  kMaxPos,
  kLinregOffset,
  kLinregSlope,
  kLinregMse,
};

inline constexpr double kMinF0Hz = 60.0;
inline constexpr double kMaxF0Hz = 500.0;
inline constexpr double kVoicingThreshold = 0.3;
inline constexpr double kVoicingMinRms = 1e-4;
inline constexpr double kHnrLimitDb = 100.0;
inline constexpr double kLogFloor = 1e-10;

using LldRow = std::array<double, kLldCount>;
using FeatureVector = std::array<double, kFeatureDim>;
using FunctionalSet = std::array<double, kNumFunctionals>;

/// frames x 16 descriptor matrix; see the kCol* constants for column order.
struct LldMatrix {
  std::vector<LldRow> rows;

  std::size_t frames() const { return rows.size(); }
  std::vector<double> column(int c) const {
    std::vector<double> out(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) out[t] = rows[t][static_cast<std::size_t>(c)];
    return out;
  }
};

struct FrameGeometry {
  std::size_t length = 0;
  std::size_t hop = 0;
};

inline FrameGeometry frame_geometry(int sample_rate, double frame_ms, double hop_ms) {
  if (!(frame_ms > 0.0) || !(hop_ms > 0.0)) throw Error("frame and hop durations must be positive");
  if (hop_ms > frame_ms) throw Error("hop must not exceed frame length");
  FrameGeometry g;
  g.length = static_cast<std::size_t>(std::floor(sample_rate * frame_ms / 1000.0));
  g.hop = static_cast<std::size_t>(std::floor(sample_rate * hop_ms / 1000.0));
  if (g.length == 0 || g.hop == 0) throw Error("frame or hop shorter than one sample");
  return g;
}

/// Splits the clip into overlapping frames. Inputs shorter than one frame
/// yield a single zero-padded frame.
inline std::vector<std::vector<double>> frame_signal(const AudioClip& clip, double frame_ms, double hop_ms) {
  const FrameGeometry g = frame_geometry(clip.sample_rate, frame_ms, hop_ms);
  const std::size_t n = clip.samples.size();
  std::vector<std::vector<double>> frames;
  if (n < g.length) {
    std::vector<double> f(g.length, 0.0);
    std::copy(clip.samples.begin(), clip.samples.end(), f.begin());
    frames.push_back(std::move(f));
    return frames;
  }
  const std::size_t count = (n - g.length) / g.hop + 1;
  frames.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto begin = clip.samples.begin() + static_cast<std::ptrdiff_t>(i * g.hop);
    frames.emplace_back(begin, begin + static_cast<std::ptrdiff_t>(g.length));
  }
  return frames;
}

// ---------------------------------------------------------------------------
// Spectral helpers

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Precomputed Hann window, triangular mel filterbank and DCT-II basis for
/// one (sample rate, frame length) pair.
class MfccComputer {
 public:
  MfccComputer(int sample_rate, std::size_t frame_length)
      : frame_length_(frame_length), fft_size_(next_pow2(frame_length)) {
    window_.resize(frame_length);
    for (std::size_t i = 0; i < frame_length; ++i) {
      window_[i] = frame_length > 1 ? 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                           static_cast<double>(frame_length - 1))
                                    : 1.0;
    }
    const std::size_t bins = fft_size_ / 2 + 1;
    const double mel_hi = hz_to_mel(sample_rate / 2.0);
    std::array<double, kNumMelFilters + 2> edges{};
    for (int m = 0; m < kNumMelFilters + 2; ++m) {
      edges[static_cast<std::size_t>(m)] = mel_to_hz(mel_hi * m / (kNumMelFilters + 1));
    }
    filters_.assign(kNumMelFilters, std::vector<double>(bins, 0.0));
    for (int m = 0; m < kNumMelFilters; ++m) {
      const double lo = edges[static_cast<std::size_t>(m)];
      const double mid = edges[static_cast<std::size_t>(m) + 1];
      const double hi = edges[static_cast<std::size_t>(m) + 2];
      for (std::size_t k = 0; k < bins; ++k) {
        const double f = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size_);
        double w = 0.0;
        if (f >= lo && f <= mid && mid > lo) {
          w = (f - lo) / (mid - lo);
        } else if (f > mid && f <= hi && hi > mid) {
          w = (hi - f) / (hi - mid);
        }
        filters_[static_cast<std::size_t>(m)][k] = w;
      }
    }
    const double norm = std::sqrt(2.0 / kNumMelFilters);
    for (int k = 0; k < kNumMfcc; ++k) {
      for (int m = 0; m < kNumMelFilters; ++m) {
        dct_[static_cast<std::size_t>(k)][static_cast<std::size_t>(m)] =
            norm * std::cos(std::numbers::pi * (k + 1) * (m + 0.5) / kNumMelFilters);
      }
    }
  }

  std::array<double, kNumMfcc> compute(std::span<const double> frame) const {
    std::vector<std::complex<double>> buf(fft_size_, 0.0);
    for (std::size_t i = 0; i < frame_length_; ++i) buf[i] = frame[i] * window_[i];
    fft_inplace(buf);
    std::array<double, kNumMelFilters> log_energy{};
    for (std::size_t m = 0; m < kNumMelFilters; ++m) {
      double e = 0.0;
      const auto& filt = filters_[m];
      for (std::size_t k = 0; k < filt.size(); ++k) {
        if (filt[k] != 0.0) e += filt[k] * std::norm(buf[k]);
      }
      log_energy[m] = std::log(std::max(e, kLogFloor));
    }
    std::array<double, kNumMfcc> out{};
    for (std::size_t k = 0; k < kNumMfcc; ++k) {
      double acc = 0.0;
      for (std::size_t m = 0; m < kNumMelFilters; ++m) acc += dct_[k][m] * log_energy[m];
      out[k] = acc;
    }
    return out;
  }

 private:
  std::size_t frame_length_;
  std::size_t fft_size_;
  std::vector<double> window_;
  std::vector<std::vector<double>> filters_;
  std::array<std::array<double, kNumMelFilters>, kNumMfcc> dct_{};
};

// ---------------------------------------------------------------------------
// Time-domain descriptors

inline double zero_crossing_rate(std::span<const double> frame) {
  std::size_t changes = 0;
  for (std::size_t i = 1; i < frame.size(); ++i) {
    if ((frame[i - 1] < 0.0) != (frame[i] < 0.0)) ++changes;
  }
  return static_cast<double>(changes) / static_cast<double>(frame.size());
}

inline double rms_energy(std::span<const double> frame) {
  double acc = 0.0;
  for (double x : frame) acc += x * x;
  return std::sqrt(acc / static_cast<double>(frame.size()));
}

struct PitchEstimate {
  double f0 = 0.0;   // Hz, 0 when unvoiced
  double hnr = 0.0;  // dB, 0 when unvoiced
  double peak = 0.0; // normalized autocorrelation at the selected lag
  bool voiced = false;
};

/// Normalized autocorrelation pitch tracker. The lag is the shortest local
/// maximum within 90% of the best peak in the 60-500 Hz range, refined by
/// parabolic interpolation.
inline PitchEstimate estimate_pitch(std::span<const double> frame, int sample_rate, double rms) {
  PitchEstimate est;
  const std::size_t n = frame.size();
  const auto min_lag = static_cast<std::size_t>(std::floor(sample_rate / kMaxF0Hz));
  auto max_lag = static_cast<std::size_t>(std::ceil(sample_rate / kMinF0Hz));
  if (n < 4 || min_lag < 2) return est;
  max_lag = std::min(max_lag, (2 * n) / 3);
  if (max_lag <= min_lag + 1) return est;

  double mean = 0.0;
  for (double x : frame) mean += x;
  mean /= static_cast<double>(n);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = frame[i] - mean;

  // r[lag] for lag in [min_lag - 1, max_lag + 1]
  const std::size_t lo = min_lag - 1;
  const std::size_t hi = max_lag + 1;
  std::vector<double> r(hi + 1, 0.0);
  for (std::size_t lag = lo; lag <= hi; ++lag) {
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) {
      xy += x[t] * x[t + lag];
      xx += x[t] * x[t];
      yy += x[t + lag] * x[t + lag];
    }
    const double denom = std::sqrt(xx * yy);
    r[lag] = denom > 0.0 ? xy / denom : 0.0;
  }

  double best = -1.0;
  for (std::size_t lag = min_lag; lag <= max_lag; ++lag) {
    if (r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1]) best = std::max(best, r[lag]);
  }
  if (best <= 0.0) return est;

  std::size_t chosen = 0;
  for (std::size_t lag = min_lag; lag <= max_lag; ++lag) {
    if (r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1] && r[lag] >= 0.9 * best) {
      chosen = lag;
      break;
    }
  }

  const double ym = r[chosen - 1], y0 = r[chosen], yp = r[chosen + 1];
  const double curvature = ym - 2.0 * y0 + yp;
  double offset = 0.0;
  double peak = y0;
  if (curvature < 0.0) {
    offset = std::clamp(0.5 * (ym - yp) / curvature, -0.5, 0.5);
    peak = y0 - 0.25 * (ym - yp) * offset;
  }
  peak = std::min(peak, 1.0);
  est.peak = peak;

  if (peak < kVoicingThreshold || rms < kVoicingMinRms) return est;
  est.voiced = true;
  est.f0 = sample_rate / (static_cast<double>(chosen) + offset);
  const double rc = std::clamp(peak, 1e-300, 1.0);
  double hnr = rc >= 1.0 ? kHnrLimitDb : 10.0 * std::log10(rc / (1.0 - rc));
  est.hnr = std::clamp(hnr, -kHnrLimitDb, kHnrLimitDb);
  return est;
}

inline LldMatrix extract_lld(const AudioClip& clip) {
  clip.validate();
  const auto frames = frame_signal(clip, kFrameMs, kHopMs);
  const MfccComputer mfcc(clip.sample_rate, frames.front().size());
  LldMatrix out;
  out.rows.reserve(frames.size());
  for (const auto& frame : frames) {
    LldRow row{};
    row[kColZcr] = zero_crossing_rate(frame);
    row[kColRms] = rms_energy(frame);
    const PitchEstimate pitch = estimate_pitch(frame, clip.sample_rate, row[kColRms]);
    row[kColF0] = pitch.f0;
    row[kColHnr] = pitch.hnr;
    const auto cep = mfcc.compute(frame);
    std::copy(cep.begin(), cep.end(), row.begin() + kColMfcc1);
    out.rows.push_back(row);
  }
  return out;
}

/// Two-sided regression delta over +/-2 frames with edge replication.
inline LldMatrix delta(const LldMatrix& m) {
  if (m.rows.empty()) throw Error("delta: matrix has no frames");
  const auto last = static_cast<std::ptrdiff_t>(m.rows.size()) - 1;
  auto at = [&](std::ptrdiff_t t) -> const LldRow& {
    return m.rows[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(t, 0, last))];
  };
  constexpr double kDenominator = 2.0 * (1.0 + 4.0);
  LldMatrix out;
  out.rows.resize(m.rows.size());
  for (std::ptrdiff_t t = 0; t <= last; ++t) {
    for (std::size_t c = 0; c < kLldCount; ++c) {
      double acc = 0.0;
      for (int k = 1; k <= 2; ++k) acc += k * (at(t + k)[c] - at(t - k)[c]);
      out.rows[static_cast<std::size_t>(t)][c] = acc / kDenominator;
    }
  }
  return out;
}

inline FunctionalSet functionals(std::span<const double> contour) {
  if (contour.empty()) throw Error("functionals: empty contour");
  const std::size_t n = contour.size();
  const double dn = static_cast<double>(n);
  FunctionalSet f{};

  std::size_t imin = 0, imax = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (contour[i] < contour[imin]) imin = i;
    if (contour[i] > contour[imax]) imax = i;
  }
  const double vmin = contour[imin];
  const double vmax = contour[imax];

  // Shifting by the minimum keeps the mean of a constant contour exact.
  double shifted = 0.0;
  for (double x : contour) shifted += x - vmin;
  const double mean = vmin + shifted / dn;

  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : contour) {
    const double d = x - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= dn;
  m3 /= dn;
  m4 /= dn;
  const double sd = std::sqrt(m2);

  f[kMean] = mean;
  f[kStddev] = sd;
  // Variances this small would overflow the standardized moments.
  if (m2 > 1e-200) {
    f[kSkewness] = m3 / (m2 * sd);
    f[kKurtosis] = m4 / (m2 * m2);
  }
  f[kMin] = vmin;
  f[kMax] = vmax;
  f[kRange] = vmax - vmin;
  if (n > 1) {
    f[kMinPos] = static_cast<double>(imin) / (dn - 1.0);
    f[kMaxPos] = static_cast<double>(imax) / (dn - 1.0);
  }

  const double tbar = (dn - 1.0) / 2.0;
  double stt = 0.0, sty = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = static_cast<double>(i) - tbar;
    stt += dt * dt;
    sty += dt * (contour[i] - mean);
  }
  const double slope = stt > 0.0 ? sty / stt : 0.0;
  const double offset = mean - slope * tbar;
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = contour[i] - (offset + slope * static_cast<double>(i));
    sse += e * e;
  }
  f[kLinregOffset] = offset;
  f[kLinregSlope] = slope;
  f[kLinregMse] = sse / dn;
  return f;
}

/// Packs functionals of the 16 static and 16 delta contours, contour-major.
inline FeatureVector pack_features(const LldMatrix& lld, const LldMatrix& deltas) {
  FeatureVector out{};
  for (int c = 0; c < kNumContours; ++c) {
    const auto col = c < kLldCount ? lld.column(c) : deltas.column(c - kLldCount);
    const FunctionalSet fs = functionals(col);
    std::copy(fs.begin(), fs.end(), out.begin() + c * kNumFunctionals);
  }
  return out;
}

inline FeatureVector extract_features(const AudioClip& clip) {
  const LldMatrix lld = extract_lld(clip);
  return pack_features(lld, delta(lld));
}

}  // namespace emopred::afeat
