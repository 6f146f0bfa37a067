#pragma once

// Signal metrics: RMS of the acceleration norm for position traces, and
// windowed RMS / median frequency features for scalar channels.

#include "rcmtel/spatial.hpp"

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <stdexcept>
#include <vector>

namespace rcmtel::metrics {

template <typename T>
struct SampledSignal {
  double rate = 0.0;  // Hz
  std::vector<T> samples;

  std::size_t size() const { return samples.size(); }
};

struct FeatureSeries {
  double window = 0.0;  // s
  double hop = 0.0;     // s
  std::vector<double> starts;  // window start times, s from the first sample
  std::vector<double> values;
};

namespace detail {

template <typename T>
void require_rate(const SampledSignal<T>& sig) {
  if (!(sig.rate > 0.0 && std::isfinite(sig.rate))) throw std::invalid_argument("signal rate must be > 0");
}

struct Segmentation {
  std::size_t window;
  std::size_t hop;
  std::size_t count;
};

/// Windows start at multiples of `hop` samples; a trailing partial window
/// is discarded, so count = floor((N - window) / hop) + 1 when N >= window.
inline Segmentation segment(std::size_t n, double rate, double window_s, double hop_s, std::size_t min_window) {
  if (!(window_s > 0.0 && hop_s > 0.0)) throw std::invalid_argument("window and hop must be > 0");
  const auto window = static_cast<std::size_t>(std::llround(window_s * rate));
  const auto hop = static_cast<std::size_t>(std::llround(hop_s * rate));
  if (window < min_window)
    throw std::invalid_argument("window must span at least " + std::to_string(min_window) + " samples");
  if (hop < 1) throw std::invalid_argument("hop must span at least one sample");
  const std::size_t count = n >= window ? (n - window) / hop + 1 : 0;
  return {window, hop, count};
}

// The FFTW planner is not re-entrant; only fftw_execute may run concurrently.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(p);
  }
};
struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace detail

/// Second-order central difference; the result has two fewer samples and
/// sample i corresponds to input sample i + 1.
inline SampledSignal<Vec3> acceleration(const SampledSignal<Vec3>& positions) {
  detail::require_rate(positions);
  if (positions.size() < 3) throw std::invalid_argument("acceleration needs at least 3 samples");
  const double r2 = positions.rate * positions.rate;
  SampledSignal<Vec3> out{positions.rate, {}};
  out.samples.reserve(positions.size() - 2);
  for (std::size_t i = 1; i + 1 < positions.size(); ++i) {
    const auto& s = positions.samples;
    out.samples.push_back((s[i + 1] - 2.0 * s[i] + s[i - 1]) * r2);
  }
  return out;
}

inline double rms_accel_norm(const SampledSignal<Vec3>& positions) {
  const auto acc = acceleration(positions);
  double sum = 0.0;
  for (const auto& a : acc.samples) sum += a.squaredNorm();
  return std::sqrt(sum / static_cast<double>(acc.size()));
}

inline double rms(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double sum = 0.0;
  for (double x : xs) sum += x * x;
  return std::sqrt(sum / static_cast<double>(xs.size()));
}

inline FeatureSeries window_rms(const SampledSignal<double>& sig, double window_s, double hop_s) {
  detail::require_rate(sig);
  const auto seg = detail::segment(sig.size(), sig.rate, window_s, hop_s, 2);
  FeatureSeries out{window_s, hop_s, {}, {}};
  for (std::size_t w = 0; w < seg.count; ++w) {
    const std::size_t start = w * seg.hop;
    out.starts.push_back(static_cast<double>(start) / sig.rate);
    out.values.push_back(rms(std::span(sig.samples).subspan(start, seg.window)));
  }
  return out;
}

/// Median frequency of one window: mean removed, plain periodogram (no
/// taper), first bin whose cumulative one-sided power reaches half of the
/// total. An all-zero (or constant) window yields 0 Hz.
inline double median_frequency(std::span<const double> window, double rate) {
  const std::size_t n = window.size();
  std::unique_ptr<double, detail::FftwFree> in(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
  std::unique_ptr<fftw_complex, detail::FftwFree> out(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1))));
  std::unique_ptr<fftw_plan_s, detail::FftwPlanDeleter> plan;
  {
    std::lock_guard lock(detail::planner_mutex());
    plan.reset(fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE));
  }

  double mean = 0.0;
  double energy = 0.0;
  for (double x : window) {
    mean += x;
    energy += x * x;
  }
  mean /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) in.get()[i] = window[i] - mean;
  fftw_execute(plan.get());

  const std::size_t bins = n / 2 + 1;
  std::vector<double> power(bins);
  double total = 0.0;
  for (std::size_t k = 0; k < bins; ++k) {
    const double re = out.get()[k][0];
    const double im = out.get()[k][1];
    const bool unpaired = k == 0 || (n % 2 == 0 && k == n / 2);
    power[k] = (re * re + im * im) * (unpaired ? 1.0 : 2.0);
    total += power[k];
  }
  // Zero or constant windows carry no AC power; only rounding residue remains.
  if (!(total > energy * static_cast<double>(n) * 1e-24)) return 0.0;

  // Relative slack keeps exact half-power splits on the lower bin.
  const double half = 0.5 * total * (1.0 - 1e-9);
  double cumulative = 0.0;
  for (std::size_t k = 0; k < bins; ++k) {
    cumulative += power[k];
    if (cumulative >= half) return static_cast<double>(k) * rate / static_cast<double>(n);
  }
  return static_cast<double>(bins - 1) * rate / static_cast<double>(n);
}

inline FeatureSeries window_mdf(const SampledSignal<double>& sig, double window_s, double hop_s) {
  detail::require_rate(sig);
  const auto seg = detail::segment(sig.size(), sig.rate, window_s, hop_s, 64);
  FeatureSeries out{window_s, hop_s, {}, {}};
  for (std::size_t w = 0; w < seg.count; ++w) {
    const std::size_t start = w * seg.hop;
    out.starts.push_back(static_cast<double>(start) / sig.rate);
    out.values.push_back(median_frequency(std::span(sig.samples).subspan(start, seg.window), sig.rate));
  }
  return out;
}

}  // namespace rcmtel::metrics
