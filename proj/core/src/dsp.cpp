// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "rqsep/error.hpp"

namespace rqsep::dsp {
namespace {

// The FFTW planner is not re-entrant; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

template <typename T>
std::unique_ptr<T[], FftwDeleter> fftw_buffer(std::size_t n) {
  return std::unique_ptr<T[], FftwDeleter>(static_cast<T*>(fftw_malloc(sizeof(T) * n)));
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

void Waveform::validate() const {
  if (sample_rate <= 0) fail(ErrorKind::kInvalidArgument, "waveform sample rate must be positive");
  for (double s : samples) {
    if (!std::isfinite(s)) fail(ErrorKind::kInvalidArgument, "waveform contains non-finite samples");
  }
}

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) fail(ErrorKind::kInvalidArgument, "resample: target rate must be positive");
  w.validate();
  if (target_rate == w.sample_rate) return w;

  const auto src = static_cast<std::int64_t>(w.sample_rate);
  const auto dst = static_cast<std::int64_t>(target_rate);
  const auto n_in = static_cast<std::int64_t>(w.samples.size());
  const std::int64_t n_out = (2 * n_in * dst + src) / (2 * src);

  std::vector<double> out(static_cast<std::size_t>(n_out));
  for (std::int64_t i = 0; i < n_out; ++i) {
    // Exact rational source position i*src/dst.
    const std::int64_t num = i * src;
    const std::int64_t idx = num / dst;
    const double frac = static_cast<double>(num % dst) / static_cast<double>(dst);
    const double a = w.samples[static_cast<std::size_t>(std::min(idx, n_in - 1))];
    const double b = w.samples[static_cast<std::size_t>(std::min(idx + 1, n_in - 1))];
    out[static_cast<std::size_t>(i)] = a + frac * (b - a);
  }
  return Waveform(std::move(out), target_rate);
}

std::vector<double> hann_window(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int n = 0; n < length; ++n) {
    w[static_cast<std::size_t>(n)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / length);
  }
  return w;
}

int frame_count(std::size_t length, int window_len, int hop) {
  if (length < static_cast<std::size_t>(window_len)) return 0;
  return static_cast<int>((length - static_cast<std::size_t>(window_len)) / static_cast<std::size_t>(hop)) + 1;
}

ComplexMatrix stft(std::span<const double> x, int window_len, int hop) {
  if (hop < 1 || window_len < hop) {
    fail(ErrorKind::kInvalidArgument, "stft: require window_len >= hop >= 1");
  }
  if (x.size() < static_cast<std::size_t>(window_len)) {
    fail(ErrorKind::kInvalidArgument, "stft: input too short for one frame of " + std::to_string(window_len) + " samples");
  }
  const int n = window_len;
  const int bins = n / 2 + 1;
  const int frames = frame_count(x.size(), window_len, hop);
  const auto window = hann_window(n);
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));

  auto in = fftw_buffer<double>(static_cast<std::size_t>(n));
  auto out = fftw_buffer<fftw_complex>(static_cast<std::size_t>(bins));
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(n, in.get(), out.get(), FFTW_ESTIMATE);
  }

  ComplexMatrix spec(frames, bins);
  for (int t = 0; t < frames; ++t) {
    const std::size_t off = static_cast<std::size_t>(t) * static_cast<std::size_t>(hop);
    for (int i = 0; i < n; ++i) in[i] = x[off + static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
    fftw_execute(plan);
    for (int k = 0; k < bins; ++k) spec(t, k) = std::complex<double>(out[k][0], out[k][1]) * norm;
  }
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  return spec;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(int sample_rate, int n_fft, int n_mels)
    : sample_rate_(sample_rate), n_fft_(n_fft) {
  if (sample_rate <= 0 || n_fft < 2 || n_mels < 1) {
    fail(ErrorKind::kInvalidArgument, "mel filterbank: invalid geometry");
  }
  const int bins = n_fft / 2 + 1;
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_max * i / (n_mels + 1));
  }

  weights_ = Matrix::Zero(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m + 1)];
    const double hi = edges[static_cast<std::size_t>(m + 2)];
    bool any = false;
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      const double w = std::max(0.0, std::min((f - lo) / (center - lo), (hi - f) / (hi - center)));
      if (w > 0.0) {
        weights_(m, k) = w;
        any = true;
      }
    }
    if (!any) {
      const int k = std::clamp(static_cast<int>(std::lround(center * n_fft / sample_rate)), 0, bins - 1);
      weights_(m, k) = 1.0;
    }
  }
}

struct MelAnalyzer::Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

MelAnalyzer::MelAnalyzer(int sample_rate, int scale)
    : scale_(scale),
      window_(hann_window(scale)),
      filterbank_(sample_rate, scale),
      plans_(std::make_unique<Plans>()) {
  if (!is_power_of_two(scale) || scale < 4) {
    fail(ErrorKind::kInvalidArgument, "mel scale must be a power of two >= 4, got " + std::to_string(scale));
  }
  auto re = fftw_buffer<double>(static_cast<std::size_t>(scale));
  auto cx = fftw_buffer<fftw_complex>(static_cast<std::size_t>(scale / 2 + 1));
  std::lock_guard lock(planner_mutex());
  plans_->forward = fftw_plan_dft_r2c_1d(scale, re.get(), cx.get(), FFTW_ESTIMATE);
  plans_->inverse = fftw_plan_dft_c2r_1d(scale, cx.get(), re.get(), FFTW_ESTIMATE);
}

MelAnalyzer::~MelAnalyzer() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plans_->forward);
  fftw_destroy_plan(plans_->inverse);
}

Matrix MelAnalyzer::forward(std::span<const double> x, ComplexFrames* spectra) const {
  const int n = scale_;
  const int bins = n / 2 + 1;
  const int frames = frame_count(x.size(), n, hop());
  if (frames == 0) {
    fail(ErrorKind::kInvalidArgument, "mel_spectrogram: scale " + std::to_string(n) + " exceeds input length " + std::to_string(x.size()));
  }
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));

  auto in = fftw_buffer<double>(static_cast<std::size_t>(n));
  auto out = fftw_buffer<fftw_complex>(static_cast<std::size_t>(bins));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> power(frames, bins);
  if (spectra) spectra->resize(frames, bins);
  for (int t = 0; t < frames; ++t) {
    const std::size_t off = static_cast<std::size_t>(t) * static_cast<std::size_t>(hop());
    for (int i = 0; i < n; ++i) in[i] = x[off + static_cast<std::size_t>(i)] * window_[static_cast<std::size_t>(i)];
    fftw_execute_dft_r2c(plans_->forward, in.get(), out.get());
    for (int k = 0; k < bins; ++k) {
      const double re = out[k][0] * norm;
      const double im = out[k][1] * norm;
      power(t, k) = re * re + im * im;
      if (spectra) (*spectra)(t, k) = {re, im};
    }
  }
  return power * filterbank_.weights().transpose();
}

void MelAnalyzer::backward(const ComplexFrames& spectra, const Matrix& grad_mel,
                           std::span<double> grad_x) const {
  const int n = scale_;
  const int bins = n / 2 + 1;
  const auto frames = static_cast<int>(spectra.rows());
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> grad_power =
      grad_mel * filterbank_.weights();  // frames x bins
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));

  auto cx = fftw_buffer<fftw_complex>(static_cast<std::size_t>(bins));
  auto re = fftw_buffer<double>(static_cast<std::size_t>(n));
  for (int t = 0; t < frames; ++t) {
    // Real inverse transform of g_k X_k; the DC and Nyquist terms are
    // doubled so that y = 2 Re sum_k g_k X_k e^{i 2 pi k n / N}.
    for (int k = 0; k < bins; ++k) {
      const std::complex<double> z = grad_power(t, k) * spectra(t, k);
      if (k == 0 || k == n / 2) {
        cx[k][0] = 2.0 * z.real();
        cx[k][1] = 0.0;
      } else {
        cx[k][0] = z.real();
        cx[k][1] = z.imag();
      }
    }
    fftw_execute_dft_c2r(plans_->inverse, cx.get(), re.get());
    const std::size_t off = static_cast<std::size_t>(t) * static_cast<std::size_t>(hop());
    for (int i = 0; i < n; ++i) {
      grad_x[off + static_cast<std::size_t>(i)] += window_[static_cast<std::size_t>(i)] * re[i] * norm;
    }
  }
}

MelSpectrogram mel_spectrogram(const Waveform& w, int scale) {
  if (scale < 4 || !is_power_of_two(scale)) {
    fail(ErrorKind::kInvalidArgument, "mel_spectrogram: scale must be a power of two divisible by 4");
  }
  if (static_cast<std::size_t>(scale) > w.size()) {
    fail(ErrorKind::kInvalidArgument, "mel_spectrogram: scale " + std::to_string(scale) + " exceeds input length " + std::to_string(w.size()));
  }
  MelAnalyzer analyzer(w.sample_rate, scale);
  return MelSpectrogram{analyzer.forward(w.samples), scale, scale / 4};
}

Matrix log_mel(const MelSpectrogram& m, double eps) {
  if (!(eps > 0.0)) fail(ErrorKind::kInvalidArgument, "log_mel: eps must be positive");
  return m.frames.unaryExpr([eps](double v) { return std::log(std::max(v, eps)); });
}

}  // namespace rqsep::dsp
