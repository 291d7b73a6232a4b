// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

// Deterministic signal-processing kernels: resampling, STFT, mel filterbanks
// and mel-spectrograms. Everything here is pure; filterbanks are immutable
// once built and may be shared across threads.

#pragma once

#include <complex>
#include <memory>
#include <span>
#include <vector>

#include "rqsep/tensor.hpp"

namespace rqsep::dsp {

inline constexpr int kMelBins = 64;
inline constexpr double kLogMelEps = 1e-5;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 22050;

  Waveform() = default;
  Waveform(std::vector<double> s, int rate) : samples(std::move(s)), sample_rate(rate) {}

  std::size_t size() const { return samples.size(); }
  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }

  // Throws kInvalidArgument on a non-positive rate or non-finite samples.
  void validate() const;
};

/// Linear-interpolation resampler. Output length is
/// round(T * target_rate / source_rate). Not band-limited.
Waveform resample(const Waveform& w, int target_rate);

using ComplexMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic>;
/// Frame-major complex spectra (frames x bins, row-major).
using ComplexFrames = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Periodic Hann window of the given length.
std::vector<double> hann_window(int length);

/// Hann-windowed one-sided STFT with orthonormal (1/sqrt(N)) scaling.
/// Rows are frames, columns are bins 0..window_len/2. Frame t covers samples
/// [t*hop, t*hop + window_len); frames that would overrun the input are
/// dropped, nothing is padded.
ComplexMatrix stft(std::span<const double> x, int window_len, int hop);

/// Number of complete frames of a center-less framing.
int frame_count(std::size_t length, int window_len, int hop);

class MelFilterbank {
 public:
  /// HTK-mel triangular filters over [0, rate/2]. A filter too narrow to
  /// cover any FFT bin gets unit weight on the bin nearest its center.
  MelFilterbank(int sample_rate, int n_fft, int n_mels = kMelBins);

  const Matrix& weights() const { return weights_; }  // n_mels x (n_fft/2 + 1)
  int sample_rate() const { return sample_rate_; }
  int n_fft() const { return n_fft_; }

 private:
  Matrix weights_;
  int sample_rate_;
  int n_fft_;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelSpectrogram {
  Matrix frames;  // num_frames x 64, non-negative power
  int scale = 0;
  int hop = 0;
};

MelSpectrogram mel_spectrogram(const Waveform& w, int scale);

/// Elementwise ln(max(entry, eps)).
Matrix log_mel(const MelSpectrogram& m, double eps = kLogMelEps);

// Reusable analysis at one scale with a backward pass, used by the spectral
// loss. Holds FFTW plans; one instance per thread.
class MelAnalyzer {
 public:
  MelAnalyzer(int sample_rate, int scale);
  ~MelAnalyzer();
  MelAnalyzer(const MelAnalyzer&) = delete;
  MelAnalyzer& operator=(const MelAnalyzer&) = delete;

  int scale() const { return scale_; }
  int hop() const { return scale_ / 4; }

  /// Mel power frames of x (frames x n_mels). When `spectra` is non-null the
  /// complex spectra are kept for backward().
  Matrix forward(std::span<const double> x, ComplexFrames* spectra = nullptr) const;

  /// Accumulates d loss / d x into grad_x given d loss / d mel frames.
  void backward(const ComplexFrames& spectra, const Matrix& grad_mel,
                std::span<double> grad_x) const;

 private:
  struct Plans;
  int scale_;
  std::vector<double> window_;
  MelFilterbank filterbank_;
  std::unique_ptr<Plans> plans_;
};

}  // namespace rqsep::dsp
