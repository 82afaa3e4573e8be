#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dblstm/matrix.hpp"

namespace dblstm {

struct Series {
  std::vector<double> samples;
  double sample_rate = 0.0;  // Hz; 0 for non-uniform series (e.g. monthly data)
};

enum class Label : int { N = 0, L = 1, R = 2, A = 3, V = 4 };
inline constexpr std::size_t kNumLabels = 5;

char label_to_char(Label l);
Label label_from_char(char c);  // throws parse_error on unknown symbols

struct Annotation {
  std::size_t sample_index = 0;
  Label label = Label::N;
};

struct AnnotatedSeries {
  Series series;
  std::vector<Annotation> annotations;  // strictly increasing sample_index
};

// Paired input/target rows for the delayed-forecast task:
// targets[t] == source[t + delay].
struct ForecastDataset {
  Matrix inputs;   // 1 x k
  Matrix targets;  // 1 x k
  std::size_t delay = 0;
};

struct ClassifyWindow {
  Matrix input;  // 1 x k
  Label label = Label::N;
};

struct ClassifyDataset {
  std::vector<ClassifyWindow> windows;
  std::size_t k = 0;
  std::size_t skipped = 0;  // annotations whose window fell outside the series
};

// Multi-level Daubechies-4 wavelet denoiser: detail coefficients are
// soft-thresholded, reconstruction keeps the input length. Symmetric
// (edge-repeating) boundary extension. threshold 0 round-trips the input.
Series dwt_denoise(const Series& s, double threshold = 0.04, std::size_t levels = 4);

// (x - mean) / population std; all zeros when the spread is zero.
std::vector<double> zscore(const std::vector<double>& x);
Series zscore(const Series& s);

// Scales so max |x| equals target (no-op for zero signals or target <= 0);
// keeps windowed values inside the saturating range of a tanh-output model.
std::vector<double> rescale_to_amplitude(const std::vector<double>& x, double target);

ForecastDataset make_forecast_pairs(const Series& s, std::size_t delay, std::size_t train_len);

// One window of k samples centered on each annotation (floor(k/2) before,
// k - floor(k/2) after), each window denoised then z-scored independently;
// at most per_class windows per label, in annotation order. Out-of-bounds
// windows are skipped and counted.
ClassifyDataset window_dataset(const AnnotatedSeries& a, std::size_t k, std::size_t per_class,
                               bool denoise = true, double threshold = 0.04);

// Synthetic five-class ECG: each beat is a sum of Gaussian bumps (P, Q, R, S,
// T) on a period grid, with deterministic per-class morphology changes (wide
// or doubled R waves, advanced onsets, flipped T). Beats cycle through
// `classes` round-robin; every R-peak is annotated. Half a period of baseline
// pads each end so any centered window of length <= period stays in bounds.
AnnotatedSeries synth_ecg(const std::vector<Label>& classes, std::size_t beats_per_class,
                          std::size_t period, double noise_amp, std::uint64_t seed);

// CSV loaders/writers. Series files: `index,value` per line, no header.
// Annotation files: `sample_index,label` with label in {N,L,R,A,V}.
Series load_csv_series(const std::string& path);
std::vector<Annotation> load_annotations(const std::string& path);
void save_csv_series(const std::string& path, const Series& s);
void save_annotations(const std::string& path, const std::vector<Annotation>& annotations);

}  // namespace dblstm
