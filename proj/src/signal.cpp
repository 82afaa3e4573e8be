#include "dblstm/signal.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <string>

namespace dblstm {

char label_to_char(Label l) {
  switch (l) {
    case Label::N: return 'N';
    case Label::L: return 'L';
    case Label::R: return 'R';
    case Label::A: return 'A';
    case Label::V: return 'V';
  }
  throw parse_error("label_to_char: invalid label value");
}

Label label_from_char(char c) {
  switch (c) {
    case 'N': return Label::N;
    case 'L': return Label::L;
    case 'R': return Label::R;
    case 'A': return Label::A;
    case 'V': return Label::V;
    default:
      throw parse_error(std::string("unknown beat label '") + c + "' (expected N, L, R, A or V)");
  }
}

namespace {

// Daubechies-4 scaling filter, ascending; sums to sqrt(2).
constexpr std::size_t kFilterLen = 8;
constexpr double kRecLo[kFilterLen] = {
    0.23037781330885523,  0.7148465705525415,   0.6308807679295904,  -0.02798376941698385,
    -0.18703481171888114, 0.030841381835986965, 0.032883011666982945, -0.010597401784997278};

struct WaveletFilters {
  double dec_lo[kFilterLen];
  double dec_hi[kFilterLen];
  double rec_lo[kFilterLen];
  double rec_hi[kFilterLen];

  WaveletFilters() {
    for (std::size_t i = 0; i < kFilterLen; ++i) {
      rec_lo[i] = kRecLo[i];
      rec_hi[i] = ((i % 2 == 0) ? 1.0 : -1.0) * kRecLo[kFilterLen - 1 - i];
    }
    for (std::size_t i = 0; i < kFilterLen; ++i) {
      dec_lo[i] = rec_lo[kFilterLen - 1 - i];
      dec_hi[i] = rec_hi[kFilterLen - 1 - i];
    }
  }
};

const WaveletFilters& filters() {
  static const WaveletFilters f;
  return f;
}

// Symmetric (edge-repeating) extension: ... x1 x0 | x0 x1 ... xN-1 | xN-1 ...
double sym_at(const std::vector<double>& x, long long i) {
  const long long n = static_cast<long long>(x.size());
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return x[static_cast<std::size_t>(i)];
}

// One analysis level: convolve with the decimation filters against the
// symmetric extension and keep odd-phase samples.
void dwt_level(const std::vector<double>& x, std::vector<double>& ca, std::vector<double>& cd) {
  const WaveletFilters& f = filters();
  const std::size_t out_len = (x.size() + kFilterLen - 1) / 2;
  ca.assign(out_len, 0.0);
  cd.assign(out_len, 0.0);
  for (std::size_t i = 0; i < out_len; ++i) {
    double lo = 0.0, hi = 0.0;
    for (std::size_t j = 0; j < kFilterLen; ++j) {
      const double v = sym_at(x, 2 * static_cast<long long>(i) + 1 - static_cast<long long>(j));
      lo += f.dec_lo[j] * v;
      hi += f.dec_hi[j] * v;
    }
    ca[i] = lo;
    cd[i] = hi;
  }
}

// One synthesis level: full convolution of the upsampled coefficients with
// the reconstruction filters, edges trimmed, then cut to the stored length.
std::vector<double> idwt_level(const std::vector<double>& ca, const std::vector<double>& cd,
                               std::size_t out_len) {
  const WaveletFilters& f = filters();
  const std::size_t rec_len = 2 * ca.size() - kFilterLen + 2;
  std::vector<double> rec(rec_len, 0.0);
  for (std::size_t j = 0; j < rec_len; ++j) {
    double acc = 0.0;
    // filter tap index base - 2k must lie in [0, L)
    const long long base = static_cast<long long>(j) + static_cast<long long>(kFilterLen) - 2;
    const long long a = base - static_cast<long long>(kFilterLen) + 1;
    long long k_lo = (a >= 0) ? (a + 1) / 2 : a / 2;  // ceil(a / 2)
    long long k_hi = base / 2;
    k_lo = std::max(k_lo, 0LL);
    k_hi = std::min(k_hi, static_cast<long long>(ca.size()) - 1);
    for (long long k = k_lo; k <= k_hi; ++k) {
      const std::size_t tap = static_cast<std::size_t>(base - 2 * k);
      acc += ca[static_cast<std::size_t>(k)] * f.rec_lo[tap] +
             cd[static_cast<std::size_t>(k)] * f.rec_hi[tap];
    }
    rec[j] = acc;
  }
  rec.resize(out_len);
  return rec;
}

double soft_threshold(double v, double thr) {
  const double mag = std::abs(v) - thr;
  if (mag <= 0.0) return 0.0;
  return (v < 0.0) ? -mag : mag;
}

}  // namespace

Series dwt_denoise(const Series& s, double threshold, std::size_t levels) {
  if (s.samples.size() < 16) {
    throw config_error("dwt_denoise: series length " + std::to_string(s.samples.size()) +
                       " below the minimum of 16");
  }
  if (threshold < 0.0) throw config_error("dwt_denoise: negative threshold");
  if (levels < 1) throw config_error("dwt_denoise: levels must be >= 1");

  std::vector<std::vector<double>> details(levels);
  std::vector<std::size_t> lengths(levels);
  std::vector<double> approx = s.samples;
  for (std::size_t lv = 0; lv < levels; ++lv) {
    lengths[lv] = approx.size();
    std::vector<double> ca, cd;
    dwt_level(approx, ca, cd);
    details[lv] = std::move(cd);
    approx = std::move(ca);
  }

  for (auto& cd : details)
    for (double& v : cd) v = soft_threshold(v, threshold);

  for (std::size_t lv = levels; lv-- > 0;) {
    approx = idwt_level(approx, details[lv], lengths[lv]);
  }

  Series out;
  out.sample_rate = s.sample_rate;
  out.samples = std::move(approx);
  return out;
}

std::vector<double> zscore(const std::vector<double>& x) {
  if (x.empty()) throw config_error("zscore: empty input");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());  // population variance
  std::vector<double> out(x.size(), 0.0);
  if (var > 0.0) {
    const double sd = std::sqrt(var);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / sd;
  }
  return out;
}

Series zscore(const Series& s) {
  Series out;
  out.sample_rate = s.sample_rate;
  out.samples = zscore(s.samples);
  return out;
}

std::vector<double> rescale_to_amplitude(const std::vector<double>& x, double target) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak == 0.0 || target <= 0.0) return x;
  std::vector<double> out(x.size());
  const double s = target / peak;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * s;
  return out;
}

ForecastDataset make_forecast_pairs(const Series& s, std::size_t delay, std::size_t train_len) {
  if (train_len == 0) throw config_error("make_forecast_pairs: train_len must be positive");
  if (train_len + delay > s.samples.size()) {
    throw config_error("make_forecast_pairs: need " + std::to_string(train_len + delay) +
                       " samples, series has " + std::to_string(s.samples.size()));
  }
  ForecastDataset d;
  d.delay = delay;
  d.inputs = Matrix(1, train_len);
  d.targets = Matrix(1, train_len);
  for (std::size_t t = 0; t < train_len; ++t) {
    d.inputs(0, t) = s.samples[t];
    d.targets(0, t) = s.samples[t + delay];
  }
  return d;
}

ClassifyDataset window_dataset(const AnnotatedSeries& a, std::size_t k, std::size_t per_class,
                               bool denoise, double threshold) {
  if (k < 16) throw config_error("window_dataset: k below the minimum window length of 16");
  ClassifyDataset out;
  out.k = k;
  const std::size_t before = k / 2;
  const std::size_t n = a.series.samples.size();
  std::size_t taken[kNumLabels] = {0, 0, 0, 0, 0};

  for (const Annotation& ann : a.annotations) {
    const std::size_t li = static_cast<std::size_t>(ann.label);
    if (taken[li] >= per_class) continue;
    if (ann.sample_index < before || ann.sample_index - before + k > n) {
      ++out.skipped;
      continue;
    }
    const std::size_t start = ann.sample_index - before;
    std::vector<double> w(a.series.samples.begin() + static_cast<std::ptrdiff_t>(start),
                          a.series.samples.begin() + static_cast<std::ptrdiff_t>(start + k));
    if (denoise) {
      Series sw;
      sw.samples = std::move(w);
      w = dwt_denoise(sw, threshold).samples;
    }
    w = zscore(w);
    ClassifyWindow cw;
    cw.input = Matrix(1, k, std::move(w));
    cw.label = ann.label;
    out.windows.push_back(std::move(cw));
    ++taken[li];
  }
  return out;
}

namespace {

struct Bump {
  double center;  // fraction of the period
  double amp;
  double sigma;   // fraction of the period
};

// Morphologies: a plain beat plus four deterministic variants — widened R,
// doubled R with flipped T, advanced onset with a flattened P, and an
// advanced wide QRS with no P and a flipped T.
std::vector<Bump> bumps_for(Label cls) {
  const Bump P{0.18, 0.15, 0.030};
  const Bump Q{0.33, -0.12, 0.012};
  const Bump R{0.40, 1.00, 0.014};
  const Bump S{0.47, -0.25, 0.014};
  const Bump T{0.70, 0.35, 0.055};
  switch (cls) {
    case Label::N:
      return {P, Q, R, S, T};
    case Label::L:
      return {P, Q, {R.center, 0.85, R.sigma * 2.6}, S, T};
    case Label::R:
      return {P, Q, R, S, {0.52, 0.45, 0.020}, {T.center, -T.amp, T.sigma}};
    case Label::A: {
      const double shift = -0.08;
      return {{P.center + shift, 0.05, P.sigma},
              {Q.center + shift, Q.amp, Q.sigma},
              {R.center + shift, R.amp, R.sigma},
              {S.center + shift, S.amp, S.sigma},
              {T.center + shift, T.amp, T.sigma}};
    }
    case Label::V: {
      const double shift = -0.06;
      return {{Q.center + shift, Q.amp, Q.sigma},
              {R.center + shift, R.amp, R.sigma * 2.2},
              {S.center + shift, S.amp, S.sigma},
              {T.center + shift, -T.amp, T.sigma}};
    }
  }
  throw config_error("synth_ecg: invalid class label");
}

// Fraction of the period where the class's R peak sits.
double r_peak_fraction(Label cls) {
  switch (cls) {
    case Label::A: return 0.40 - 0.08;
    case Label::V: return 0.40 - 0.06;
    default: return 0.40;
  }
}

}  // namespace

AnnotatedSeries synth_ecg(const std::vector<Label>& classes, std::size_t beats_per_class,
                          std::size_t period, double noise_amp, std::uint64_t seed) {
  if (period < 40) throw config_error("synth_ecg: period must be at least 40 samples");
  if (classes.empty()) throw config_error("synth_ecg: no classes requested");
  if (beats_per_class == 0) throw config_error("synth_ecg: beats_per_class must be positive");

  const std::size_t pad = period / 2;
  const std::size_t beats = classes.size() * beats_per_class;
  const std::size_t total = beats * period + 2 * pad;

  AnnotatedSeries out;
  out.series.sample_rate = 360.0;
  out.series.samples.assign(total, 0.0);
  out.annotations.reserve(beats);

  std::size_t beat_start = pad;
  for (std::size_t rep = 0; rep < beats_per_class; ++rep) {
    for (Label cls : classes) {  // round-robin keeps classes interleaved
      const std::vector<Bump> bumps = bumps_for(cls);
      for (std::size_t s = 0; s < period; ++s) {
        const double t = static_cast<double>(s) / static_cast<double>(period);
        double v = 0.0;
        for (const Bump& b : bumps) {
          const double z = (t - b.center) / b.sigma;
          v += b.amp * std::exp(-0.5 * z * z);
        }
        out.series.samples[beat_start + s] += v;
      }
      Annotation ann;
      ann.sample_index =
          beat_start + static_cast<std::size_t>(std::lround(r_peak_fraction(cls) *
                                                            static_cast<double>(period)));
      ann.label = cls;
      out.annotations.push_back(ann);
      beat_start += period;
    }
  }

  if (noise_amp > 0.0) {
    Rng rng(seed);
    for (double& v : out.series.samples) v += rng.uniform(-noise_amp, noise_amp);
  }
  return out;
}

namespace {

// One CSV record `first,second`; returns the two fields. Rejects anything
// other than exactly one comma.
std::pair<std::string, std::string> split_csv_pair(const std::string& line, std::size_t lineno,
                                                   const std::string& path) {
  const std::size_t comma = line.find(',');
  if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
    throw parse_error(path + ":" + std::to_string(lineno) + ": expected `a,b`, got \"" + line +
                      "\"");
  }
  return {line.substr(0, comma), line.substr(comma + 1)};
}

std::size_t parse_index(const std::string& field, std::size_t lineno, const std::string& path) {
  std::size_t value = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || field.empty()) {
    throw parse_error(path + ":" + std::to_string(lineno) + ": bad index \"" + field + "\"");
  }
  return value;
}

double parse_value(const std::string& field, std::size_t lineno, const std::string& path) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || field.empty() || !std::isfinite(value)) {
    throw parse_error(path + ":" + std::to_string(lineno) + ": bad value \"" + field + "\"");
  }
  return value;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

Series load_csv_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error(path + ": cannot open");
  Series s;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto [idx_field, val_field] = split_csv_pair(line, lineno, path);
    parse_index(idx_field, lineno, path);
    s.samples.push_back(parse_value(val_field, lineno, path));
  }
  if (s.samples.empty()) throw parse_error(path + ": no samples");
  return s;
}

std::vector<Annotation> load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error(path + ": cannot open");
  std::vector<Annotation> anns;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto [idx_field, label_field] = split_csv_pair(line, lineno, path);
    Annotation a;
    a.sample_index = parse_index(idx_field, lineno, path);
    if (label_field.size() != 1) {
      throw parse_error(path + ":" + std::to_string(lineno) + ": bad label \"" + label_field +
                        "\"");
    }
    try {
      a.label = label_from_char(label_field[0]);
    } catch (const parse_error& e) {
      throw parse_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!anns.empty() && a.sample_index <= anns.back().sample_index) {
      throw parse_error(path + ":" + std::to_string(lineno) +
                        ": annotation indices must be strictly increasing");
    }
    anns.push_back(a);
  }
  return anns;
}

void save_csv_series(const std::string& path, const Series& s) {
  std::ofstream out(path);
  if (!out) throw parse_error(path + ": cannot open for writing");
  char buf[64];
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, s.samples[i]);
    out << buf;
  }
}

void save_annotations(const std::string& path, const std::vector<Annotation>& annotations) {
  std::ofstream out(path);
  if (!out) throw parse_error(path + ": cannot open for writing");
  for (const Annotation& a : annotations) {
    out << a.sample_index << ',' << label_to_char(a.label) << '\n';
  }
}

}  // namespace dblstm
