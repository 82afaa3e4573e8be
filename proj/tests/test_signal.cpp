#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "dblstm/signal.hpp"

using namespace dblstm;

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double rmse_of(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean_of(a), mb = mean_of(b);
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

std::string temp_path(const char* name) {
  return std::string("signal_test_") + name;
}

}  // namespace

TEST_CASE("denoiser leaves constants essentially unchanged") {
  Series s;
  s.samples.assign(128, 2.5);
  Series d = dwt_denoise(s, 0.04);
  REQUIRE(d.samples.size() == 128);
  for (double x : d.samples) CHECK(x == doctest::Approx(2.5).epsilon(1e-10));
}

TEST_CASE("threshold zero round-trips the signal at assorted lengths") {
  for (std::size_t len : {16u, 33u, 100u, 128u, 200u}) {
    Rng rng(len);
    Series s;
    s.samples.resize(len);
    for (double& x : s.samples) x = rng.uniform(-1.0, 1.0);
    Series d = dwt_denoise(s, 0.0);
    REQUIRE(d.samples.size() == len);
    for (std::size_t i = 0; i < len; ++i) {
      CHECK(d.samples[i] == doctest::Approx(s.samples[i]).epsilon(1e-10));
    }
  }
}

TEST_CASE("denoising keeps a smooth sinusoid nearly intact") {
  Series s;
  s.samples.resize(256);
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    s.samples[i] = std::sin(2.0 * 3.14159265358979323846 * static_cast<double>(i) / 64.0);
  }
  Series d = dwt_denoise(s, 0.04);
  CHECK(correlation(s.samples, d.samples) >= 0.999);
}

TEST_CASE("denoising a noisy sinusoid moves it toward the clean one") {
  std::vector<double> clean(512);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    clean[i] = std::sin(2.0 * 3.14159265358979323846 * static_cast<double>(i) / 80.0);
  }
  Rng rng(7);
  Series noisy;
  noisy.samples = clean;
  for (double& x : noisy.samples) x += rng.uniform(-0.15, 0.15);
  Series d = dwt_denoise(noisy, 0.08);
  CHECK(rmse_of(d.samples, clean) < rmse_of(noisy.samples, clean));
}

TEST_CASE("zscore hand values and properties") {
  std::vector<double> z = zscore(std::vector<double>{1.0, 2.0, 3.0});
  REQUIRE(z.size() == 3);
  CHECK(z[0] == doctest::Approx(-1.224744871391589).epsilon(1e-14));
  CHECK(z[1] == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(z[2] == doctest::Approx(1.224744871391589).epsilon(1e-14));

  std::vector<double> flat = zscore(std::vector<double>{4.0, 4.0, 4.0});
  for (double x : flat) CHECK(x == 0.0);

  Rng rng(3);
  std::vector<double> v(200);
  for (double& x : v) x = rng.uniform(-5.0, 5.0);
  std::vector<double> zv = zscore(v);
  CHECK(mean_of(zv) == doctest::Approx(0.0).epsilon(1e-12));
  double var = 0.0;
  for (double x : zv) var += x * x;
  var /= static_cast<double>(zv.size());
  CHECK(var == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> twice = zscore(zv);
  for (std::size_t i = 0; i < zv.size(); ++i) {
    CHECK(twice[i] == doctest::Approx(zv[i]).epsilon(1e-12));
  }
}

TEST_CASE("rescale_to_amplitude") {
  std::vector<double> v{1.0, -4.0, 2.0};
  std::vector<double> r = rescale_to_amplitude(v, 0.9);
  double peak = 0.0;
  for (double x : r) peak = std::max(peak, std::abs(x));
  CHECK(peak == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(r[1] == doctest::Approx(-0.9).epsilon(1e-14));
  CHECK(r[0] == doctest::Approx(0.225).epsilon(1e-14));

  std::vector<double> zeros{0.0, 0.0};
  CHECK(rescale_to_amplitude(zeros, 0.9) == zeros);
  CHECK(rescale_to_amplitude(v, 0.0) == v);
  CHECK(rescale_to_amplitude(v, -1.0) == v);
}

TEST_CASE("make_forecast_pairs aligns targets delay steps ahead") {
  Series s;
  s.samples = {10.0, 20.0, 30.0, 40.0, 50.0};
  ForecastDataset d = make_forecast_pairs(s, 1, 4);
  REQUIRE(d.inputs.cols() == 4);
  REQUIRE(d.targets.cols() == 4);
  CHECK(d.delay == 1);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(d.inputs(0, t) == s.samples[t]);
    CHECK(d.targets(0, t) == s.samples[t + 1]);
  }
  CHECK_THROWS_AS(make_forecast_pairs(s, 2, 4), config_error);  // needs 6 samples
  CHECK_THROWS_AS(make_forecast_pairs(s, 1, 0), config_error);
}

TEST_CASE("window_dataset centers each window on its annotation") {
  AnnotatedSeries a;
  a.series.samples.resize(400);
  Rng rng(9);
  for (double& x : a.series.samples) x = rng.uniform(-1.0, 1.0);
  a.annotations = {{100, Label::N}, {250, Label::V}};

  ClassifyDataset d = window_dataset(a, 180, 100, /*denoise=*/false);
  REQUIRE(d.windows.size() == 2);
  CHECK(d.k == 180);
  CHECK(d.skipped == 0);
  CHECK(d.windows[0].label == Label::N);
  CHECK(d.windows[1].label == Label::V);

  // window 0 covers samples [10, 190): z-scored slice, nothing else
  std::vector<double> slice(a.series.samples.begin() + 10, a.series.samples.begin() + 190);
  std::vector<double> z = zscore(slice);
  REQUIRE(d.windows[0].input.cols() == 180);
  for (std::size_t t = 0; t < 180; ++t) {
    CHECK(d.windows[0].input(0, t) == doctest::Approx(z[t]).epsilon(1e-14));
  }
}

TEST_CASE("window_dataset skips out-of-bounds windows and caps per class") {
  AnnotatedSeries a;
  a.series.samples.assign(300, 0.5);
  a.annotations = {{5, Label::N},    // window starts before 0: skipped
                   {100, Label::N}, {120, Label::N}, {140, Label::N},
                   {160, Label::V}, {295, Label::V}};  // runs past the end: skipped

  ClassifyDataset d = window_dataset(a, 100, 2, false);
  CHECK(d.skipped == 2);
  std::size_t n_count = 0, v_count = 0;
  for (const auto& w : d.windows) {
    if (w.label == Label::N) ++n_count;
    if (w.label == Label::V) ++v_count;
  }
  CHECK(n_count == 2);  // capped from 3 eligible
  CHECK(v_count == 1);

  CHECK_THROWS_AS(window_dataset(a, 8, 10, false), config_error);  // k too small
}

TEST_CASE("synthetic generator is deterministic with round-robin labels") {
  std::vector<Label> classes{Label::N, Label::L, Label::R, Label::A, Label::V};
  AnnotatedSeries a = synth_ecg(classes, 4, 280, 0.0, 5);
  AnnotatedSeries b = synth_ecg(classes, 4, 280, 0.0, 5);
  CHECK(a.series.samples == b.series.samples);
  REQUIRE(a.annotations.size() == 20);
  CHECK(a.series.sample_rate == 360.0);
  // 20 beats plus half-period padding on both ends
  CHECK(a.series.samples.size() == 20 * 280 + 280);

  for (std::size_t i = 0; i < a.annotations.size(); ++i) {
    CHECK(a.annotations[i].label == classes[i % classes.size()]);
    if (i > 0) CHECK(a.annotations[i].sample_index > a.annotations[i - 1].sample_index);
  }

  AnnotatedSeries c = synth_ecg(classes, 4, 280, 0.05, 6);
  CHECK_FALSE(a.series.samples == c.series.samples);
}

TEST_CASE("noiseless annotations sit on the beat maxima") {
  AnnotatedSeries a = synth_ecg({Label::N}, 5, 280, 0.0, 1);
  for (const Annotation& ann : a.annotations) {
    // locate the true local max within half a period of the annotation
    std::size_t lo = ann.sample_index - 60, hi = ann.sample_index + 60;
    std::size_t arg = lo;
    for (std::size_t i = lo; i < hi; ++i) {
      if (a.series.samples[i] > a.series.samples[arg]) arg = i;
    }
    CHECK(std::abs(static_cast<long>(arg) - static_cast<long>(ann.sample_index)) <= 2);
    CHECK(a.series.samples[arg] > 0.8);
  }
}

TEST_CASE("class morphologies differ") {
  AnnotatedSeries n = synth_ecg({Label::N}, 1, 280, 0.0, 1);
  AnnotatedSeries v = synth_ecg({Label::V}, 1, 280, 0.0, 1);
  CHECK_FALSE(n.series.samples == v.series.samples);
  AnnotatedSeries l = synth_ecg({Label::L}, 1, 280, 0.0, 1);
  CHECK_FALSE(n.series.samples == l.series.samples);
}

TEST_CASE("series csv round-trips exactly") {
  Series s;
  s.samples = {0.1, -2.25, 1e-17, 3.141592653589793, -0.0};
  s.sample_rate = 360.0;
  const std::string path = temp_path("series.csv");
  save_csv_series(path, s);
  Series r = load_csv_series(path);
  REQUIRE(r.samples.size() == s.samples.size());
  for (std::size_t i = 0; i < s.samples.size(); ++i) CHECK(r.samples[i] == s.samples[i]);
  std::remove(path.c_str());
}

TEST_CASE("annotation csv round-trips and validates") {
  std::vector<Annotation> anns{{10, Label::N}, {50, Label::A}, {90, Label::V}};
  const std::string path = temp_path("ann.csv");
  save_annotations(path, anns);
  std::vector<Annotation> r = load_annotations(path);
  REQUIRE(r.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r[i].sample_index == anns[i].sample_index);
    CHECK(r[i].label == anns[i].label);
  }
  std::remove(path.c_str());
}

TEST_CASE("malformed csv reports the offending line") {
  const std::string path = temp_path("bad.csv");
  {
    FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("0,1.5\n1,not_a_number\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_WITH_AS(load_csv_series(path), doctest::Contains(":2:"), parse_error);
  std::remove(path.c_str());

  const std::string apath = temp_path("bad_ann.csv");
  {
    FILE* f = std::fopen(apath.c_str(), "w");
    std::fputs("10,N\n20,X\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_WITH_AS(load_annotations(apath), doctest::Contains(":2:"), parse_error);
  std::remove(apath.c_str());

  const std::string opath = temp_path("ooo_ann.csv");
  {
    FILE* f = std::fopen(opath.c_str(), "w");
    std::fputs("30,N\n20,V\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_annotations(opath), parse_error);
  std::remove(opath.c_str());

  CHECK_THROWS_AS(load_csv_series("definitely_missing_file.csv"), parse_error);
}

TEST_CASE("label round-trip") {
  CHECK(label_to_char(Label::N) == 'N');
  CHECK(label_to_char(Label::V) == 'V');
  CHECK(label_from_char('L') == Label::L);
  CHECK(label_from_char('A') == Label::A);
  CHECK(label_from_char('R') == Label::R);
  CHECK_THROWS_AS(label_from_char('Q'), parse_error);
}
