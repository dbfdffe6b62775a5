#include <filesystem>
#include <fstream>

#include "commelec/profiles.hpp"
#include "doctest.h"

using namespace commelec;

TEST_CASE("csv series parsing and interpolation") {
  namespace fs = std::filesystem;
  const std::string path = fs::temp_directory_path() / "series_test.csv";
  {
    std::ofstream out(path);
    out << "# comment\n0,100\n60,40\n120,10\n";
  }
  TimeSeries s = load_csv_series(path);
  CHECK(s.at(-5) == 100.0);
  CHECK(s.at(30) == doctest::Approx(70.0));  // linear interpolation
  CHECK(s.at(500) == 10.0);

  {
    std::ofstream out(path);
    out << "0,1\nbroken row\n";
  }
  CHECK_THROWS_AS(load_csv_series(path), ParseError);
  {
    std::ofstream out(path);
    out << "10,1\n5,2\n";
  }
  CHECK_THROWS_AS(load_csv_series(path), ParseError);
  CHECK_THROWS_AS(load_csv_series("/nonexistent/file.csv"), ParseError);
}

TEST_CASE("constant file gives a constant series") {
  TimeSeries s = TimeSeries::constant(1000.0);
  CHECK(s.at(0) == 1000.0);
  CHECK(s.at(1e6) == 1000.0);
}

TEST_CASE("telegraph cloud process has the configured dwell statistics") {
  IrradianceParams par;
  par.duration_s = 3600;
  par.base_swing = 0.0;  // flat base isolates the telegraph process
  par.mean_dwell_s = 30.0;
  TimeSeries s = synth_irradiance(123, par);
  // crossings of the mid level approximate the switch count
  const double mid = par.base_w_m2 * 0.5 * (1.0 + par.cloudy_factor);
  int crossings = 0;
  for (size_t i = 1; i < s.v.size(); ++i)
    if ((s.v[i - 1] < mid) != (s.v[i] < mid)) ++crossings;
  const double expected = par.duration_s / par.mean_dwell_s;
  CHECK(crossings > 0.8 * expected);
  CHECK(crossings < 1.2 * expected);
  for (double v : s.v) CHECK(v >= 0.0);
}

TEST_CASE("determinism of the synthesized series") {
  IrradianceParams par;
  par.duration_s = 100;
  TimeSeries a = synth_irradiance(7, par), b = synth_irradiance(7, par);
  CHECK(a.v == b.v);
  TimeSeries c = synth_irradiance(8, par);
  CHECK(a.v != c.v);
}
