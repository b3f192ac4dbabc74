#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "psloss/data.hpp"
#include "oracles.hpp"

using namespace psloss;
using Catch::Approx;

namespace {

struct TempCsv {
  std::string path;
  explicit TempCsv(const std::string& name, const std::string& body)
      : path(name) {
    std::ofstream out(path);
    out << body;
  }
  ~TempCsv() { std::remove(path.c_str()); }
};

std::string synthetic_csv(std::size_t rows, std::size_t channels,
                          unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::string body = "date";
  for (std::size_t c = 0; c < channels; ++c)
    body += ",ch" + std::to_string(c);
  body += "\n";
  for (std::size_t r = 0; r < rows; ++r) {
    char stamp[32];
    std::snprintf(stamp, sizeof(stamp), "2020-01-01 %02zu:%02zu:%02zu",
                  r / 3600, (r / 60) % 60, r % 60);
    body += stamp;
    for (std::size_t c = 0; c < channels; ++c)
      body += "," + std::to_string(dist(rng));
    body += "\n";
  }
  return body;
}

}  // namespace

TEST_CASE("csv loading parses rows and channels", "[data]") {
  TempCsv csv("toy_ok.csv",
              "date,a,b\n"
              "2020-01-01 00:00:00,1.5,-2\n"
              "2020-01-01 01:00:00,2.5,0.25\n"
              "2020-01-01 02:00:00,1e-3,4\n");
  RawDataset ds = load_csv(csv.path);
  CHECK(ds.rows == 3);
  CHECK(ds.channels == 2);
  CHECK(ds.channel_names == std::vector<std::string>{"a", "b"});
  CHECK(ds.values == std::vector<double>{1.5, -2.0, 2.5, 0.25, 1e-3, 4.0});
}

TEST_CASE("csv loading reports coordinates of bad cells", "[data]") {
  TempCsv blank("toy_blank.csv",
                "date,a,b\n"
                "2020-01-01 00:00:00,1,2\n"
                "2020-01-01 01:00:00,,2\n");
  try {
    load_csv(blank.path);
    FAIL("expected IngestError");
  } catch (const IngestError& e) {
    CHECK(e.row() == 3);
    CHECK(e.col() == 2);
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    CHECK(std::string(e.what()).find("column 2") != std::string::npos);
  }

  TempCsv garbage("toy_garbage.csv",
                  "date,a,b\n"
                  "2020-01-01 00:00:00,1,abc\n");
  try {
    load_csv(garbage.path);
    FAIL("expected IngestError");
  } catch (const IngestError& e) {
    CHECK(e.row() == 2);
    CHECK(e.col() == 3);
  }
}

TEST_CASE("csv loading enforces structure", "[data]") {
  CHECK_THROWS_AS(load_csv("no_such_file.csv"), IngestError);

  TempCsv short_row("toy_short.csv",
                    "date,a,b\n"
                    "2020-01-01 00:00:00,1\n");
  CHECK_THROWS_AS(load_csv(short_row.path), IngestError);

  TempCsv no_channels("toy_nochan.csv", "date\n2020-01-01 00:00:00\n");
  CHECK_THROWS_AS(load_csv(no_channels.path), IngestError);

  TempCsv empty("toy_empty.csv", "date,a\n");
  CHECK_THROWS_AS(load_csv(empty.path), IngestError);

  TempCsv backwards("toy_backwards.csv",
                    "date,a\n"
                    "2020-01-02 00:00:00,1\n"
                    "2020-01-01 00:00:00,2\n");
  CHECK_THROWS_AS(load_csv(backwards.path), IngestError);

  TempCsv duplicate("toy_duplicate.csv",
                    "date,a\n"
                    "2020-01-01 00:00:00,1\n"
                    "2020-01-01 00:00:00,2\n");
  CHECK_THROWS_AS(load_csv(duplicate.path), IngestError);
}

TEST_CASE("hourly dataset has the expected layout", "[data]") {
  const std::string path = resolve_data_path("ETTh1.csv");
  RawDataset ds = load_csv(path);
  CHECK(ds.rows == 17420);
  CHECK(ds.channels == 7);
  CHECK(ds.channel_names ==
        std::vector<std::string>{"HUFL", "HULL", "MUFL", "MULL", "LUFL",
                                 "LULL", "OT"});
  CHECK(ds.values[0] == Approx(5.827).margin(1e-3));
  CHECK(ds.values[6] == Approx(30.531).margin(1e-3));
}

TEST_CASE("fixed splits give the documented row counts", "[data]") {
  SplitSpec spec;
  spec.mode = SplitMode::ett_hourly;
  DataSplits s = split(17420, spec, 336);
  CHECK(s.train.start_row == 0);
  CHECK(s.train.rows == 8545);
  CHECK(s.val.start_row == 8545 - 336);
  CHECK(s.val.rows == 2881 + 336);
  CHECK(s.test.start_row == 8545 + 2881 - 336);
  CHECK(s.test.rows == 2881 + 336);

  spec.mode = SplitMode::ett_minute;
  s = split(69680, spec, 96);
  CHECK(s.train.rows == 34465);
  CHECK(s.val.rows == 11521 + 96);
  CHECK(s.test.start_row == 34465 + 11521 - 96);
}

TEST_CASE("ratio split follows the floor arithmetic", "[data]") {
  SplitSpec spec;
  DataSplits s = split(100, spec, 5);
  CHECK(s.train.rows == 70);
  CHECK(s.val.start_row == 65);
  CHECK(s.val.rows == 15);
  CHECK(s.test.start_row == 75);
  CHECK(s.test.rows == 25);

  spec.train_ratio = 0.9;
  spec.val_ratio = 0.2;
  CHECK_THROWS_AS(split(100, spec, 5), ConfigError);
}

TEST_CASE("split rejects infeasible requests", "[data]") {
  SplitSpec spec;
  spec.mode = SplitMode::ett_hourly;
  CHECK_THROWS_AS(split(14306, spec, 96), ConfigError);
  CHECK_THROWS_AS(split(17420, spec, 8546), ConfigError);
  spec.mode = SplitMode::ratio;
  CHECK_THROWS_AS(split(100, spec, 71), ConfigError);
}

TEST_CASE("scaler statistics come from training rows only", "[data]") {
  // Rows 0..3 are training data; rows 4..5 are wildly different.
  std::vector<double> values{1, 10, 2, 20, 3, 30, 4, 40, 1000, -5000, 2000,
                             -6000};
  Scaler s;
  s.fit(values, 2, 0, 4);
  CHECK(s.mean()[0] == Approx(2.5));
  CHECK(s.mean()[1] == Approx(25.0));
  CHECK(s.std()[0] == Approx(std::sqrt(1.25)));

  auto z = s.transform(values);
  // Training block is standardized: mean 0, population variance 1.
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t r = 0; r < 4; ++r) m += z[r * 2 + c];
    m /= 4.0;
    for (std::size_t r = 0; r < 4; ++r)
      v += (z[r * 2 + c] - m) * (z[r * 2 + c] - m);
    v /= 4.0;
    CHECK(m == Approx(0.0).margin(1e-12));
    CHECK(v == Approx(1.0).margin(1e-12));
  }

  auto back = s.inverse_transform(z);
  for (std::size_t i = 0; i < values.size(); ++i)
    CHECK(back[i] == Approx(values[i]).margin(1e-10));
}

TEST_CASE("scaler floors constant channels", "[data]") {
  std::vector<double> values{5, 1, 5, 2, 5, 3};
  Scaler s;
  s.fit(values, 2, 0, 3);
  CHECK(s.std()[0] == Scaler::kStdFloor);
  auto z = s.transform(values);
  CHECK(z[0] == 0.0);
  CHECK(z[2] == 0.0);

  Scaler unfitted;
  CHECK_THROWS_AS(unfitted.transform(values), ConfigError);
  CHECK_THROWS_AS(s.fit(values, 2, 1, 1), ConfigError);
}

TEST_CASE("window enumeration is stride one and bounded", "[data]") {
  DatasetView view{3, 12};
  auto starts = window_starts(view, 5, 3);
  REQUIRE(starts.size() == 5);
  CHECK(starts.front() == 0);
  CHECK(starts.back() == 4);

  CHECK(window_starts({0, 7}, 5, 3).empty());
  CHECK(window_starts({0, 8}, 5, 3).size() == 1);
}

TEST_CASE("gathered windows line up with the normalized matrix", "[data]") {
  TempCsv csv("toy_windows.csv", synthetic_csv(40, 3, 5));
  RawDataset raw = load_csv(csv.path);
  SplitSpec spec;
  PreparedData d = prepare(raw, spec, 4);

  auto starts = window_starts(d.splits.val, 4, 2);
  REQUIRE_FALSE(starts.empty());
  auto [x, y] = gather_windows(d, d.splits.val, starts, 4, 2);
  REQUIRE(x.shape() == Shape{starts.size(), 3, 4});
  REQUIRE(y.shape() == Shape{starts.size(), 3, 2});

  for (std::size_t b = 0; b < starts.size(); ++b)
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t row0 = d.splits.val.start_row + starts[b];
      for (std::size_t l = 0; l < 4; ++l)
        REQUIRE(x.values()[(b * 3 + c) * 4 + l] ==
                d.normalized[(row0 + l) * 3 + c]);
      for (std::size_t t = 0; t < 2; ++t)
        REQUIRE(y.values()[(b * 3 + c) * 2 + t] ==
                d.normalized[(row0 + 4 + t) * 3 + c]);
    }

  // Consecutive windows overlap by construction: x of window 1 shifted one
  // row matches x of window 0.
  auto [x01, y01] = gather_windows(d, d.splits.val, {0, 1}, 4, 2);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t l = 0; l < 3; ++l)
      CHECK(x01.values()[(0 * 3 + c) * 4 + l + 1] ==
            x01.values()[(1 * 3 + c) * 4 + l]);
  (void)y01;

  CHECK_THROWS_AS(gather_windows(d, d.splits.val, {9999}, 4, 2), ShapeError);
}

TEST_CASE("prepared training block is standardized", "[data]") {
  const std::string path = resolve_data_path("ETTh1.csv");
  RawDataset raw = load_csv(path);
  SplitSpec spec;
  spec.mode = SplitMode::ett_hourly;
  PreparedData d = prepare(raw, spec, 96);

  for (std::size_t c = 0; c < d.channels; ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < d.splits.train.rows; ++r)
      m += d.normalized[r * d.channels + c];
    m /= static_cast<double>(d.splits.train.rows);
    CHECK(m == Approx(0.0).margin(1e-9));
  }
  CHECK(d.splits.test.start_row + d.splits.test.rows <= raw.rows);
}

TEST_CASE("data path resolution honours the environment root", "[data]") {
  CHECK(resolve_data_path("/absolute/path.csv") == "/absolute/path.csv");
  const std::string resolved = resolve_data_path("ETTh1.csv");
  std::ifstream f(resolved);
  CHECK(static_cast<bool>(f));
}
