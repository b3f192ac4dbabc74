#pragma once

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace psloss {

/** Parsed CSV payload: `rows` x `channels` values in row-major order. */
struct RawDataset {
  std::vector<std::string> channel_names;
  std::size_t rows = 0;
  std::size_t channels = 0;
  std::vector<double> values;
};

enum class SplitMode { ett_hourly, ett_minute, ratio };

inline SplitMode split_mode_from_string(const std::string& s) {
  if (s == "ett_hourly") return SplitMode::ett_hourly;
  if (s == "ett_minute") return SplitMode::ett_minute;
  if (s == "ratio") return SplitMode::ratio;
  throw ConfigError("unknown split mode '" + s + "'");
}

inline std::string to_string(SplitMode m) {
  switch (m) {
    case SplitMode::ett_hourly: return "ett_hourly";
    case SplitMode::ett_minute: return "ett_minute";
    default: return "ratio";
  }
}

struct SplitSpec {
  SplitMode mode = SplitMode::ratio;
  double train_ratio = 0.7;
  double val_ratio = 0.1;
};

/** Contiguous row range of the normalized matrix. */
struct DatasetView {
  std::size_t start_row = 0;
  std::size_t rows = 0;
};

struct DataSplits {
  DatasetView train, val, test;
};

/**
 * Per-channel z-score normalization. Statistics come from the rows the
 * scaler was fitted on (training rows only); standard deviations are floored
 * at 1e-8 so constant channels stay finite.
 */
class Scaler {
 public:
  static constexpr double kStdFloor = 1e-8;

  void fit(const std::vector<double>& values, std::size_t channels,
           std::size_t row_begin, std::size_t row_end) {
    if (row_end <= row_begin)
      throw ConfigError("scaler needs at least one row to fit");
    mean_.assign(channels, 0.0);
    std_.assign(channels, 0.0);
    const double n = static_cast<double>(row_end - row_begin);
    for (std::size_t r = row_begin; r < row_end; ++r)
      for (std::size_t c = 0; c < channels; ++c)
        mean_[c] += values[r * channels + c];
    for (auto& m : mean_) m /= n;
    for (std::size_t r = row_begin; r < row_end; ++r)
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = values[r * channels + c] - mean_[c];
        std_[c] += d * d;
      }
    for (auto& s : std_) s = std::max(std::sqrt(s / n), kStdFloor);
  }

  bool fitted() const { return !mean_.empty(); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& std() const { return std_; }

  std::vector<double> transform(const std::vector<double>& values) const {
    require_fitted();
    std::vector<double> out(values.size());
    const std::size_t channels = mean_.size();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const std::size_t c = i % channels;
      out[i] = (values[i] - mean_[c]) / std_[c];
    }
    return out;
  }

  std::vector<double> inverse_transform(const std::vector<double>& values)
      const {
    require_fitted();
    std::vector<double> out(values.size());
    const std::size_t channels = mean_.size();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const std::size_t c = i % channels;
      out[i] = values[i] * std_[c] + mean_[c];
    }
    return out;
  }

 private:
  void require_fitted() const {
    if (!fitted()) throw ConfigError("scaler used before fit");
  }

  std::vector<double> mean_, std_;
};

/** Normalized dataset with its split views and the fitted scaler. */
struct PreparedData {
  std::size_t channels = 0;
  std::vector<double> normalized;  // rows x channels
  DataSplits splits;
  Scaler scaler;
};

namespace detail {

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace detail

/**
 * Loads an ETT-style CSV: a header line, then one row per timestep whose
 * first field is the timestamp and remaining fields are channel values.
 * Timestamps must be strictly increasing in their fixed-width text form.
 * IngestError coordinates are 1-based file line and field numbers.
 */
inline RawDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open dataset file " + path);

  RawDataset ds;
  std::string line;
  std::size_t line_no = 0;
  std::string prev_stamp;
  std::vector<std::string> fields;

  auto split_line = [&fields](const std::string& s) {
    fields.clear();
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = s.find(',', pos);
      if (comma == std::string::npos) {
        fields.push_back(s.substr(pos));
        break;
      }
      fields.push_back(s.substr(pos, comma - pos));
      pos = comma + 1;
    }
    if (!fields.empty() && !fields.back().empty() &&
        fields.back().back() == '\r')
      fields.back().pop_back();
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      split_line(line);
      if (fields.size() < 2)
        throw IngestError("header needs a date column and at least one channel",
                          1, 1);
      ds.channel_names.assign(fields.begin() + 1, fields.end());
      ds.channels = ds.channel_names.size();
      continue;
    }
    if (line.empty()) continue;
    split_line(line);
    if (fields.size() != ds.channels + 1)
      throw IngestError("expected " + std::to_string(ds.channels + 1) +
                            " fields, got " + std::to_string(fields.size()),
                        line_no, fields.size());
    if (fields[0].empty()) throw IngestError("blank timestamp", line_no, 1);
    if (!prev_stamp.empty() && fields[0] <= prev_stamp)
      throw IngestError("timestamps are not strictly increasing", line_no, 1);
    prev_stamp = fields[0];

    for (std::size_t c = 0; c < ds.channels; ++c) {
      if (fields[c + 1].empty())
        throw IngestError("blank cell", line_no, c + 2);
      double v;
      if (!detail::parse_double(fields[c + 1], v))
        throw IngestError("unparsable value '" + fields[c + 1] + "'", line_no,
                          c + 2);
      ds.values.push_back(v);
    }
    ++ds.rows;
  }
  if (ds.rows == 0) throw IngestError("dataset has no data rows in " + path);
  return ds;
}

/**
 * Chronological train/val/test row boundaries. Fixed ETT modes use
 * 8545/2881/2881 (hourly) and 34465/11521/11521 (minute) usable rows; ratio
 * mode takes floor(rows * train_ratio) and floor(rows * val_ratio) with the
 * rest as test. The val and test views are extended `lookback` rows into the
 * past so their first windows have full history.
 *
 * @throws ConfigError when the dataset is too small for the split or when
 *                     lookback exceeds the training rows
 */
inline DataSplits split(std::size_t rows, const SplitSpec& spec,
                        std::size_t lookback) {
  std::size_t n_train, n_val, n_test;
  switch (spec.mode) {
    case SplitMode::ett_hourly:
      n_train = 8545;
      n_val = 2881;
      n_test = 2881;
      break;
    case SplitMode::ett_minute:
      n_train = 34465;
      n_val = 11521;
      n_test = 11521;
      break;
    default: {
      if (spec.train_ratio <= 0.0 || spec.val_ratio < 0.0 ||
          spec.train_ratio + spec.val_ratio >= 1.0)
        throw ConfigError("split ratios must satisfy 0 < train, 0 <= val, "
                          "train + val < 1");
      n_train = static_cast<std::size_t>(static_cast<double>(rows) *
                                         spec.train_ratio);
      n_val = static_cast<std::size_t>(static_cast<double>(rows) *
                                       spec.val_ratio);
      n_test = rows - n_train - n_val;
      break;
    }
  }
  if (n_train + n_val + n_test > rows)
    throw ConfigError("dataset has " + std::to_string(rows) +
                      " rows, split needs " +
                      std::to_string(n_train + n_val + n_test));
  if (lookback > n_train)
    throw ConfigError("lookback " + std::to_string(lookback) +
                      " exceeds the " + std::to_string(n_train) +
                      " training rows");

  DataSplits s;
  s.train = {0, n_train};
  s.val = {n_train - lookback, n_val + lookback};
  s.test = {n_train + n_val - lookback, n_test + lookback};
  return s;
}

/** Splits, fits the scaler on training rows only, and normalizes all rows. */
inline PreparedData prepare(const RawDataset& raw, const SplitSpec& spec,
                            std::size_t lookback) {
  PreparedData d;
  d.channels = raw.channels;
  d.splits = split(raw.rows, spec, lookback);
  d.scaler.fit(raw.values, raw.channels, 0, d.splits.train.rows);
  d.normalized = d.scaler.transform(raw.values);
  return d;
}

/**
 * Start offsets (relative to the view) of every stride-1 window that fits
 * `lookback` input rows plus `horizon` target rows. Empty when the view is
 * too short.
 */
inline std::vector<std::size_t> window_starts(const DatasetView& view,
                                              std::size_t lookback,
                                              std::size_t horizon) {
  std::vector<std::size_t> starts;
  if (view.rows < lookback + horizon) return starts;
  starts.reserve(view.rows - lookback - horizon + 1);
  for (std::size_t w = 0; w + lookback + horizon <= view.rows; ++w)
    starts.push_back(w);
  return starts;
}

/**
 * Materializes windows into (B, C, lookback) inputs and (B, C, horizon)
 * targets, transposing rows-by-channel storage into per-channel series.
 */
inline std::pair<Tensor, Tensor> gather_windows(
    const PreparedData& d, const DatasetView& view,
    const std::vector<std::size_t>& starts, std::size_t lookback,
    std::size_t horizon) {
  const std::size_t b_dim = starts.size();
  const std::size_t c_dim = d.channels;
  std::vector<double> x(b_dim * c_dim * lookback);
  std::vector<double> y(b_dim * c_dim * horizon);
  for (std::size_t b = 0; b < b_dim; ++b) {
    const std::size_t row0 = view.start_row + starts[b];
    if (starts[b] + lookback + horizon > view.rows)
      throw ShapeError("window start " + std::to_string(starts[b]) +
                       " does not fit the view");
    for (std::size_t c = 0; c < c_dim; ++c) {
      double* xd = x.data() + (b * c_dim + c) * lookback;
      for (std::size_t l = 0; l < lookback; ++l)
        xd[l] = d.normalized[(row0 + l) * c_dim + c];
      double* yd = y.data() + (b * c_dim + c) * horizon;
      for (std::size_t t = 0; t < horizon; ++t)
        yd[t] = d.normalized[(row0 + lookback + t) * c_dim + c];
    }
  }
  return {Tensor({b_dim, c_dim, lookback}, std::move(x)),
          Tensor({b_dim, c_dim, horizon}, std::move(y))};
}

/**
 * Resolves a dataset path: absolute paths and paths that exist as given are
 * used directly, otherwise the PSLOSS_DATA_DIR environment variable (and
 * then ./data) is consulted as a root directory.
 */
inline std::string resolve_data_path(const std::string& path) {
  auto exists = [](const std::string& p) {
    std::ifstream f(p);
    return static_cast<bool>(f);
  };
  if (!path.empty() && path.front() == '/') return path;
  if (exists(path)) return path;
  if (const char* root = std::getenv("PSLOSS_DATA_DIR")) {
    const std::string joined = std::string(root) + "/" + path;
    if (exists(joined)) return joined;
  }
  const std::string local = "data/" + path;
  if (exists(local)) return local;
  return path;
}

}  // namespace psloss
