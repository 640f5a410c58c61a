#include "dvi/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dvi/errors.hpp"

namespace dvi {
namespace {

constexpr double kStdFloor = 1e-8;

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_cell(const std::string& cell, int line_no, int col) {
  try {
    size_t pos = 0;
    double v = std::stod(cell, &pos);
    while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw DataError("malformed value '" + cell + "' at line " + std::to_string(line_no) +
                    ", column " + std::to_string(col + 1));
  }
}

}  // namespace

std::vector<int> Dataset::labels() const {
  std::vector<int> out(static_cast<size_t>(n()));
  for (int64_t i = 0; i < n(); ++i) {
    out[static_cast<size_t>(i)] = static_cast<int>(std::lround(y[i]));
  }
  return out;
}

void Dataset::validate() const {
  if (X.rows() != y.size()) throw DataError("X and y row counts differ");
  if (!X.allFinite() || !y.allFinite()) throw DataError("dataset contains non-finite values");
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open dataset: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw DataError("empty dataset file: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_line(line);
  if (header.size() < 2) throw DataError("need at least one feature column and a target");
  size_t n_cols = header.size();

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells = split_line(line);
    if (cells.size() != n_cols) {
      throw DataError("line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(n_cols));
    }
    std::vector<double> row(n_cols);
    for (size_t c = 0; c < n_cols; ++c) {
      row[c] = parse_cell(cells[c], line_no, static_cast<int>(c));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("no data rows in " + path.string());

  Dataset ds;
  ds.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n_cols - 1));
  ds.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t c = 0; c + 1 < n_cols; ++c) {
      ds.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
    ds.y[static_cast<Eigen::Index>(i)] = rows[i][n_cols - 1];
  }
  ds.feature_names.assign(header.begin(), header.end() - 1);
  ds.validate();
  return ds;
}

void write_csv(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os.precision(17);
  for (int c = 0; c < ds.d(); ++c) {
    os << (c < static_cast<int>(ds.feature_names.size()) ? ds.feature_names[static_cast<size_t>(c)]
                                                         : "x" + std::to_string(c))
       << ',';
  }
  os << "target\n";
  for (int64_t i = 0; i < ds.n(); ++i) {
    for (int c = 0; c < ds.d(); ++c) os << ds.X(i, c) << ',';
    os << ds.y[i] << '\n';
  }
}

NormalizationStats compute_stats(const Dataset& train) {
  if (train.n() < 1) throw DataError("cannot compute stats on an empty split");
  NormalizationStats s;
  s.x_mean = train.X.colwise().mean();
  Eigen::VectorXd var =
      (train.X.rowwise() - s.x_mean.transpose()).array().square().colwise().mean();
  s.x_std = var.array().sqrt().max(kStdFloor);
  s.y_mean = train.classification ? 0.0 : train.y.mean();
  return s;
}

Dataset normalize(const Dataset& ds, const NormalizationStats& stats) {
  Dataset out = ds;
  out.X = (ds.X.rowwise() - stats.x_mean.transpose()).array().rowwise() /
          stats.x_std.transpose().array();
  if (!ds.classification) out.y = ds.y.array() - stats.y_mean;
  out.stats = stats;
  return out;
}

Dataset denormalize(const Dataset& ds) {
  if (!ds.stats) throw DataError("dataset carries no normalization stats");
  const NormalizationStats& s = *ds.stats;
  Dataset out = ds;
  out.X = (ds.X.array().rowwise() * s.x_std.transpose().array()).rowwise() +
          s.x_mean.transpose().array();
  if (!ds.classification) out.y = ds.y.array() + s.y_mean;
  out.stats.reset();
  return out;
}

namespace {

Dataset take_rows(const Dataset& ds, const std::vector<int64_t>& idx) {
  Dataset out;
  out.feature_names = ds.feature_names;
  out.classification = ds.classification;
  out.n_classes = ds.n_classes;
  out.X.resize(static_cast<Eigen::Index>(idx.size()), ds.X.cols());
  out.y.resize(static_cast<Eigen::Index>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) = ds.X.row(idx[i]);
    out.y[static_cast<Eigen::Index>(i)] = ds.y[idx[i]];
  }
  return out;
}

}  // namespace

Splits split(const Dataset& ds, uint64_t seed) {
  ds.validate();
  int64_t n = ds.n();
  if (n < 10) throw DataError("need at least 10 rows to split, got " + std::to_string(n));
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  Rng rng = Rng(seed).fork("split");
  rng.shuffle(idx);
  int64_t n_val = static_cast<int64_t>(0.18 * static_cast<double>(n));
  int64_t n_test = static_cast<int64_t>(0.10 * static_cast<double>(n));
  int64_t n_train = n - n_val - n_test;
  Splits s;
  s.train = take_rows(ds, {idx.begin(), idx.begin() + n_train});
  s.val = take_rows(ds, {idx.begin() + n_train, idx.begin() + n_train + n_val});
  s.test = take_rows(ds, {idx.begin() + n_train + n_val, idx.end()});
  return s;
}

Splits split_and_normalize(const Dataset& ds, uint64_t seed) {
  Splits s = split(ds, seed);
  NormalizationStats stats = compute_stats(s.train);
  s.train = normalize(s.train, stats);
  s.val = normalize(s.val, stats);
  s.test = normalize(s.test, stats);
  return s;
}

Eigen::VectorXd synthetic_true_weights(const std::string& kind, int d) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  if (kind == "heavy_tail") {
    // A few large coordinates over an exactly null background; a single
    // global prior scale cannot serve both groups.
    if (d > 0) w[0] = 6.0;
    if (d > 1) w[1] = -5.0;
    if (d > 2) w[2] = 4.0;
    return w;
  }
  const double base[] = {2.0, -1.0, 0.5, 1.5, -2.0};
  for (int j = 0; j < d; ++j) w[j] = base[j % 5];
  return w;
}

Dataset make_synthetic(const std::string& kind, uint64_t seed, const SyntheticOptions& opts) {
  Rng rng = Rng(seed).fork("synthetic/" + std::string(kind));
  Dataset ds;
  if (kind == "linear" || kind == "heteroscedastic" || kind == "heavy_tail") {
    int n = opts.n > 0 ? opts.n : (kind == "heavy_tail" ? 120 : 200);
    int d = opts.d > 0 ? opts.d : (kind == "heavy_tail" ? 32 : 5);
    double noise = opts.noise >= 0.0 ? opts.noise : (kind == "heavy_tail" ? 0.4 : 0.1);
    Eigen::VectorXd w = synthetic_true_weights(kind, d);
    ds.X.resize(n, d);
    ds.y.resize(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) ds.X(i, j) = rng.normal();
      double f = ds.X.row(i).dot(w);
      double eps;
      if (kind == "heavy_tail") {
        // Student-t with 3 degrees of freedom: z / sqrt(chi2_3 / 3).
        double z = rng.normal();
        double c = 0.0;
        for (int t = 0; t < 3; ++t) {
          double u = rng.normal();
          c += u * u;
        }
        eps = z / std::sqrt(c / 3.0);
      } else {
        eps = rng.normal();
      }
      double scale = noise;
      if (kind == "heteroscedastic") scale = noise * (0.5 + 2.0 * std::abs(ds.X(i, 0)));
      ds.y[i] = f + scale * eps;
    }
    for (int j = 0; j < d; ++j) ds.feature_names.push_back("x" + std::to_string(j));
    return ds;
  }
  if (kind == "two_moons" || kind == "ood_cluster") {
    int n = opts.n > 0 ? opts.n : (kind == "two_moons" ? 400 : 100);
    double noise = opts.noise >= 0.0 ? opts.noise : (kind == "two_moons" ? 0.1 : 0.25);
    ds.classification = true;
    ds.n_classes = 2;
    ds.X.resize(n, 2);
    ds.y.resize(n);
    ds.feature_names = {"x0", "x1"};
    if (kind == "ood_cluster") {
      // A tight cluster shifted well outside the two-moons region.
      for (int i = 0; i < n; ++i) {
        ds.X(i, 0) = 4.0 + noise * rng.normal();
        ds.X(i, 1) = -3.0 + noise * rng.normal();
        ds.y[i] = 0.0;
      }
      return ds;
    }
    for (int i = 0; i < n; ++i) {
      int cls = i % 2;  // exact 50/50 balance for even n
      double t = std::numbers::pi * rng.uniform();
      double x0, x1;
      if (cls == 0) {
        x0 = std::cos(t);
        x1 = std::sin(t);
      } else {
        x0 = 1.0 - std::cos(t);
        x1 = 0.5 - std::sin(t);
      }
      ds.X(i, 0) = x0 + noise * rng.normal();
      ds.X(i, 1) = x1 + noise * rng.normal();
      ds.y[i] = cls;
    }
    return ds;
  }
  throw ConfigError("unknown synthetic kind '" + std::string(kind) + "'");
}

}  // namespace dvi
