#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tensor.hpp"
#include "util.hpp"

namespace sxtest {

// Self-deleting scratch directory for file-format tests.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           (tag + "-" + std::to_string(rd()) + "-" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

// Central finite differences against the analytic gradients produced by one
// backward pass. `build` must construct the graph from scratch on the given
// tape, as a pure function of the current parameter values.
using BuildFn = std::function<segcross::ag::Tensor(segcross::ag::Tape&)>;

inline double relative_error(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradCheck {
  double max_rel_err = 0.0;
  size_t entries_checked = 0;
};

inline GradCheck finite_difference_check(const BuildFn& build,
                                         std::vector<segcross::ag::Tensor> params,
                                         double h = 1e-5,
                                         size_t max_entries_per_param = 0) {
  using segcross::ag::Tape;
  using segcross::ag::Tensor;

  Tape tape;
  Tensor loss = build(tape);
  for (auto& p : params) p.zero_grad();
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad());

  GradCheck result;
  segcross::Rng pick(12345);
  for (size_t i = 0; i < params.size(); ++i) {
    auto& data = params[i].data();
    std::vector<size_t> entries;
    if (max_entries_per_param == 0 || data.size() <= max_entries_per_param) {
      entries.resize(data.size());
      for (size_t j = 0; j < data.size(); ++j) entries[j] = j;
    } else {
      for (size_t j = 0; j < max_entries_per_param; ++j)
        entries.push_back(pick.below(data.size()));
    }
    for (size_t j : entries) {
      const double saved = data[j];
      data[j] = saved + h;
      Tape tp;
      const double plus = build(tp).value();
      data[j] = saved - h;
      Tape tm;
      const double minus = build(tm).value();
      data[j] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      result.max_rel_err =
          std::max(result.max_rel_err, relative_error(analytic[i][j], numeric));
      ++result.entries_checked;
    }
  }
  return result;
}

// Uniform values bounded away from zero, for ops with kinks at the origin.
inline double away_from_zero(segcross::Rng& rng, double lo = 0.2, double hi = 1.0) {
  const double magnitude = rng.uniform(lo, hi);
  return rng.below(2) == 0 ? magnitude : -magnitude;
}

}  // namespace sxtest
