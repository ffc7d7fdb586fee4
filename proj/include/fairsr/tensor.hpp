#pragma once

#include <cassert>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairsr {

// Dense row-major matrix of doubles. Vectors are column matrices (n x 1).
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {
    if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative shape");
  }
  Tensor(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != static_cast<size_t>(r) * c)
      throw std::invalid_argument("Tensor: data length does not match shape");
  }

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }
};

enum class Precision { f64, f32 };

// Rounds every entry through float. Used to emulate 32-bit storage when the
// training config asks for reduced precision; tests and oracles stay in f64.
inline void round_to_precision(Tensor& t, Precision p) {
  if (p == Precision::f64) return;
  for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace fairsr
