#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace histsurv {

inline constexpr const char* kVersion = "0.3.1";

// Malformed user input: bad CSV/JSON, out-of-range indices, violated invariants.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The sampler could not start or its adaptation collapsed.
class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major 2-D table indexed (row, col). Rows are studies, columns
// are intervals throughout the library.
template <class T>
class Table {
 public:
  Table() = default;
  Table(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  bool operator==(const Table&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

}  // namespace histsurv
