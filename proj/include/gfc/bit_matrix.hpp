#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gfc/errors.hpp"

namespace gfc {

/// Square boolean matrix stored as packed 64-bit rows.
///
/// Row-wise OR and popcount are word-parallel, which is what the closure
/// update needs: every incremental step ORs one row into a set of rows.
class BitMatrix {
 public:
  using Word = std::uint64_t;
  static constexpr std::size_t kWordBits = 64;

  BitMatrix() = default;

  explicit BitMatrix(std::size_t n)
      : n_(n), words_((n + kWordBits - 1) / kWordBits), data_(n * words_, 0) {}

  static BitMatrix identity(std::size_t n) {
    BitMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) m.set(i, i);
    return m;
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t words_per_row() const noexcept { return words_; }

  bool test(std::size_t row, std::size_t col) const noexcept {
    return (data_[row * words_ + col / kWordBits] >> (col % kWordBits)) & 1U;
  }

  void set(std::size_t row, std::size_t col, bool value = true) noexcept {
    Word& w = data_[row * words_ + col / kWordBits];
    const Word bit = Word{1} << (col % kWordBits);
    w = value ? (w | bit) : (w & ~bit);
  }

  void reset(std::size_t row, std::size_t col) noexcept { set(row, col, false); }

  std::span<const Word> row(std::size_t r) const noexcept {
    return {data_.data() + r * words_, words_};
  }
  std::span<Word> row(std::size_t r) noexcept {
    return {data_.data() + r * words_, words_};
  }

  std::size_t row_count(std::size_t r) const noexcept {
    std::size_t c = 0;
    for (Word w : row(r)) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }

  std::size_t count() const noexcept {
    std::size_t c = 0;
    for (Word w : data_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }

  bool none() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](Word w) { return w == 0; });
  }

  /// True when every one of the n*n entries is set.
  bool all() const noexcept { return count() == n_ * n_; }

  BitMatrix transposed() const {
    BitMatrix t(n_);
    for (std::size_t i = 0; i < n_; ++i)
      for_each_set_in_row(i, [&](std::size_t j) { t.set(j, i); });
    return t;
  }

  BitMatrix& operator|=(const BitMatrix& other) {
    check_same_size(other);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] |= other.data_[k];
    return *this;
  }

  BitMatrix& operator&=(const BitMatrix& other) {
    check_same_size(other);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] &= other.data_[k];
    return *this;
  }

  friend BitMatrix operator|(BitMatrix a, const BitMatrix& b) { return a |= b; }
  friend BitMatrix operator&(BitMatrix a, const BitMatrix& b) { return a &= b; }

  friend bool operator==(const BitMatrix& a, const BitMatrix& b) noexcept {
    return a.n_ == b.n_ && a.data_ == b.data_;
  }

  /// Calls fn(col) for every set bit of a row, in increasing column order.
  template <class Fn>
  void for_each_set_in_row(std::size_t r, Fn&& fn) const {
    const auto words = row(r);
    for (std::size_t w = 0; w < words.size(); ++w) {
      Word bits = words[w];
      while (bits != 0) {
        const auto b = static_cast<std::size_t>(std::countr_zero(bits));
        fn(w * kWordBits + b);
        bits &= bits - 1;
      }
    }
  }

  /// Calls fn(row, col) for every set bit, row-major.
  template <class Fn>
  void for_each_set(Fn&& fn) const {
    for (std::size_t i = 0; i < n_; ++i)
      for_each_set_in_row(i, [&](std::size_t j) { fn(i, j); });
  }

  /// Raw packed words; stable byte representation usable as a hash key.
  const std::vector<Word>& words() const noexcept { return data_; }

  std::string key() const {
    return {reinterpret_cast<const char*>(data_.data()), data_.size() * sizeof(Word)};
  }

 private:
  void check_same_size(const BitMatrix& other) const {
    if (other.n_ != n_) throw ShapeError("bit matrix size mismatch");
  }

  std::size_t n_ = 0;
  std::size_t words_ = 0;
  std::vector<Word> data_;
};

/// Binary adjacency; A(i, j) = 1 encodes the edge j -> i (row = child, column = parent).
using Adjacency = BitMatrix;

}  // namespace gfc
