#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace pillarmamba {

/// Raised when a caller breaks an operation's preconditions (shape mismatch etc.).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid configuration values (nonpositive step sizes, bad grids, unknown keys).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed on-disk data.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents, outermost first. Rank is at most 4.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims) : dims_(dims) { validate(); }
  explicit Shape(std::vector<std::int64_t> dims) : dims_(std::move(dims)) { validate(); }

  int rank() const { return static_cast<int>(dims_.size()); }
  std::int64_t operator[](int i) const { return dims_.at(static_cast<std::size_t>(i)); }
  std::int64_t numel() const {
    return std::accumulate(dims_.begin(), dims_.end(), std::int64_t{1}, std::multiplies<>());
  }
  const std::vector<std::int64_t>& dims() const { return dims_; }

  bool operator==(const Shape& other) const = default;

  std::string str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(dims_[i]);
    }
    return s + ")";
  }

 private:
  void validate() const {
    if (dims_.size() > 4) throw ContractViolation("tensor rank above 4: " + str());
    for (auto d : dims_)
      if (d < 0) throw ContractViolation("negative extent in shape " + str());
  }

  std::vector<std::int64_t> dims_;
};

inline void require(bool cond, const std::string& message) {
  if (!cond) throw ContractViolation(message);
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw ContractViolation(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace pillarmamba
