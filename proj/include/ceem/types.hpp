#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "ceem/errors.hpp"

namespace ceem {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Named contiguous slice of a flat parameter vector.
struct ParamSlice {
  std::string name;
  Index offset = 0;
  Index size = 0;
};

/// Maps parameter names onto index ranges. Slices must tile [0, size()) in
/// order with no gaps or overlaps.
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(std::vector<ParamSlice> slices);

  /// Appends a slice directly after the last one.
  ParamLayout& add(std::string name, Index size);

  Index size() const noexcept { return size_; }
  const std::vector<ParamSlice>& slices() const noexcept { return slices_; }
  const ParamSlice& slice(const std::string& name) const;

  /// Flat name of every coordinate, e.g. "sigma[0]".
  std::vector<std::string> coordinate_names() const;

 private:
  std::vector<ParamSlice> slices_;
  Index size_ = 0;
};

struct ParamVec {
  Vector values;
  ParamLayout layout;

  Eigen::Ref<const Vector> slice(const std::string& name) const {
    const auto& s = layout.slice(name);
    return values.segment(s.offset, s.size);
  }
};

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

inline void require_dim(Index got, Index expected, const char* what) {
  if (got != expected) {
    throw ContractError(std::string(what) + ": expected dimension " + std::to_string(expected) +
                        ", got " + std::to_string(got));
  }
}

}  // namespace ceem
