#include "ceem/types.hpp"

namespace ceem {

ParamLayout::ParamLayout(std::vector<ParamSlice> slices) {
  for (auto& s : slices) {
    if (s.offset != size_ || s.size < 0) {
      throw ContractError("parameter layout slices must tile the vector in order (slice '" +
                          s.name + "')");
    }
    size_ += s.size;
    slices_.push_back(std::move(s));
  }
}

ParamLayout& ParamLayout::add(std::string name, Index size) {
  if (size < 0) throw ContractError("negative parameter slice size");
  slices_.push_back({std::move(name), size_, size});
  size_ += size;
  return *this;
}

const ParamSlice& ParamLayout::slice(const std::string& name) const {
  for (const auto& s : slices_) {
    if (s.name == name) return s;
  }
  throw ContractError("no parameter slice named '" + name + "'");
}

std::vector<std::string> ParamLayout::coordinate_names() const {
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(size_));
  for (const auto& s : slices_) {
    for (Index i = 0; i < s.size; ++i) {
      out.push_back(s.size == 1 ? s.name : s.name + "[" + std::to_string(i) + "]");
    }
  }
  return out;
}

}  // namespace ceem
