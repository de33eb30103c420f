#include "floeseg/tensor.hpp"

namespace floeseg {

std::string shape_string(const std::vector<Eigen::Index>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace floeseg
