#include "sfunet/tensor.hpp"

#include <algorithm>
#include <stdexcept>

namespace sfunet {

std::string to_string(const Shape& s) {
  return "[" + std::to_string(s.n) + "," + std::to_string(s.c) + "," +
         std::to_string(s.h) + "," + std::to_string(s.w) + "]";
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw std::invalid_argument("tensor data length " +
                                std::to_string(data_.size()) +
                                " does not match shape " + to_string(shape_));
  }
}

template <typename T>
void BasicTensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template class BasicTensor<Real>;
template class BasicTensor<Complex>;

void shape_error(const std::string& what, const Shape& a, const Shape& b) {
  throw std::invalid_argument(what + ": " + to_string(a) + " vs " +
                              to_string(b));
}

}  // namespace sfunet
