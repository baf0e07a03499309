#pragma once

// Dense fp64 n-dimensional value with an optional gradient buffer. Data is
// row-major; there is no view aliasing, every op produces a fresh tensor.

#include <cstddef>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ggp {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;

  std::size_t numel() const { return data.size(); }

  int dim(int i) const {
    const int nd = static_cast<int>(shape.size());
    if (i < 0) i += nd;
    return shape[static_cast<std::size_t>(i)];
  }

  void ensure_grad() {
    if (requires_grad && grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }

  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  }
};

inline std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::runtime_error("tensor: dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

inline TensorPtr make_tensor(std::vector<int> shape, bool requires_grad = false) {
  auto t = std::make_shared<Tensor>();
  const std::size_t n = shape_numel(shape);
  t->shape = std::move(shape);
  t->data.assign(n, 0.0);
  t->requires_grad = requires_grad;
  t->ensure_grad();
  return t;
}

inline TensorPtr make_tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad = false) {
  if (shape_numel(shape) != data.size())
    throw std::runtime_error("tensor: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data = std::move(data);
  t->requires_grad = requires_grad;
  t->ensure_grad();
  return t;
}

inline TensorPtr make_scalar(double v, bool requires_grad = false) {
  return make_tensor({1}, std::vector<double>{v}, requires_grad);
}

}  // namespace ggp
