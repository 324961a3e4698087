#pragma once

#include <Eigen/Dense>
#include <deque>
#include <string>
#include <string_view>
#include <vector>

namespace cyberdef::nn {

/// Dense row-major matrix of reals. All tensors in this layer are 2-D
/// (rows x cols); batches are stacked along rows.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A trainable tensor. `grad` is empty until a backward pass touches it.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Owns parameters with stable addresses, in registration order.
class ParameterStore {
 public:
  Parameter& add(std::string name, Matrix value);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  bool all_finite() const;

 private:
  std::deque<Parameter> params_;
};

}  // namespace cyberdef::nn
