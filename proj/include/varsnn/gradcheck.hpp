#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "varsnn/tape.hpp"
#include "varsnn/tensor.hpp"

namespace varsnn {

// Builds a scalar loss on the tape from one tracked leaf per input tensor.
template <typename T>
using TapeFn =
    std::function<typename Tape<T>::NodeId(Tape<T>&, const std::vector<typename Tape<T>::NodeId>&)>;

// Central finite differences per coordinate against the tape gradient.
// Returns the max relative error, |analytic - numeric| / max(1, |a|, |n|).
// The difference quotient is formed in double regardless of T, so for
// T = float the result is limited by single-precision forward noise.
template <typename T>
double grad_check(const TapeFn<T>& f, std::vector<Tensor<T>> points, double eps) {
  if (eps <= 0) throw std::invalid_argument("grad_check: eps must be positive");

  // Analytic gradients.
  std::vector<Tensor<T>> analytic;
  {
    Tape<T> tape;
    std::vector<typename Tape<T>::NodeId> ids;
    ids.reserve(points.size());
    for (const auto& p : points) ids.push_back(tape.param(p));
    auto loss = f(tape, ids);
    tape.backward(loss);
    for (auto id : ids) analytic.push_back(tape.grad(id));
  }

  auto loss_at = [&](const std::vector<Tensor<T>>& pts) -> double {
    Tape<T> tape;
    std::vector<typename Tape<T>::NodeId> ids;
    ids.reserve(pts.size());
    for (const auto& p : pts) ids.push_back(tape.param(p));
    return static_cast<double>(tape.value(f(tape, ids)).item());
  };

  double max_err = 0;
  for (size_t t = 0; t < points.size(); ++t) {
    for (int64_t i = 0; i < points[t].size(); ++i) {
      const T saved = points[t][i];
      points[t][i] = saved + static_cast<T>(eps);
      const double fp = loss_at(points);
      points[t][i] = saved - static_cast<T>(eps);
      const double fm = loss_at(points);
      points[t][i] = saved;
      const double numeric = (fp - fm) / (2 * eps);
      const double a = static_cast<double>(analytic[t][i]);
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      max_err = std::max(max_err, std::abs(a - numeric) / denom);
    }
  }
  return max_err;
}

// Single-tensor convenience form.
template <typename T>
double grad_check(const std::function<typename Tape<T>::NodeId(Tape<T>&, typename Tape<T>::NodeId)>& f,
                  const Tensor<T>& point, double eps) {
  TapeFn<T> wrapped = [&f](Tape<T>& tape, const std::vector<typename Tape<T>::NodeId>& ids) {
    return f(tape, ids[0]);
  };
  return grad_check<T>(wrapped, {point}, eps);
}

}  // namespace varsnn
