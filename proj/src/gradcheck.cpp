#include "rcn/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace rcn {

GradCheckReport grad_check_report(const ScalarFn& f, const std::vector<Tensor>& inputs, double h,
                                  const SkipCoord& skip) {
  Tape& tape = Tape::active();
  tape.clear();
  for (const Tensor& t : inputs) {
    if (!t.requires_grad())
      throw std::invalid_argument("grad_check: all checked tensors must require gradients");
    const_cast<Tensor&>(t).zero_grad();
  }

  Tensor y = f();
  if (y.size() != 1) throw std::invalid_argument("grad_check: f must be scalar-valued");
  tape.backward(y);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const Tensor& t : inputs) analytic.push_back(t.grad());

  GradCheckReport report;
  NoGradScope no_grad;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor t = inputs[ti];
    for (int i = 0; i < t.size(); ++i) {
      if (skip && skip(ti, i)) {
        ++report.skipped;
        continue;
      }
      const double saved = t[i];
      t[i] = saved + h;
      const double yp = f().item();
      t[i] = saved - h;
      const double ym = f().item();
      t[i] = saved;

      const double numeric = (yp - ym) / (2.0 * h);
      const double a = analytic[ti][static_cast<std::size_t>(i)];
      const double denom = std::fmax(std::fmax(std::fabs(a), std::fabs(numeric)), 1e-8);
      const double rel = std::fabs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = ti;
        report.worst_coord = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double h,
                  const SkipCoord& skip) {
  return grad_check_report(f, inputs, h, skip).max_rel_error;
}

}  // namespace rcn
