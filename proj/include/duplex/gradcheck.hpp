#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "duplex/params.hpp"

namespace duplex {

struct FdParamStat {
  std::string name;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
};

struct FdReport {
  double step = 0.0;
  double tol = 0.0;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::vector<FdParamStat> per_param;

  bool pass() const { return max_rel_err < tol; }

  std::string summary() const {
    std::ostringstream os;
    os << (pass() ? "PASS" : "FAIL") << " max_rel_err=" << max_rel_err << " tol=" << tol;
    for (const auto& p : per_param) {
      os << "\n  " << p.name << " rel=" << p.max_rel_err << " abs=" << p.max_abs_err;
    }
    return os.str();
  }
};

// Central-difference check of analytic gradients in 64-bit mode. The error
// metric per element is |analytic - numeric| / max(1, |analytic|, |numeric|),
// i.e. absolute error for small gradients, relative for large ones.
template <typename Build>
FdReport finite_difference_check(ParamStore<double> params, Build&& build, double h = 1e-4,
                                 double tol = 1e-4) {
  FdReport report;
  report.step = h;
  report.tol = tol;

  auto analytic = gradients<double>(params, build);

  for (auto& [name, tensor] : params.values) {
    FdParamStat stat;
    stat.name = name;
    const auto& grad = analytic.at(name);
    for (size_t i = 0; i < tensor.size(); ++i) {
      const double orig = tensor.values[i];
      tensor.values[i] = orig + h;
      const double fp = loss_value<double>(params, build);
      tensor.values[i] = orig - h;
      const double fm = loss_value<double>(params, build);
      tensor.values[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = grad.values[i];
      const double abs_err = std::abs(a - numeric);
      const double rel_err = abs_err / std::max({1.0, std::abs(a), std::abs(numeric)});
      stat.max_abs_err = std::max(stat.max_abs_err, abs_err);
      stat.max_rel_err = std::max(stat.max_rel_err, rel_err);
    }
    report.max_rel_err = std::max(report.max_rel_err, stat.max_rel_err);
    report.max_abs_err = std::max(report.max_abs_err, stat.max_abs_err);
    report.per_param.push_back(std::move(stat));
  }
  return report;
}

}  // namespace duplex
