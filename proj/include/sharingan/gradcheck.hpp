#pragma once

#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "sharingan/tensor.hpp"

namespace sharingan {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int64_t worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  int64_t n_checked = 0;
  std::string error;  // non-empty if the forward pass failed
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double max_rel_err() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_err);
    return m;
  }
  bool pass(double tol) const {
    for (const auto& e : entries)
      if (!e.error.empty() || e.max_rel_err > tol) return false;
    return !entries.empty();
  }
  std::string to_string(double tol) const {
    std::ostringstream os;
    for (const auto& e : entries) {
      os << std::left << std::setw(28) << e.name << "  params=" << std::setw(7) << e.n_checked
         << "  max_rel_err=" << std::scientific << std::setprecision(3) << e.max_rel_err
         << (e.error.empty() ? (e.max_rel_err <= tol ? "  ok" : "  FAIL") : ("  ERROR: " + e.error)) << "\n"
         << std::defaultfloat;
    }
    os << (pass(tol) ? "gradcheck: PASS" : "gradcheck: FAIL") << " (tol " << tol << ")\n";
    return os.str();
  }
};

// Central-difference check of d loss / d param for every scalar in every named
// parameter. `loss_fn` must be a deterministic pure function of the params.
// Run in f64. Entries where both sides sit below a loss-scaled floor are
// treated as matching zeros: the cancellation noise of (f+ - f-) makes a pure
// ratio meaningless there.
inline GradCheckReport grad_check(const std::function<TensorD()>& loss_fn,
                                  const std::vector<std::pair<std::string, TensorD>>& params, double h) {
  GradCheckReport report;

  // analytic pass
  for (const auto& [name, p] : params) {
    (void)name;
    const_cast<TensorD&>(p).grad();
    const_cast<TensorD&>(p).zero_grad();
  }
  double f0 = 0.0;
  TapeD tape;
  {
    TapeScopeD scope(tape);
    TensorD loss = loss_fn();
    f0 = loss.item();
    tape.backward(loss);
  }
  const double abs_floor = 1e-7 * std::max(1.0, std::abs(f0));

  for (const auto& [name, p] : params) {
    GradCheckEntry e;
    e.name = name;
    e.n_checked = p.numel();
    TensorD& pt = const_cast<TensorD&>(p);
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double saved = pt.data()[i];
      const double analytic = pt.grad()[i];
      double rel = 0.0, numeric = 0.0;
      bool failed = false;
      // A single step cannot satisfy both error regimes at once: cancellation
      // noise shrinks with larger h, truncation with smaller h. An entry
      // passes if any step in a small ladder validates it; a wrong gradient
      // formula disagrees at every h.
      for (const double step : {h, 3.0 * h, 10.0 * h, h / 3.0}) {
        double f_plus = 0.0, f_minus = 0.0;
        try {
          pt.data()[i] = saved + step;
          f_plus = loss_fn().item();
          pt.data()[i] = saved - step;
          f_minus = loss_fn().item();
        } catch (const std::exception& ex) {
          pt.data()[i] = saved;
          e.error = ex.what();
          failed = true;
          break;
        }
        pt.data()[i] = saved;
        const double num = (f_plus - f_minus) / (2.0 * step);
        if (std::abs(analytic) < abs_floor && std::abs(num) < abs_floor) {
          rel = 0.0;
          numeric = num;
          break;
        }
        const double r = std::abs(analytic - num) / std::max({std::abs(analytic), std::abs(num), abs_floor});
        if (step == h || r < rel) {
          rel = r;
          numeric = num;
        }
        if (rel < 5e-5) break;  // good enough, skip the remaining steps
      }
      if (failed) break;
      if (rel > e.max_rel_err) {
        e.max_rel_err = rel;
        e.worst_index = i;
        e.analytic_at_worst = analytic;
        e.numeric_at_worst = numeric;
      }
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace sharingan
