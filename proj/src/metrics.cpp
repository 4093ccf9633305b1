#include "sharingan/metrics.hpp"

#include <cstdio>
#include <sstream>

namespace sharingan {

std::string format_metric_report(const MetricReport& r) {
  auto fmt = [](double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "avg_dist\t" << fmt(r.avg_dist) << "\n";
  os << "min_dist\t" << fmt(r.min_dist) << "\n";
  if (r.auc) os << "auc\t" << fmt(*r.auc) << "\n";
  if (r.ap) os << "ap\t" << fmt(*r.ap) << "\n";
  os << "n_instances\t" << r.n_instances << "\n";
  return os.str();
}

}  // namespace sharingan
