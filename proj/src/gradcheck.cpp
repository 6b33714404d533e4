// SPDX-License-Identifier: Apache-2.0
#include "proctrack/gradcheck.hpp"

#include <cmath>
#include <sstream>

#include "proctrack/errors.hpp"

namespace proctrack {

std::string GradCheckReport::to_string() const {
  std::ostringstream os;
  os << (pass ? "PASS" : "FAIL") << " checked=" << checked << " max_rel_err=" << max_rel_err;
  if (!worst_location.empty()) os << " worst=" << worst_location;
  for (const auto& f : failures) os << "\n  " << f;
  return os.str();
}

GradCheckReport gradcheck(const DiffFn& f, std::vector<Tensor> point, const GradCheckOptions& opt) {
  GradCheckReport rep;
  std::vector<Tensor> analytic;
  const double base = f(point, &analytic);
  if (!std::isfinite(base)) {
    rep.pass = false;
    rep.failures.push_back("loss non-finite at base point");
    return rep;
  }
  if (analytic.size() != point.size())
    throw NumericError("E_GRADCHECK", "gradcheck: " + std::to_string(analytic.size()) +
                                          " gradients for " + std::to_string(point.size()) +
                                          " tensors");

  auto loc = [](size_t ti, size_t ei) {
    return "tensor " + std::to_string(ti) + " elem " + std::to_string(ei);
  };

  for (size_t ti = 0; ti < point.size(); ++ti) {
    if (!analytic[ti].same_shape(point[ti]))
      throw NumericError("E_GRADCHECK", "gradcheck: gradient shape " + analytic[ti].shape_str() +
                                            " != point shape " + point[ti].shape_str());
    for (size_t ei = 0; ei < point[ti].data.size(); ++ei) {
      const double an = analytic[ti].data[ei];
      if (!std::isfinite(an)) {
        rep.pass = false;
        rep.failures.push_back("analytic gradient non-finite at " + loc(ti, ei));
        continue;
      }
      const double orig = point[ti].data[ei];
      point[ti].data[ei] = orig + opt.h;
      const double fp = f(point, nullptr);
      point[ti].data[ei] = orig - opt.h;
      const double fm = f(point, nullptr);
      point[ti].data[ei] = orig;
      ++rep.checked;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        rep.pass = false;
        rep.failures.push_back("loss non-finite near " + loc(ti, ei));
        continue;
      }
      const double fd = (fp - fm) / (2.0 * opt.h);
      const double diff = std::abs(fd - an);
      if (diff <= opt.abs_tol) continue;  // zero-gradient fallback
      const double rel = diff / std::max(std::abs(fd), std::abs(an));
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_location = loc(ti, ei);
      }
      if (rel > opt.rel_tol) {
        rep.pass = false;
        std::ostringstream os;
        os << "mismatch at " << loc(ti, ei) << ": analytic=" << an << " fd=" << fd
           << " rel_err=" << rel;
        rep.failures.push_back(os.str());
      }
    }
  }
  return rep;
}

}  // namespace proctrack
