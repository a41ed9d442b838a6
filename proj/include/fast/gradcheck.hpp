#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fast/tensor.hpp"

namespace fast::num {

struct GradCheckReport {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::int64_t checked = 0;
    std::int64_t worst_index = -1;
    std::string worst_param;
};

// Central finite differences against a caller-supplied analytic gradient.
// `f` evaluates the scalar loss at the current contents of `point`;
// `analytic` is the reverse-mode gradient at the unperturbed point.
// Relative error uses max(|fd|, |ad|, floor) as the denominator.
inline GradCheckReport grad_check(const std::function<double()>& f, Tensor<double>& point,
                                  const Tensor<double>& analytic, double h = 1e-5,
                                  double denom_floor = 1e-5, const std::string& name = "") {
    if (!point.same_shape(analytic)) throw ShapeError("grad_check: gradient shape mismatch");
    GradCheckReport rep;
    rep.worst_param = name;
    for (std::int64_t i = 0; i < point.size(); ++i) {
        const double orig = point.v[i];
        point.v[i] = orig + h;
        const double fp = f();
        point.v[i] = orig - h;
        const double fm = f();
        point.v[i] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double ad = analytic.v[i];
        const double abs_err = std::abs(fd - ad);
        const double rel = abs_err / std::max({std::abs(fd), std::abs(ad), denom_floor});
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.worst_index = i;
        }
        rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
        rep.checked += 1;
    }
    return rep;
}

inline GradCheckReport merge(const GradCheckReport& a, const GradCheckReport& b) {
    GradCheckReport r = a;
    if (b.max_rel_err > r.max_rel_err) {
        r.max_rel_err = b.max_rel_err;
        r.worst_index = b.worst_index;
        r.worst_param = b.worst_param;
    }
    r.max_abs_err = std::max(r.max_abs_err, b.max_abs_err);
    r.checked += b.checked;
    return r;
}

}  // namespace fast::num
