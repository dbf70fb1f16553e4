#include "iwin/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace iwin {

GradCheckResult finite_diff_check(const LossFn& f, const std::vector<Tensor>& params,
                                  double h, double tol) {
    // analytic gradients
    Tape tape;
    std::vector<Tensor> watched;
    watched.reserve(params.size());
    for (const Tensor& p : params) watched.push_back(tape.watch(p));
    Tensor loss = f(watched);
    tape.backward(loss);
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (const Tensor& w : watched) grads.push_back(tape.grad(w));

    GradCheckResult res;
    res.pass = true;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        for (std::int64_t ci = 0; ci < params[pi].size(); ++ci) {
            std::vector<Tensor> plus, minus;
            for (std::size_t q = 0; q < params.size(); ++q) {
                // deep copies so the perturbation does not leak
                Tensor cp(params[q].shape(),
                          std::vector<double>(params[q].data(), params[q].data() + params[q].size()));
                Tensor cm(params[q].shape(),
                          std::vector<double>(cp.data(), cp.data() + cp.size()));
                if (q == pi) {
                    cp.data()[ci] += h;
                    cm.data()[ci] -= h;
                }
                plus.push_back(cp);
                minus.push_back(cm);
            }
            const double numeric = (f(plus).item() - f(minus).item()) / (2.0 * h);
            const double analytic = grads[pi].data()[ci];
            const double denom = std::max({1e-6, std::abs(analytic), std::abs(numeric)});
            const double rel = std::abs(analytic - numeric) / denom;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = "param " + std::to_string(pi) + " coord " + std::to_string(ci);
            }
        }
    }
    res.pass = res.max_rel_err < tol;
    return res;
}

}  // namespace iwin
