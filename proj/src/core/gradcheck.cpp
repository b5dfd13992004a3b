#include "rcl/gradcheck.hpp"

#include <cmath>

#include "rcl/error.hpp"

namespace rcl {
namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
    Tape tape;
    Var out = f(tape, tape.constant(x));
    const double v = out.value().item();
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: f is non-finite in the probed region");
    return v;
}

}  // namespace

Tensor autodiff_gradient(const ScalarFn& f, const Tensor& x) {
    Tape tape;
    Var xv = tape.variable(x);
    Var out = f(tape, xv);
    Gradients grads = tape.backward(out);
    auto it = grads.find(xv.id());
    return it == grads.end() ? Tensor::zeros(x.shape()) : std::move(it->second);
}

double finite_diff_check(const ScalarFn& f, const Tensor& x, double h) {
    if (!(h > 0.0)) throw ConfigError("finite_diff_check: step h must be positive");
    const Tensor g = autodiff_gradient(f, x);
    double worst = 0.0;
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = evaluate(f, probe);
        probe[i] = orig - h;
        const double fm = evaluate(f, probe);
        probe[i] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        worst = std::max(worst, std::abs(g[i] - fd) / std::max(1.0, std::abs(fd)));
    }
    return worst;
}

}  // namespace rcl
