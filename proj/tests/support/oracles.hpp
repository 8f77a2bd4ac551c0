#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "cped/mlp.hpp"

// Reference implementations that share no code with the library.
namespace cped::testing {

// Forward-mode dual number, enough for tanh/softplus nets.
struct Dual {
    double v = 0.0;
    double d = 0.0;
};
inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator*(double s, Dual a) { return {s * a.v, s * a.d}; }
inline Dual activate(Activation k, Dual a)
{
    if (k == Activation::Tanh) {
        const double t = std::tanh(a.v);
        return {t, (1 - t * t) * a.d};
    }
    return {std::log1p(std::exp(a.v)), a.d / (1 + std::exp(-a.v))};
}

// Straight-line evaluation with explicit loops: h(x) and <grad h(x), dir>.
inline Dual straight_line(const BarrierNet& net, const Vec& x, const Vec& dir)
{
    std::vector<Dual> a(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
        a[i] = {x(i), dir(i)};
    for (int l = 0; l < net.num_layers(); ++l) {
        const Mat& W = net.weights()[l];
        std::vector<Dual> z(W.rows());
        for (Eigen::Index r = 0; r < W.rows(); ++r) {
            Dual s{net.biases()[l](r), 0.0};
            for (Eigen::Index c = 0; c < W.cols(); ++c)
                s = s + W(r, c) * a[c];
            z[r] = l + 1 < net.num_layers() ? activate(net.activation(), s) : s;
        }
        a = z;
    }
    return a[0];
}

// I_x(a, b) for integer a, b as a binomial tail.
inline double binomial_tail(double x, int a, int b)
{
    const int n = a + b - 1;
    double s = 0.0;
    for (int j = a; j <= n; ++j)
        s += std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) + j * std::log(x) +
                      (n - j) * std::log1p(-x));
    return s;
}

// min |u - u_ref|^2 s.t. <a, u> >= b via the KKT system of the active constraint.
inline Vec kkt_projection(const Vec& a, double b, const Vec& u_ref)
{
    if (a.dot(u_ref) >= b)
        return u_ref;
    const Eigen::Index m = a.size();
    Mat K = Mat::Zero(m + 1, m + 1);
    K.topLeftCorner(m, m) = 2.0 * Mat::Identity(m, m);
    K.topRightCorner(m, 1) = -a;
    K.bottomLeftCorner(1, m) = a.transpose();
    Vec rhs(m + 1);
    rhs.head(m) = 2.0 * u_ref;
    rhs(m) = b;
    return K.fullPivLu().solve(rhs).head(m);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / (1.0 + std::abs(b)); }

}  // namespace cped::testing
