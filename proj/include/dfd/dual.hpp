// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace dfd {

/// Forward-mode differentiation scalar carrying N partial derivatives.
/// Arithmetic follows the chain rule; branch points (abs, min, fmod-style
/// wraps) take the derivative of the branch that is active at the value.
template <int N>
struct Dual {
    double v = 0.0;
    std::array<double, N> d{};

    Dual() = default;
    Dual(double value) : v(value) {}  // NOLINT: implicit by design
    static Dual seeded(double value, int slot) {
        Dual r(value);
        r.d[slot] = 1.0;
        return r;
    }

    Dual& operator+=(const Dual& o) {
        v += o.v;
        for (int i = 0; i < N; ++i) d[i] += o.d[i];
        return *this;
    }
    Dual& operator-=(const Dual& o) {
        v -= o.v;
        for (int i = 0; i < N; ++i) d[i] -= o.d[i];
        return *this;
    }
    Dual& operator*=(const Dual& o) {
        for (int i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
        v *= o.v;
        return *this;
    }
    Dual& operator+=(double s) { v += s; return *this; }
    Dual& operator-=(double s) { v -= s; return *this; }
    Dual& operator*=(double s) {
        v *= s;
        for (int i = 0; i < N; ++i) d[i] *= s;
        return *this;
    }
};

template <int N> inline Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <int N> inline Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <int N> inline Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }
template <int N> inline Dual<N> operator+(Dual<N> a, double s) { return a += s; }
template <int N> inline Dual<N> operator+(double s, Dual<N> a) { return a += s; }
template <int N> inline Dual<N> operator-(Dual<N> a, double s) { return a -= s; }
template <int N> inline Dual<N> operator-(double s, const Dual<N>& a) {
    Dual<N> r(s - a.v);
    for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
    return r;
}
template <int N> inline Dual<N> operator*(Dual<N> a, double s) { return a *= s; }
template <int N> inline Dual<N> operator*(double s, Dual<N> a) { return a *= s; }
template <int N> inline Dual<N> operator-(const Dual<N>& a) {
    Dual<N> r(-a.v);
    for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
    return r;
}
template <int N> inline Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
    Dual<N> r(a.v / b.v);
    const double inv = 1.0 / b.v;
    for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
    return r;
}
template <int N> inline Dual<N> operator/(const Dual<N>& a, double s) {
    Dual<N> r(a.v / s);
    const double inv = 1.0 / s;
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * inv;
    return r;
}
template <int N> inline Dual<N> operator/(double s, const Dual<N>& b) {
    Dual<N> r(s / b.v);
    const double f = -r.v / b.v;
    for (int i = 0; i < N; ++i) r.d[i] = f * b.d[i];
    return r;
}

template <int N> inline bool operator<(const Dual<N>& a, const Dual<N>& b) { return a.v < b.v; }
template <int N> inline bool operator<(const Dual<N>& a, double b) { return a.v < b; }
template <int N> inline bool operator<(double a, const Dual<N>& b) { return a < b.v; }
template <int N> inline bool operator>(const Dual<N>& a, const Dual<N>& b) { return a.v > b.v; }
template <int N> inline bool operator>(const Dual<N>& a, double b) { return a.v > b; }
template <int N> inline bool operator>=(const Dual<N>& a, double b) { return a.v >= b; }
template <int N> inline bool operator<=(const Dual<N>& a, double b) { return a.v <= b; }

template <int N> inline Dual<N> chain(double fv, double fprime, const Dual<N>& x) {
    Dual<N> r(fv);
    for (int i = 0; i < N; ++i) r.d[i] = fprime * x.d[i];
    return r;
}

template <int N> inline Dual<N> sqrt(const Dual<N>& x) {
    const double s = std::sqrt(x.v);
    return chain(s, 0.5 / s, x);
}
template <int N> inline Dual<N> exp(const Dual<N>& x) {
    const double e = std::exp(x.v);
    return chain(e, e, x);
}
template <int N> inline Dual<N> log(const Dual<N>& x) { return chain(std::log(x.v), 1.0 / x.v, x); }
template <int N> inline Dual<N> sin(const Dual<N>& x) { return chain(std::sin(x.v), std::cos(x.v), x); }
template <int N> inline Dual<N> cos(const Dual<N>& x) { return chain(std::cos(x.v), -std::sin(x.v), x); }
template <int N> inline Dual<N> tanh(const Dual<N>& x) {
    const double t = std::tanh(x.v);
    return chain(t, 1.0 - t * t, x);
}
template <int N> inline Dual<N> erf(const Dual<N>& x) {
    constexpr double two_over_sqrt_pi = 1.1283791670955126;
    return chain(std::erf(x.v), two_over_sqrt_pi * std::exp(-x.v * x.v), x);
}
template <int N> inline Dual<N> abs(const Dual<N>& x) { return x.v < 0.0 ? -x : x; }
template <int N> inline Dual<N> min(const Dual<N>& a, const Dual<N>& b) { return a.v <= b.v ? a : b; }
template <int N> inline Dual<N> max(const Dual<N>& a, const Dual<N>& b) { return a.v >= b.v ? a : b; }
template <int N> inline Dual<N> atan2(const Dual<N>& y, const Dual<N>& x) {
    Dual<N> r(std::atan2(y.v, x.v));
    const double inv = 1.0 / (x.v * x.v + y.v * y.v);
    for (int i = 0; i < N; ++i) r.d[i] = (x.v * y.d[i] - y.v * x.d[i]) * inv;
    return r;
}
/// Logistic 1/(1+e^-x), the smooth Heaviside surrogate.
template <int N> inline Dual<N> sigmoid(const Dual<N>& x) {
    const double s = 1.0 / (1.0 + std::exp(-x.v));
    return chain(s, s * (1.0 - s), x);
}

/// Scalar access that works for both double and Dual.
inline double value_of(double x) { return x; }
template <int N> inline double value_of(const Dual<N>& x) { return x.v; }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace dfd
