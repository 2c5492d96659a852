#pragma once

// Reference computations that share no code with the library.

#include <array>
#include <cmath>
#include <functional>

#include <Eigen/Dense>

namespace oracle {

struct Moments {
    double mean;
    double variance;
};

/// Mean and variance of the normalised product of two Gaussian pdfs, by
/// numerically integrating the product on a grid. No closed forms are used:
/// the peak is located by golden-section search on the log-density and the
/// integration window grows until the density has dropped by e^-80.
inline Moments product_of_pdfs(double m1, double s1, double m2, double s2, int intervals = 4000) {
    auto log_density = [&](double x) {
        const double a = (x - m1) / s1, b = (x - m2) / s2;
        return -0.5 * a * a - std::log(s1) - 0.5 * b * b - std::log(s2);
    };
    double lo = std::min(m1, m2) - std::max(s1, s2), hi = std::max(m1, m2) + std::max(s1, s2);
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = hi - phi * (hi - lo), d = lo + phi * (hi - lo);
    double fc = log_density(c), fd = log_density(d);
    for (int it = 0; it < 400 && hi - lo > 1e-15 * (1.0 + std::abs(lo)); ++it) {
        if (fc > fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = log_density(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = log_density(d);
        }
    }
    const double peak = 0.5 * (lo + hi);
    const double top = log_density(peak);

    double half = 1e-9 * (1.0 + std::abs(peak));
    while (log_density(peak - half) > top - 80.0 || log_density(peak + half) > top - 80.0) half *= 1.5;

    const int n = intervals + (intervals % 2);
    const double h = 2.0 * half / n;
    double z = 0.0, first = 0.0, second = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double u = -half + i * h;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        const double p = w * std::exp(log_density(peak + u) - top);
        z += p;
        first += p * u;
        second += p * u * u;
    }
    const double offset = first / z;
    return {peak + offset, second / z - offset * offset};
}

/// Homogeneous transform for one modified-DH row, written out element by element.
inline Eigen::Matrix4d mdh(double a, double d, double alpha, double theta) {
    const double ct = std::cos(theta), st = std::sin(theta), ca = std::cos(alpha), sa = std::sin(alpha);
    Eigen::Matrix4d t;
    t << ct, -st, 0, a,
         st * ca, ct * ca, -sa, -d * sa,
         st * sa, ct * sa, ca, d * ca,
         0, 0, 0, 1;
    return t;
}

/// Panda flange position by chaining the published modified-DH table.
inline Eigen::Vector3d panda_flange(const Eigen::Matrix<double, 7, 1>& q) {
    const std::array<std::array<double, 3>, 8> table = {{
        {0.0, 0.333, 0.0},
        {0.0, 0.0, -M_PI / 2},
        {0.0, 0.316, M_PI / 2},
        {0.0825, 0.0, M_PI / 2},
        {-0.0825, 0.384, -M_PI / 2},
        {0.0, 0.0, M_PI / 2},
        {0.088, 0.0, M_PI / 2},
        {0.0, 0.107, 0.0},
    }};
    Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
    for (int i = 0; i < 8; ++i) t = t * mdh(table[i][0], table[i][1], table[i][2], i < 7 ? q[i] : 0.0);
    return t.block<3, 1>(0, 3);
}

}  // namespace oracle
