#pragma once

#include <cmath>
#include <span>

namespace logme {

/// Neumaier-compensated accumulator. Results depend only on the order in
/// which terms are added, so a fixed loop order gives bit-stable sums.
class CompensatedSum {
public:
    CompensatedSum() = default;
    explicit CompensatedSum(double init) : sum_(init) {}

    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            c_ += (sum_ - t) + x;
        } else {
            c_ += (x - t) + sum_;
        }
        sum_ = t;
    }

    CompensatedSum& operator+=(double x) noexcept {
        add(x);
        return *this;
    }

    double value() const noexcept { return sum_ + c_; }

private:
    double sum_ = 0.0;
    double c_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) noexcept {
    CompensatedSum acc;
    for (double x : xs) acc.add(x);
    return acc.value();
}

inline double compensated_dot(std::span<const double> a, std::span<const double> b) noexcept {
    CompensatedSum acc;
    const auto n = a.size() < b.size() ? a.size() : b.size();
    for (std::size_t i = 0; i < n; ++i) acc.add(a[i] * b[i]);
    return acc.value();
}

}  // namespace logme
