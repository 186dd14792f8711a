#pragma once

#include <span>
#include <stdexcept>

namespace decan::eval {

// I_x(a, b), evaluated with the Lentz continued fraction.
double regularized_incomplete_beta(double x, double a, double b);

// P(T <= t) for Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

struct TTestResult {
  double t{0.0};
  int df{0};
  double p{1.0};  // two-tailed
};

// Thrown when the paired differences have zero variance.
class DegenerateTest : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// t = mean(d) / (sd(d) / sqrt(n)) with d = a - b and the n - 1 standard deviation.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace decan::eval
