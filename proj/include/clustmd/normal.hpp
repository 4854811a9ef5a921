#pragma once

// Standard normal distribution functions used throughout the latent model.

namespace clustmd::normal {

inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double pdf(double x);
double log_pdf(double x);

/// Lower tail probability Phi(x).
double cdf(double x);

/// Upper tail probability 1 - Phi(x), accurate in the right tail.
double ccdf(double x);

/// Scaled complementary error function exp(x^2) erfc(x).
double erfcx(double x);

/// Q(x) / phi(x) for x >= 0 (inverse Mills ratio reciprocal), finite for all x.
double upper_mills(double x);

/// Phi^{-1}(p). Wichura's AS241 rational approximation polished by one
/// Newton step against cdf(). Returns -inf / +inf at p == 0 / p == 1.
double quantile(double p);

}  // namespace clustmd::normal
