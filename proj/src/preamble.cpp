#include "brpsync/preamble.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace brpsync::preamble {
namespace {

void require_blocks(int num_blocks, int minimum, const char* what) {
  if (num_blocks < minimum) {
    throw Error(ErrorCode::invalid_argument,
                std::string(what) + ": need at least " + std::to_string(minimum) +
                    " blocks, got " + std::to_string(num_blocks));
  }
}

// The Dirichlet kernel sin(Mu)/sin(u) = sum_k cos(c_k u) with
// c_k = 2k - M + 1 lets both lambda's numerator and the gap be written as sums
// of nonnegative or non-cancelling terms.
struct DirichletSums {
  double kernel = 0.0;         // D(u) = sum cos(c u)
  double deficit = 0.0;        // M - D(u) = 2 sum sin^2(c u / 2)
  double weighted_sine = 0.0;  // sum c sin(c u) = -D'(u)
};

DirichletSums dirichlet_sums(double u, int m) {
  DirichletSums s;
  for (int k = 0; k < m; ++k) {
    const double c = 2.0 * k - m + 1;
    const double half = std::sin(0.5 * c * u);
    s.kernel += std::cos(c * u);
    s.deficit += 2.0 * half * half;
    s.weighted_sine += c * std::sin(c * u);
  }
  return s;
}

double power_sum(int m, int order) {
  double acc = 0.0;
  for (int k = 0; k < m; ++k) acc += std::pow(2.0 * k - m + 1, order);
  return acc;
}

// Fourth-order (in x) expansion of lambda around x = 0, written as the ratio
// of the truncated series of its two factors. u = x / 2.
double degradation_series(double u, int m) {
  const double mu2 = power_sum(m, 2);
  const double mu4 = power_sum(m, 4);
  const double mu6 = power_sum(m, 6);
  const double u2 = u * u;
  const double u4 = u2 * u2;
  const double sine = mu2 - mu4 * u2 / 6.0 + mu6 * u4 / 120.0;
  const double deficit = mu2 / 2.0 - mu4 * u2 / 24.0 + mu6 * u4 / 720.0;
  const double total = 2.0 * m - mu2 * u2 / 2.0 + mu4 * u4 / 24.0;
  return sine * sine / (deficit * total);
}

// Folds x into [0, pi] using evenness and 2*pi periodicity.
double fold(double x) { return std::fabs(std::remainder(x, kTwoPi)); }

constexpr double kSeriesThreshold = 1e-4;

}  // namespace

std::string_view to_string(AngleMethod method) {
  switch (method) {
    case AngleMethod::closed_form_odd: return "closed-form-odd";
    case AngleMethod::closed_form_even: return "closed-form-even";
    case AngleMethod::root_found: return "root-found";
    case AngleMethod::heuristic: return "heuristic";
  }
  return "unknown";
}

void BrpSpec::validate() const {
  if (basis.length() < 1) {
    throw Error(ErrorCode::invalid_argument, "BRP basis block must not be empty");
  }
  require_blocks(num_blocks, 2, "BRP");
}

BasisBlock generate_cazac(int length) {
  if (length < 1) {
    throw Error(ErrorCode::invalid_argument, "CAZAC length must be positive");
  }
  BasisBlock b;
  b.samples.resize(length);
  const double l = length;
  for (int n = 0; n < length; ++n) {
    // n*n and n*(n+1) are reduced modulo 2L first to keep the phase argument
    // small for long sequences.
    const long long nn = static_cast<long long>(n);
    const long long quad = (length % 2 == 0) ? nn * nn : nn * (nn + 1);
    const long long reduced = quad % (2LL * length);
    b.samples[n] = unit_phasor(kPi * static_cast<double>(reduced) / l);
  }
  return b;
}

BasisBlock generalize_cazac(const BasisBlock& base, double theta) {
  BasisBlock out = base;
  const double l = static_cast<double>(base.length());
  for (Eigen::Index n = 0; n < base.length(); ++n) {
    out.samples[n] *= unit_phasor(static_cast<double>(n) * theta / l);
  }
  return out;
}

BasisBlock scaled(const BasisBlock& block, double amplitude) {
  BasisBlock out = block;
  out.samples *= amplitude;
  return out;
}

CVec assemble_brp(const BrpSpec& spec) {
  spec.validate();
  const Eigen::Index l = spec.basis.length();
  CVec x((spec.num_blocks + 1) * l);
  for (int m = 0; m <= spec.num_blocks; ++m) {
    x.segment(m * l, l) = unit_phasor(m * spec.theta) * spec.basis.samples;
  }
  return x;
}

double degradation(double x, int num_blocks) {
  require_blocks(num_blocks, 3, "degradation");
  const double u = 0.5 * fold(x);
  if (std::fabs(std::sin(u)) < kSeriesThreshold) {
    return degradation_series(u, num_blocks);
  }
  const DirichletSums s = dirichlet_sums(u, num_blocks);
  const double total = static_cast<double>(num_blocks) + s.kernel;
  return s.weighted_sine * s.weighted_sine / (s.deficit * total);
}

double interference_gap(double x, int num_blocks) {
  require_blocks(num_blocks, 1, "interference_gap");
  const double u = 0.5 * fold(x);
  const DirichletSums s = dirichlet_sums(u, num_blocks);
  const double su = std::sin(u);
  return su * su * s.deficit * (static_cast<double>(num_blocks) + s.kernel);
}

double optimality_residual(double delta, int num_blocks) {
  const double m = num_blocks;
  return m * std::cos(m * delta / 2.0) * std::sin(delta / 2.0) -
         std::sin(m * delta / 2.0) * std::cos(delta / 2.0);
}

double heuristic_delta(int num_blocks) {
  require_blocks(num_blocks, 4, "heuristic_delta");
  if (num_blocks % 2 != 0) {
    throw Error(ErrorCode::invalid_argument, "heuristic_delta is defined for even M only");
  }
  const double m = num_blocks;
  return (1.0 - m / (m * m - 1.0)) * kPi;
}

double taylor_p2(double delta, int num_blocks) {
  require_blocks(num_blocks, 3, "taylor_p2");
  const double s = std::sin(0.5 * delta);
  if (std::fabs(s) < 1e-12) {
    throw Error(ErrorCode::invalid_argument, "taylor_p2 is unbounded at multiples of 2*pi");
  }
  const double m = num_blocks;
  return (m * m - 1.0) / (4.0 * s * s);
}

namespace {

double bisect_residual(double lo, double hi, int m) {
  double flo = optimality_residual(lo, m);
  for (int it = 0; it < 200 && hi - lo > 4 * std::numeric_limits<double>::epsilon(); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fmid = optimality_residual(mid, m);
    if (fmid == 0.0) return mid;
    if ((fmid < 0) == (flo < 0)) {
      lo = mid;
      flo = fmid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Scans (0.01, 2*pi - 0.01) for sign changes of the residual, refines each by
// bisection and keeps the root with the smallest p2; ties go to the root
// nearest the heuristic angle.
double root_find_delta(int m) {
  constexpr int kGrid = 10000;
  const double lo = 0.01;
  const double hi = kTwoPi - 0.01;
  const double target = (m % 2 == 0 && m >= 4) ? heuristic_delta(m) : kPi;

  double best = std::numeric_limits<double>::quiet_NaN();
  double best_p2 = std::numeric_limits<double>::infinity();
  double prev_x = lo;
  double prev_f = optimality_residual(lo, m);
  for (int i = 1; i <= kGrid; ++i) {
    const double x = lo + (hi - lo) * i / kGrid;
    const double f = optimality_residual(x, m);
    if ((f < 0) != (prev_f < 0) || f == 0.0) {
      const double root = (f == 0.0) ? x : bisect_residual(prev_x, x, m);
      const double p2 = taylor_p2(root, m);
      const bool better = p2 < best_p2 * (1.0 - 1e-12);
      const bool tie = std::fabs(p2 - best_p2) <= 1e-12 * best_p2;
      if (better || (tie && std::fabs(root - target) < std::fabs(best - target))) {
        best = root;
        best_p2 = p2;
      }
    }
    prev_x = x;
    prev_f = f;
  }
  if (std::isnan(best)) {
    throw Error(ErrorCode::no_root,
                "no root of the angle optimality condition bracketed for M=" + std::to_string(m));
  }
  return best;
}

}  // namespace

AngleSolution optimal_delta(int num_blocks) {
  require_blocks(num_blocks, 3, "optimal_delta");
  const int m = num_blocks;
  AngleSolution sol;
  if (m % 2 == 1) {
    sol.delta = kPi;
    sol.method = AngleMethod::closed_form_odd;
  } else if (m <= 8) {
    const double d1 = 2.0 * std::sqrt(21.0);
    const double d2 = 2.0 * std::sqrt(15.0) * std::cos(std::acos(19.0 / (5.0 * std::sqrt(15.0))) / 3.0);
    double closed = 0.0;
    if (m == 4) closed = std::acos(-2.0 / 3.0);
    if (m == 6) closed = std::acos(-(9.0 + d1) / (12.0 + d1));
    if (m == 8) closed = std::acos(-(4.0 + d2) / (5.0 + d2));
    const double found = root_find_delta(m);
    if (std::fabs(closed - found) <= 1e-9) {
      sol.delta = closed;
      sol.method = AngleMethod::closed_form_even;
    } else {
      sol.delta = found;
      sol.method = AngleMethod::root_found;
    }
  } else {
    sol.delta = root_find_delta(m);
    sol.method = AngleMethod::root_found;
  }
  sol.residual = optimality_residual(sol.delta, m);
  return sol;
}

}  // namespace brpsync::preamble
