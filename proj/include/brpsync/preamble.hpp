#pragma once

#include <string_view>

#include "brpsync/common.hpp"

// Block-rotated preamble (BRP) construction and block-rotation-angle design.
namespace brpsync::preamble {

struct BasisBlock {
  CVec samples;

  Eigen::Index length() const { return samples.size(); }
  // Sum of |b_n|^2 over the block.
  double energy() const { return samples.squaredNorm(); }
};

// One preamble: M+1 copies of the basis, block m rotated by exp(j*m*theta).
// The first block acts as a guard and is discarded by the receiver.
struct BrpSpec {
  BasisBlock basis;
  double theta = 0.0;
  int num_blocks = 3;

  void validate() const;
};

enum class AngleMethod { closed_form_odd, closed_form_even, root_found, heuristic };

std::string_view to_string(AngleMethod method);

struct AngleSolution {
  double delta = 0.0;
  double residual = 0.0;  // optimality_residual(delta, M)
  AngleMethod method = AngleMethod::root_found;
};

// Chu sequence with root 1; unit modulus samples.
BasisBlock generate_cazac(int length);

// b'_n = b_n * exp(j*n*theta/L)
BasisBlock generalize_cazac(const BasisBlock& base, double theta);

BasisBlock scaled(const BasisBlock& block, double amplitude);

CVec assemble_brp(const BrpSpec& spec);

// Self-interference penalty lambda(x) for M retained blocks. Nonnegative,
// even and 2*pi periodic; the removable singularity at x = 2k*pi evaluates to
// its limit (M^2 - 1) / 3.
double degradation(double x, int num_blocks);

// M^2 sin^2(x/2) - sin^2(M x / 2), evaluated without cancellation. Strictly
// positive on (0, 2*pi) for M >= 3 and zero at multiples of 2*pi.
double interference_gap(double x, int num_blocks);

// M cos(M d/2) sin(d/2) - sin(M d/2) cos(d/2); lambda vanishes exactly where
// this does (away from d = 0).
double optimality_residual(double delta, int num_blocks);

AngleSolution optimal_delta(int num_blocks);

// (1 - M / (M^2 - 1)) * pi, defined for even M >= 4.
double heuristic_delta(int num_blocks);

// Second-order coefficient of lambda(delta + eps) around a zero of lambda.
double taylor_p2(double delta, int num_blocks);

}  // namespace brpsync::preamble
