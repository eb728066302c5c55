#pragma once

#include "dcdsm/autodiff.hpp"
#include "dcdsm/tensor.hpp"

namespace dcdsm {

/// One analysis level of the orthonormal 2D Haar transform.
///
/// Each subband has the source's leading extents and half its spatial
/// extents. For a 2x2 block [[a,b],[c,d]]:
///   LL = (a+b+c+d)/2   LH = (a-b+c-d)/2   HL = (a+b-c-d)/2   HH = (a-b-c+d)/2
/// so LH responds to column differences and HL to row differences.
struct WaveletSubbands {
  Tensor ll, lh, hl, hh;
};

/// Input [C,H,W] or [N,C,H,W] with even H and W. Throws ShapeError otherwise.
WaveletSubbands dwt2(const Tensor& x);
/// Exact inverse of dwt2. Throws InvalidArgument if subband shapes differ.
Tensor idwt2(const WaveletSubbands& s);

namespace ad {

struct SubbandVars {
  Var ll, lh, hl, hh;
};

SubbandVars dwt2(const Var& x);
Var idwt2(const SubbandVars& s);

}  // namespace ad

}  // namespace dcdsm
