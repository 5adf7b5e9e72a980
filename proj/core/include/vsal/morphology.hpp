#pragma once

#include "vsal/tensor.hpp"

namespace vsal {

// Binary morphology on [H,W] tensors holding 0/1. Pixels outside the image
// are treated as 0.

/// Dilation by a Euclidean disk of the given radius (Chebyshev square when
/// `chebyshev` is set).
Tensor dilate(const Tensor& mask, int radius, bool chebyshev = false);

/// 3x3 (8-neighbourhood) erosion.
Tensor erode3x3(const Tensor& mask);

/// Morphological boundary: mask minus its erosion.
Tensor boundary(const Tensor& mask);

/// Zhang-Suen thinning down to a one-pixel-wide skeleton. The result is a
/// subset of the input mask.
Tensor skeletonize(const Tensor& mask);

/// 8-connected component containing (seed_y, seed_x); all-zero mask or a
/// seed outside the mask yields an all-zero result.
Tensor component_at(const Tensor& mask, int seed_y, int seed_x);

/// Nearest nonzero pixel to (y, x) by squared Euclidean distance, raster
/// order breaking ties. Returns false if the mask is empty.
bool nearest_on(const Tensor& mask, int y, int x, int* out_y, int* out_x);

std::int64_t count_nonzero(const Tensor& t);

}  // namespace vsal
