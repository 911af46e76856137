#pragma once

#include "arbor/flowfield.hpp"

namespace arbor::flow {

/// Direct zero-padded 2D correlation, one output pixel at a time with double
/// accumulation. Serial; kept as the reference for the parallel kernel.
GrayF convolve_reference(const GrayF& src, const DirectionalKernel& kernel);

/// Same result computed as row-wise AXPY over the kernel's nonzero taps,
/// parallelized over output rows. Each output pixel is accumulated by one
/// thread in a fixed tap order, so results do not depend on the schedule.
GrayF convolve(const GrayF& src, const DirectionalKernel& kernel);

}  // namespace arbor::flow
