#pragma once

#include <vector>

#include "gpuos/types.hpp"

namespace gpuos {

// Contiguous block-index range of a kernel. TPC set, frequency target and
// priority are attached at dispatch time by the scheduler.
struct AtomRange {
  long lo = 0;
  long hi = 0;  // exclusive
  long size() const { return hi - lo; }
};

// Splits [0,total_blocks) into ceil(predicted/atom_duration) contiguous
// ranges with sizes differing by at most one. The count is clamped to
// [1, floor(total_blocks / min_blocks_per_atom)] so atoms never shrink below
// min_blocks_per_atom; pass the kernel's wave size (assigned TPCs x
// occupancy) to keep every atom at least one full wave.
std::vector<AtomRange> plan_atoms(long total_blocks, Duration predicted,
                                  Duration atom_duration,
                                  long min_blocks_per_atom);

// Short kernels and single-block kernels are not worth splitting.
bool should_atomize(Duration predicted, long total_blocks,
                    Duration atom_duration, double disable_factor = 2.0);

}  // namespace gpuos
