#include "gpuos/atomizer.hpp"

#include <algorithm>

namespace gpuos {

std::vector<AtomRange> plan_atoms(long total_blocks, Duration predicted,
                                  Duration atom_duration,
                                  long min_blocks_per_atom) {
  if (total_blocks < 1) throw ConfigError("total_blocks must be >= 1");
  long count = 1;
  if (predicted > 0 && atom_duration > 0)
    count = (predicted + atom_duration - 1) / atom_duration;
  long max_count = total_blocks;
  if (min_blocks_per_atom > 1)
    max_count = std::max(1L, total_blocks / min_blocks_per_atom);
  count = std::clamp(count, 1L, max_count);

  // Even split: `rem` atoms of size base+1 first, the rest of size base.
  std::vector<AtomRange> atoms;
  atoms.reserve(count);
  long base = total_blocks / count;
  long rem = total_blocks % count;
  long at = 0;
  for (long i = 0; i < count; ++i) {
    long size = base + (i < rem ? 1 : 0);
    atoms.push_back({at, at + size});
    at += size;
  }
  return atoms;
}

bool should_atomize(Duration predicted, long total_blocks,
                    Duration atom_duration, double disable_factor) {
  if (total_blocks <= 1) return false;
  if (static_cast<double>(predicted) <
      disable_factor * static_cast<double>(atom_duration))
    return false;
  return true;
}

}  // namespace gpuos
