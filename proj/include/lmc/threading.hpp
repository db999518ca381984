#ifndef LMC_THREADING_HPP
#define LMC_THREADING_HPP

#include <functional>

namespace lmc {

// Global worker count. 1 (the default) keeps every code path strictly
// sequential; higher values only parallelize loops whose iterations write
// to disjoint, index-addressed slots, so results do not depend on N.
int global_threads();
void set_global_threads(int n);

// Runs fn(i) for i in [0,n). With threads <= 1 this is a plain loop.
void parallel_for(int n, const std::function<void(int)>& fn, int threads = 0);

}  // namespace lmc

#endif
