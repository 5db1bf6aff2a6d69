#pragma once

namespace oodkit {

// Caps the threads used inside data-parallel kernels. 1 gives the strict
// sequential mode. Results do not depend on the thread count: work is split
// by output rows and every element is reduced in a fixed order.
void set_num_threads(int n);
int num_threads();

// Applies OODKIT_THREADS from the environment when set.
void configure_threads_from_env();

}  // namespace oodkit
