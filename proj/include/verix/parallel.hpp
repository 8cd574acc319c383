#pragma once

namespace verix {

/// Sets the OpenMP team size for the data-parallel kernels. Values < 1 keep
/// the runtime default. No-op without OpenMP.
void set_num_threads(int threads);

int max_threads();

} // namespace verix
