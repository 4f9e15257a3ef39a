#pragma once

#include <optional>

namespace depshaper {

/// Sets the OpenMP thread count from `requested`, else from the
/// DEPSHAPER_THREADS environment variable, else leaves the runtime default.
/// Returns the count in effect.  Throws std::invalid_argument on a value < 1.
int configure_threads(std::optional<int> requested);

int max_threads();

}  // namespace depshaper
