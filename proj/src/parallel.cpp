#include "depshaper/parallel.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

#include <omp.h>

namespace depshaper {

int configure_threads(std::optional<int> requested) {
  if (!requested) {
    if (const char* env = std::getenv("DEPSHAPER_THREADS"); env && *env) {
      try {
        requested = std::stoi(env);
      } catch (const std::exception&) {
        throw std::invalid_argument(std::string("DEPSHAPER_THREADS is not an integer: ") + env);
      }
    }
  }
  if (requested) {
    if (*requested < 1) throw std::invalid_argument("thread count must be >= 1");
    omp_set_num_threads(*requested);
  }
  return omp_get_max_threads();
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace depshaper
