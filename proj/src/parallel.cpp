#include "cellspan/parallel.hpp"

#include <cstdlib>
#include <string>

namespace cellspan {

int effective_threads() {
#ifdef _OPENMP
    int n = omp_get_max_threads();
    if (const char* env = std::getenv("CELLSPAN_THREADS")) {
        try {
            const int cap = std::stoi(env);
            if (cap >= 1 && cap < n) n = cap;
        } catch (...) {
            // unparsable value: ignore the cap
        }
    }
    return n;
#else
    return 1;
#endif
}

} // namespace cellspan
