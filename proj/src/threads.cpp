#include "moodseq/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace moodseq {

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace moodseq
