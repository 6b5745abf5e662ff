#pragma once

#if defined(__SSE__) || defined(__x86_64__)
#include <xmmintrin.h>
#define CARENET_HAS_MXCSR 1
#endif

namespace carenet::nn {

/// Sets flush-to-zero and denormals-are-zero for the current thread while in
/// scope. Subnormal floats otherwise slow saturated backward passes by two
/// orders of magnitude.
class ScopedFlushDenormals {
 public:
  ScopedFlushDenormals() {
#ifdef CARENET_HAS_MXCSR
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040u);
#endif
  }
  ~ScopedFlushDenormals() {
#ifdef CARENET_HAS_MXCSR
    _mm_setcsr(saved_);
#endif
  }
  ScopedFlushDenormals(const ScopedFlushDenormals&) = delete;
  ScopedFlushDenormals& operator=(const ScopedFlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

}  // namespace carenet::nn
