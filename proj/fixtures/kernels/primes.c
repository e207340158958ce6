// Trial-division prime statistics per range.
#include "kernel_rt.h"

#define BLOCKS 16
#define SPAN 16000

static u32 counts[BLOCKS];
static u32 firsts[BLOCKS];
static u32 lasts[BLOCKS];
static u64 sums[BLOCKS];

__attribute__((noinline)) static void prime_block(u32 b) {
  u32 count = 0, first = 0, last = 0;
  u64 sum = 0;
  for (u32 n = b * SPAN + 2; n < (b + 1) * SPAN + 2; ++n) {
    u32 is_prime = 1;
    for (u32 d = 2; d * d <= n; ++d) {
      if (n % d == 0) {
        is_prime = 0;
        break;
      }
    }
    if (is_prime) {
      if (!count) first = n;
      last = n;
      ++count;
      sum += n;
    }
  }
  counts[b] = count;
  firsts[b] = first;
  lasts[b] = last;
  sums[b] = sum;
}

void _start(void) {
  u64 digest = 0;
  for (u32 b = 0; b < BLOCKS; ++b) {
    prime_block(b);
    digest = digest * 17 + counts[b] + firsts[b] + lasts[b] + sums[b];
  }
  rt_report("primes", digest);
  wasi_proc_exit(0);
}
