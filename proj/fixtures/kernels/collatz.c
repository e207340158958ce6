// Longest Collatz chain per block of starting values.
#include "kernel_rt.h"

#define BLOCKS 16
#define SPAN 6000

static u32 best_len[BLOCKS];
static u32 best_arg[BLOCKS];
static u64 block_steps[BLOCKS];

__attribute__((noinline)) static void collatz_block(u32 b) {
  u32 best = 0, arg = 0;
  u64 steps = 0;
  for (u32 n = b * SPAN + 1; n <= (b + 1) * SPAN; ++n) {
    u64 x = n;
    u32 len = 0;
    while (x != 1) {
      x = (x & 1) ? 3 * x + 1 : x >> 1;
      ++len;
    }
    steps += len;
    if (len > best) {
      best = len;
      arg = n;
    }
  }
  best_len[b] = best;
  best_arg[b] = arg;
  block_steps[b] = steps;
}

void _start(void) {
  u64 digest = 0;
  for (u32 b = 0; b < BLOCKS; ++b) {
    collatz_block(b);
    digest = digest * 31 + best_len[b] * 7 + best_arg[b] + block_steps[b];
  }
  rt_report("collatz", digest);
  wasi_proc_exit(0);
}
