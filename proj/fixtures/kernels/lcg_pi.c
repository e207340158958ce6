// Monte Carlo estimate of pi from a 64-bit LCG, per batch.
#include "kernel_rt.h"

#define BATCHES 16
#define SAMPLES 500000

static u32 hits[BATCHES];
static u64 seeds[BATCHES];

__attribute__((noinline)) static void pi_batch(u32 b) {
  u64 s = 0x2545F4914F6CDD1Dull + b;
  u32 in = 0;
  for (u32 i = 0; i < SAMPLES; ++i) {
    s = s * 6364136223846793005ull + 1442695040888963407ull;
    u32 x = (u32)(s >> 48);
    s = s * 6364136223846793005ull + 1442695040888963407ull;
    u32 y = (u32)(s >> 48);
    if ((u64)x * x + (u64)y * y <= 0xFFFE0001ull) ++in;
  }
  hits[b] = in;
  seeds[b] = s;
}

void _start(void) {
  u64 total = 0;
  for (u32 b = 0; b < BATCHES; ++b) {
    pi_batch(b);
    total += hits[b] + (seeds[b] & 0xFF);
  }
  rt_report("lcg_pi", total);
  wasi_proc_exit(0);
}
