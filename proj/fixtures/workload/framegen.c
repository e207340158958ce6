// Structured workload: reads a seed line from stdin, then renders a series of
// patterned frames into a fixed region, announcing each with one fd_write.
#include "../kernels/kernel_rt.h"

#define FRAME_BYTES 32768
#define FRAMES 6

static u8 frame[FRAME_BYTES];
static u8 input[64];

static u32 next(u32* s) {
  *s ^= *s << 13;
  *s ^= *s >> 17;
  *s ^= *s << 5;
  return *s;
}

__attribute__((noinline)) static void render(u32 kind, u32 seed) {
  u32 s = seed | 1;
  u32 period = 16 + (next(&s) & 31);
  u32 phase = next(&s) & 255;
  for (u32 i = 0; i < FRAME_BYTES; ++i) {
    u32 x = i & 255, y = i >> 8;
    u8 v;
    switch (kind % 4) {
      case 0: v = (u8)(x + phase); break;                              // horizontal gradient
      case 1: v = ((y / period) & 1) ? 220 : 30; break;                // stripes
      case 2: v = (((x / period) ^ (y / period)) & 1) ? 200 : 40; break;  // checkerboard
      default: v = (u8)(2 * y + phase); break;                         // vertical gradient
    }
    frame[i] = v;
  }
}

void _start(void) {
  struct iovec in = {input, sizeof input};
  usize got = 0;
  wasi_fd_read(0, &in, 1, &got);
  u32 seed = 2166136261u;
  for (usize i = 0; i < got; ++i) seed = (seed ^ input[i]) * 16777619u;
  for (u32 f = 0; f < FRAMES; ++f) {
    render(f + (seed & 3), seed + f * 7919);
    u64 sum = 0;
    for (u32 i = 0; i < FRAME_BYTES; i += 64) sum += frame[i];
    rt_report("frame", sum);
  }
  wasi_proc_exit(0);
}
