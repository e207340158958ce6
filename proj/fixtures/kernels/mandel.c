// Fixed-point Mandelbrot escape counts, one noinline call per row.
#include "kernel_rt.h"

#define ROWS 16
#define COLS 192
#define MAX_ITER 6000

static u32 row_sum[ROWS];
static u32 row_max[ROWS];
static u32 row_inside[ROWS];

__attribute__((noinline)) static void mandel_row(u32 r) {
  const i64 one = 1 << 16;
  i64 ci = -one + (i64)r * 2 * one / ROWS;
  u32 sum = 0, mx = 0, inside = 0;
  for (u32 c = 0; c < COLS; ++c) {
    i64 cr = -2 * one + (i64)c * 3 * one / COLS;
    i64 zr = 0, zi = 0;
    u32 it = 0;
    while (it < MAX_ITER) {
      i64 zr2 = (zr * zr) >> 16, zi2 = (zi * zi) >> 16;
      if (zr2 + zi2 > 4 * one) break;
      i64 nzr = zr2 - zi2 + cr;
      zi = ((2 * zr * zi) >> 16) + ci;
      zr = nzr;
      ++it;
    }
    sum += it;
    if (it > mx) mx = it;
    if (it == MAX_ITER) ++inside;
  }
  row_sum[r] = sum;
  row_max[r] = mx;
  row_inside[r] = inside;
}

void _start(void) {
  u64 digest = 0;
  for (u32 r = 0; r < ROWS; ++r) {
    mandel_row(r);
    digest = digest * 131 + row_sum[r] + row_max[r] * 3 + row_inside[r];
  }
  rt_report("mandel", digest);
  wasi_proc_exit(0);
}
