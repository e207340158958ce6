// FNV-1a over an xorshift-generated byte stream, per block digests.
#include "kernel_rt.h"

#define BLOCKS 16
#define BYTES 400000

static u64 digests[BLOCKS];
static u32 ones[BLOCKS];

__attribute__((noinline)) static void hash_block(u32 b) {
  u64 state = 0x9E3779B97F4A7C15ull ^ (u64)(b + 1) * 0x100000001B3ull;
  u64 h = 0xCBF29CE484222325ull;
  u32 bits = 0;
  for (u32 i = 0; i < BYTES; ++i) {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    u8 byte = (u8)(state >> 24);
    h = (h ^ byte) * 0x100000001B3ull;
    bits += __builtin_popcount(byte);
  }
  digests[b] = h;
  ones[b] = bits;
}

void _start(void) {
  u64 digest = 0;
  for (u32 b = 0; b < BLOCKS; ++b) {
    hash_block(b);
    digest ^= digests[b] + ones[b];
  }
  rt_report("fnv", digest);
  wasi_proc_exit(0);
}
