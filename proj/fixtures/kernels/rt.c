#include "kernel_rt.h"

void* memset(void* dst, int c, usize n) {
  u8* d = (u8*)dst;
  for (usize i = 0; i < n; ++i) d[i] = (u8)c;
  return dst;
}

void* memcpy(void* dst, const void* src, usize n) {
  u8* d = (u8*)dst;
  const u8* s = (const u8*)src;
  for (usize i = 0; i < n; ++i) d[i] = s[i];
  return dst;
}
