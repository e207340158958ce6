// Freestanding runtime shim shared by the kernel and workload modules.
// Only the WASI calls the modules actually need are declared.
#ifndef LMA_KERNEL_RT_H
#define LMA_KERNEL_RT_H

typedef unsigned char u8;
typedef unsigned int u32;
typedef int i32;
typedef unsigned long long u64;
typedef long long i64;
typedef unsigned long usize;

struct ciovec {
  const void* buf;
  usize len;
};
struct iovec {
  void* buf;
  usize len;
};

__attribute__((import_module("wasi_snapshot_preview1"), import_name("fd_write")))
int wasi_fd_write(int fd, const struct ciovec* iovs, int iovs_len, usize* nwritten);
__attribute__((import_module("wasi_snapshot_preview1"), import_name("fd_read")))
int wasi_fd_read(int fd, const struct iovec* iovs, int iovs_len, usize* nread);
__attribute__((import_module("wasi_snapshot_preview1"), import_name("proc_exit")))
_Noreturn void wasi_proc_exit(int code);

void* memset(void* dst, int c, usize n);
void* memcpy(void* dst, const void* src, usize n);

static inline usize rt_strlen(const char* s) {
  usize n = 0;
  while (s[n]) ++n;
  return n;
}

// Formats `v` in decimal into buf (no terminator); returns length.
static inline usize rt_fmt_u64(char* buf, u64 v) {
  char tmp[24];
  usize n = 0;
  do {
    tmp[n++] = (char)('0' + v % 10);
    v /= 10;
  } while (v);
  for (usize i = 0; i < n; ++i) buf[i] = tmp[n - 1 - i];
  return n;
}

#endif

#ifndef LMA_KERNEL_RT_REPORT
#define LMA_KERNEL_RT_REPORT
static char rt_line[96];

// Writes "<name> <value>\n" to stdout with a single fd_write.
static inline void rt_report(const char* name, u64 value) {
  usize n = rt_strlen(name);
  for (usize i = 0; i < n; ++i) rt_line[i] = name[i];
  rt_line[n++] = ' ';
  n += rt_fmt_u64(rt_line + n, value);
  rt_line[n++] = '\n';
  struct ciovec iov = {rt_line, n};
  usize written = 0;
  wasi_fd_write(1, &iov, 1, &written);
}
#endif
