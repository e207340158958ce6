#include <gtest/gtest.h>

#include <cstring>

#include "fixtures.hpp"
#include "lma/attester.hpp"
#include "lma/error.hpp"
#include "lma/instrument.hpp"
#include "lma/wasm/validator.hpp"

using namespace lma;

namespace {

AttesterConfig config_for(const std::string& rel, Policy p) {
  AttesterConfig c;
  c.module_bytes = instrument(test::load_fixture(rel), p).wasm;
  c.session_id = parse_session_id("00112233445566778899aabbccddeeff");
  return c;
}

}  // namespace

TEST(Attester, OneWriteGivesOneSnapshot) {
  AttesterConfig c = config_for("modules/wasm/write_once.wasm", Policy::ImportFunction);
  MemorySink sink;
  RunSummary s = run_attested(c, sink);
  EXPECT_EQ(s.exit_code, 0);
  EXPECT_EQ(s.snapshots_emitted, 1u);
  EXPECT_EQ(s.hook_invocations, 1u);
  EXPECT_EQ(std::string(s.stdout_data.begin(), s.stdout_data.end()), "hi!\n");
  ASSERT_EQ(sink.records().size(), 1u);
  const SnapshotRecord& r = sink.records()[0];
  EXPECT_EQ(r.seq_no, 0u);
  EXPECT_EQ(r.reason_code, 0);
  EXPECT_EQ(session_hex(r.session_id), "00112233445566778899aabbccddeeff");
  EXPECT_EQ(s.total_bytes_raw, 65536u);
  EXPECT_EQ(s.total_bytes_compressed, r.payload.size());
}

TEST(Attester, CaptureIsSynchronousWithGuestWrites) {
  // The guest stores "hi!\n" and the iovec right before the import call.
  AttesterConfig c = config_for("modules/wasm/write_once.wasm", Policy::ImportFunction);
  MemorySink sink;
  run_attested(c, sink);
  Bytes mem = record_memory(sink.records().at(0));
  EXPECT_EQ(std::memcmp(mem.data() + 64, "hi!\n", 4), 0);
  EXPECT_EQ(mem[16], 64);
  EXPECT_EQ(mem[20], 4);
  // fd_write has not run yet, so its nwritten slot is still zero.
  EXPECT_EQ(mem[32], 0);
}

TEST(Attester, SnapshotsTrackPreStoreState) {
  // Under the store policy each snapshot precedes one store.
  AttesterConfig c = config_for("modules/wasm/write_once.wasm", Policy::MemoryInstruction);
  MemorySink sink;
  run_attested(c, sink);
  ASSERT_EQ(sink.records().size(), 3u);
  EXPECT_EQ(record_memory(sink.records()[0])[64], 0);
  EXPECT_EQ(record_memory(sink.records()[1])[64], 'h');
  EXPECT_EQ(record_memory(sink.records()[1])[16], 0);
  EXPECT_EQ(record_memory(sink.records()[2])[16], 64);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(sink.records()[i].seq_no, i);
    EXPECT_EQ(sink.records()[i].reason_code, 2);
  }
}

TEST(Attester, CapKeepsExitCodeAndOutput) {
  AttesterConfig c = config_for("kernels/wasm/collatz.wasm", Policy::MemoryInstruction);
  MemorySink all;
  RunSummary full = run_attested(c, all);
  ASSERT_GT(full.snapshots_emitted, 5u);
  c.max_snapshots = 5;
  MemorySink capped;
  RunSummary cut = run_attested(c, capped);
  EXPECT_EQ(cut.snapshots_emitted, 5u);
  EXPECT_EQ(cut.hook_invocations, full.hook_invocations);
  EXPECT_EQ(cut.exit_code, full.exit_code);
  EXPECT_EQ(cut.stdout_data, full.stdout_data);
  ASSERT_EQ(capped.records().size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(capped.records()[i].seq_no, i);
    EXPECT_EQ(capped.records()[i], all.records()[i]);
  }
  // No gaps below the cap in the uncapped run either.
  for (std::size_t i = 0; i < all.records().size(); ++i) EXPECT_EQ(all.records()[i].seq_no, i);
}

TEST(Attester, AttestationIsTransparent) {
  for (Policy p : {Policy::ImportFunction, Policy::LocalFunction, Policy::MemoryInstruction}) {
    AttesterConfig c = config_for("modules/wasm/echo.wasm", p);
    c.guest.stdin_data = {'a', 'b', 'c'};
    MemorySink sink;
    RunSummary s = run_attested(c, sink);
    EXPECT_EQ(std::string(s.stdout_data.begin(), s.stdout_data.end()), "abc");
    EXPECT_EQ(s.exit_code, 0);
  }
}

TEST(Attester, CaptureBasics) {
  MemorySink sink;
  Capturer cap(SessionId{}, sink, 0);
  Bytes two_pages(131072, 0);
  two_pages[70000] = 9;
  ASSERT_TRUE(cap.capture(two_pages, 1));
  Bytes zero_page(65536, 0);
  ASSERT_TRUE(cap.capture(zero_page, 0));
  ASSERT_EQ(sink.records().size(), 2u);
  EXPECT_EQ(sink.records()[0].seq_no, 0u);
  EXPECT_EQ(sink.records()[0].mem_size_bytes, 131072u);
  EXPECT_EQ(record_memory(sink.records()[0]), two_pages);
  EXPECT_EQ(sink.records()[1].seq_no, 1u);
  EXPECT_LE(sink.records()[1].payload.size(), 8u);
  EXPECT_EQ(sink.bytes(), [&] {
    Bytes b;
    for (const auto& r : sink.records()) append_record(b, r);
    return b;
  }());
}

TEST(Attester, CapturerCap) {
  MemorySink sink;
  Capturer cap(SessionId{}, sink, 2);
  Bytes page(65536, 1);
  EXPECT_TRUE(cap.capture(page, 0));
  EXPECT_TRUE(cap.capture(page, 0));
  EXPECT_FALSE(cap.capture(page, 0));
  EXPECT_EQ(cap.invocations(), 3u);
  EXPECT_EQ(cap.emitted(), 2u);
}

TEST(Attester, FileSinkWritesReadableStream) {
  AttesterConfig c = config_for("modules/wasm/echo.wasm", Policy::ImportFunction);
  c.guest.stdin_data = {'x'};
  const std::string path = testing::TempDir() + "/attester_echo.lmas";
  c.sink = parse_sink("file:" + path);
  RunSummary s = run_attested(c);
  auto recs = parse_stream(read_file(path));
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(s.snapshots_emitted, 2u);
  EXPECT_EQ(recs[1].seq_no, 1u);
}

TEST(Attester, Errors) {
  AttesterConfig plain;
  plain.module_bytes = test::load_fixture("modules/wasm/write_once.wasm");
  MemorySink sink;
  try {
    run_attested(plain, sink);
    FAIL() << "expected MissingHookImport";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingHookImport);
  }
  AttesterConfig c = config_for("modules/wasm/write_once.wasm", Policy::ImportFunction);
  c.sink = parse_sink("file:/nonexistent-dir/x.lmas");
  try {
    run_attested(c);
    FAIL() << "expected SinkUnavailable";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SinkUnavailable);
  }
  c.sink = parse_sink("tcp:127.0.0.1:1");
  try {
    run_attested(c);
    FAIL() << "expected SinkUnavailable";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SinkUnavailable);
  }
  EXPECT_THROW(parse_sink("ftp:x"), Error);
  EXPECT_THROW(parse_session_id("abc"), Error);
}

TEST(Attester, TrapIsReported) {
  AttesterConfig c = config_for("modules/wasm/trap_after_call.wasm", Policy::ImportFunction);
  MemorySink sink;
  RunSummary s = run_attested(c, sink);
  EXPECT_TRUE(s.trap.has_value());
  EXPECT_EQ(s.exit_code, 134);
  EXPECT_EQ(s.snapshots_emitted, 1u);
  EXPECT_NE(to_json(s).find("\"trap\""), std::string::npos);
}

TEST(Attester, SinkParsing) {
  SinkSpec f = parse_sink("file:/tmp/a.lmas");
  EXPECT_EQ(f.kind, SinkSpec::Kind::File);
  EXPECT_EQ(f.path, "/tmp/a.lmas");
  SinkSpec t = parse_sink("tcp:localhost:7000");
  EXPECT_EQ(t.kind, SinkSpec::Kind::Tcp);
  EXPECT_EQ(t.host, "localhost");
  EXPECT_EQ(t.port, 7000);
  EXPECT_NE(random_session_id(), random_session_id());
}
