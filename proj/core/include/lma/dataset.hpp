#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lma/attester.hpp"
#include "lma/bytes.hpp"
#include "lma/nn.hpp"

namespace lma {

struct CorruptionSpec {
  enum class Mode : std::uint8_t { OverflowSmear, RandomFlips, PointerScramble };
  Mode mode = Mode::OverflowSmear;
  // overflow_smear
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  std::uint8_t fill = 0xAA;
  // random_flips / pointer_scramble
  std::uint32_t count = 1;
  std::uint64_t seed = 0;
  std::uint32_t alignment = 4;
  /// Snapshot index the corruption applies to; empty means every snapshot.
  std::optional<std::uint64_t> applied_at;

  bool operator==(const CorruptionSpec&) const = default;
};

const char* corruption_mode_name(CorruptionSpec::Mode m) noexcept;

/// Applies `spec` in place. Throws InvalidArgument if the region falls
/// outside `memory` or count is zero.
void apply_corruption(Bytes& memory, const CorruptionSpec& spec);

/// Ranges used when drawing random specs.
struct CorruptionRanges {
  std::uint64_t smear_min = 512, smear_max = 4096;
  std::uint32_t flips_min = 128, flips_max = 512;
  std::uint32_t scramble_min = 32, scramble_max = 128;
};

CorruptionSpec draw_corruption(std::mt19937_64& rng, std::uint64_t mem_size, const CorruptionRanges& ranges = {});

/// Byte-level mutation: each output applies one to three of flip, splice
/// (with another corpus member), truncate, insert and duplicate. Output
/// lengths stay within [1, 2 * parent length].
std::vector<Bytes> mutate_corpus(const std::vector<Bytes>& corpus, std::uint32_t rounds, std::uint64_t seed);

struct CorpusInput {
  std::string id;
  Bytes data;
};

/// Reads every regular file in `dir`, sorted by name. Throws EmptyCorpus.
std::vector<CorpusInput> load_corpus(const std::string& dir);
/// Writes mutated inputs as `<dir>/mut_<round>_<index>.bin`; returns ids.
std::vector<std::string> mutate_corpus_dir(const std::string& corpus_dir, const std::string& out_dir, std::uint32_t rounds,
                                           std::uint64_t seed);
/// Copies the seeds of `corpus_dir` plus `rounds` of mutants into
/// `<out_dir>/corpus` and returns that directory.
std::string prepare_corpus(const std::string& corpus_dir, const std::string& out_dir, std::uint32_t rounds,
                           std::uint64_t seed);

enum class Split : std::uint8_t { Train, Val, Test };
const char* split_name(Split s) noexcept;
Split parse_split(const std::string& s);
/// Deterministic split from hash(input_id, seed): 70 / 15 / 15.
Split assign_split(const std::string& input_id, std::uint64_t seed);

struct ManifestEntry {
  std::string snapshot_file;  // relative to the manifest directory
  std::uint64_t record_index = 0;
  nn::Label label = nn::Label::Benign;
  std::string source_program;
  std::string input_id;  // one execution
  std::optional<CorruptionSpec> corruption;
  Split split = Split::Train;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  std::string created;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
  bool operator==(const DatasetManifest&) const;
};

DatasetManifest load_manifest(const std::string& path);

struct GenerateOptions {
  std::string module_path;  // instrumented module
  std::string corpus_dir;
  std::string out_dir;
  std::uint32_t n_corrupt_per_benign = 1;
  std::uint64_t seed = 7;
  /// Recorded verbatim in the manifest.
  std::string created = "1970-01-01T00:00:00Z";
  std::uint64_t max_snapshots = 0;
  CorruptionRanges ranges;
  std::vector<std::string> guest_args{"guest"};
  /// Receives skipped-input messages.
  std::function<void(const std::string&)> log;
};

/// Attests one run per corpus input (stdin = input bytes) and writes benign
/// and corrupted `.lmas` files plus `manifest.json` under out_dir.
DatasetManifest generate(const GenerateOptions& options);

}  // namespace lma
