#include "lma/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "lma/codec.hpp"
#include "lma/error.hpp"
#include "lma/wasm/validator.hpp"

namespace fs = std::filesystem;

namespace lma {

const char* corruption_mode_name(CorruptionSpec::Mode m) noexcept {
  switch (m) {
    case CorruptionSpec::Mode::OverflowSmear: return "overflow_smear";
    case CorruptionSpec::Mode::RandomFlips: return "random_flips";
    case CorruptionSpec::Mode::PointerScramble: return "pointer_scramble";
  }
  return "?";
}

namespace {

CorruptionSpec::Mode parse_mode(const std::string& s) {
  if (s == "overflow_smear") return CorruptionSpec::Mode::OverflowSmear;
  if (s == "random_flips") return CorruptionSpec::Mode::RandomFlips;
  if (s == "pointer_scramble") return CorruptionSpec::Mode::PointerScramble;
  throw Error(Errc::InvalidArgument, "unknown corruption mode '" + s + "'");
}

// Distinct positions drawn by partial Fisher-Yates over `slots` candidates.
std::vector<std::uint64_t> distinct_positions(std::mt19937_64& rng, std::uint64_t slots, std::uint32_t count) {
  std::vector<std::uint64_t> out;
  std::set<std::uint64_t> seen;
  while (out.size() < count) {
    std::uint64_t p = std::uniform_int_distribution<std::uint64_t>(0, slots - 1)(rng);
    if (seen.insert(p).second) out.push_back(p);
  }
  return out;
}

}  // namespace

void apply_corruption(Bytes& memory, const CorruptionSpec& spec) {
  using Mode = CorruptionSpec::Mode;
  std::mt19937_64 rng(spec.seed);
  switch (spec.mode) {
    case Mode::OverflowSmear:
      if (spec.length == 0 || spec.offset + spec.length > memory.size())
        throw Error(Errc::InvalidArgument, "smear region outside memory");
      std::fill_n(memory.begin() + static_cast<std::ptrdiff_t>(spec.offset), spec.length, spec.fill);
      break;
    case Mode::RandomFlips: {
      if (spec.count == 0 || spec.count > memory.size()) throw Error(Errc::InvalidArgument, "flip count out of range");
      for (auto p : distinct_positions(rng, memory.size(), spec.count))
        memory[p] ^= static_cast<std::uint8_t>(std::uniform_int_distribution<int>(1, 255)(rng));
      break;
    }
    case Mode::PointerScramble: {
      const std::uint64_t a = std::max<std::uint32_t>(spec.alignment, 1);
      const std::uint64_t slots = memory.size() / a;
      if (spec.count == 0 || spec.count > slots || a < 4) throw Error(Errc::InvalidArgument, "scramble parameters out of range");
      for (auto slot : distinct_positions(rng, slots, spec.count)) {
        std::uint8_t* p = memory.data() + slot * a;
        std::uint32_t old;
        std::memcpy(&old, p, 4);
        std::uint32_t v = static_cast<std::uint32_t>(rng());
        if (v == old) v = ~old;
        std::memcpy(p, &v, 4);
      }
      break;
    }
  }
}

CorruptionSpec draw_corruption(std::mt19937_64& rng, std::uint64_t mem_size, const CorruptionRanges& r) {
  CorruptionSpec s;
  auto pick = [&](std::uint64_t lo, std::uint64_t hi) { return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng); };
  switch (pick(0, 2)) {
    case 0:
      s.mode = CorruptionSpec::Mode::OverflowSmear;
      s.length = std::min(pick(r.smear_min, r.smear_max), mem_size);
      s.offset = pick(0, mem_size - s.length);
      s.fill = static_cast<std::uint8_t>(pick(32, 255));
      break;
    case 1:
      s.mode = CorruptionSpec::Mode::RandomFlips;
      s.count = static_cast<std::uint32_t>(std::min<std::uint64_t>(pick(r.flips_min, r.flips_max), mem_size));
      s.seed = rng();
      break;
    default:
      s.mode = CorruptionSpec::Mode::PointerScramble;
      s.count = static_cast<std::uint32_t>(std::min<std::uint64_t>(pick(r.scramble_min, r.scramble_max), mem_size / 4));
      s.seed = rng();
      break;
  }
  return s;
}

std::vector<Bytes> mutate_corpus(const std::vector<Bytes>& corpus, std::uint32_t rounds, std::uint64_t seed) {
  std::vector<Bytes> out;
  if (corpus.empty() || rounds == 0) return out;
  std::mt19937_64 rng(seed);
  auto pick = [&](std::uint64_t lo, std::uint64_t hi) { return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng); };
  for (std::uint32_t round = 0; round < rounds; ++round) {
    for (const Bytes& parent : corpus) {
      Bytes b = parent.empty() ? Bytes{0} : parent;
      const std::size_t cap = std::max<std::size_t>(2 * parent.size(), 1);
      for (auto ops = pick(1, 3); ops > 0; --ops) {
        switch (pick(0, 4)) {
          case 0:  // flip a few bytes
            for (auto n = pick(1, 4); n > 0; --n) b[pick(0, b.size() - 1)] ^= static_cast<std::uint8_t>(pick(1, 255));
            break;
          case 1: {  // splice a slice of another member over the tail
            const Bytes& other = corpus[pick(0, corpus.size() - 1)];
            if (other.empty()) break;
            std::size_t at = pick(0, b.size() - 1), from = pick(0, other.size() - 1);
            std::size_t n = std::min<std::size_t>(pick(1, other.size() - from), cap - at);
            b.resize(at);
            b.insert(b.end(), other.begin() + static_cast<std::ptrdiff_t>(from),
                     other.begin() + static_cast<std::ptrdiff_t>(from + n));
            break;
          }
          case 2:  // truncate
            b.resize(pick(1, b.size()));
            break;
          case 3: {  // insert random bytes
            if (b.size() >= cap) break;
            std::size_t at = pick(0, b.size());
            std::size_t n = pick(1, std::min<std::size_t>(8, cap - b.size()));
            Bytes ins(n);
            for (auto& x : ins) x = static_cast<std::uint8_t>(rng());
            b.insert(b.begin() + static_cast<std::ptrdiff_t>(at), ins.begin(), ins.end());
            break;
          }
          default: {  // duplicate a block
            if (b.size() >= cap) break;
            std::size_t from = pick(0, b.size() - 1);
            std::size_t n = std::min<std::size_t>(pick(1, b.size() - from), cap - b.size());
            Bytes blk(b.begin() + static_cast<std::ptrdiff_t>(from), b.begin() + static_cast<std::ptrdiff_t>(from + n));
            b.insert(b.begin() + static_cast<std::ptrdiff_t>(pick(0, b.size())), blk.begin(), blk.end());
            break;
          }
        }
      }
      out.push_back(std::move(b));
    }
  }
  return out;
}

std::vector<CorpusInput> load_corpus(const std::string& dir) {
  std::vector<CorpusInput> out;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec))
    if (e.is_regular_file()) out.push_back({e.path().filename().string(), read_file(e.path().string())});
  if (ec) throw Error(Errc::EmptyCorpus, "cannot read corpus directory " + dir + ": " + ec.message());
  if (out.empty()) throw Error(Errc::EmptyCorpus, "corpus directory " + dir + " has no files");
  std::sort(out.begin(), out.end(), [](const CorpusInput& a, const CorpusInput& b) { return a.id < b.id; });
  return out;
}

std::vector<std::string> mutate_corpus_dir(const std::string& corpus_dir, const std::string& out_dir, std::uint32_t rounds,
                                           std::uint64_t seed) {
  auto corpus = load_corpus(corpus_dir);
  std::vector<Bytes> seeds;
  for (const auto& c : corpus) seeds.push_back(c.data);
  auto mutated = mutate_corpus(seeds, rounds, seed);
  fs::create_directories(out_dir);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < mutated.size(); ++i) {
    std::string id = "mut_" + std::to_string(i / seeds.size()) + "_" + std::to_string(i % seeds.size()) + ".bin";
    write_file((fs::path(out_dir) / id).string(), mutated[i]);
    ids.push_back(id);
  }
  return ids;
}

std::string prepare_corpus(const std::string& corpus_dir, const std::string& out_dir, std::uint32_t rounds,
                           std::uint64_t seed) {
  fs::path merged = fs::path(out_dir) / "corpus";
  fs::create_directories(merged);
  for (const auto& in : load_corpus(corpus_dir)) write_file((merged / in.id).string(), in.data);
  mutate_corpus_dir(corpus_dir, merged.string(), rounds, seed);
  return merged.string();
}

const char* split_name(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw Error(Errc::InvalidArgument, "unknown split '" + s + "'");
}

Split assign_split(const std::string& input_id, std::uint64_t seed) {
  // FNV-1a over the id followed by the seed bytes.
  std::uint64_t h = 0xCBF29CE484222325ull;
  auto mix = [&h](std::uint8_t b) { h = (h ^ b) * 0x100000001B3ull; };
  for (char c : input_id) mix(static_cast<std::uint8_t>(c));
  for (int i = 0; i < 8; ++i) mix(static_cast<std::uint8_t>(seed >> (8 * i)));
  h ^= h >> 29;  // fold high bits into the low digits used below
  const auto bucket = h % 20;
  return bucket < 14 ? Split::Train : bucket < 17 ? Split::Val : Split::Test;
}

namespace {

using J = nlohmann::ordered_json;

J spec_json(const CorruptionSpec& s) {
  J j;
  j["mode"] = corruption_mode_name(s.mode);
  switch (s.mode) {
    case CorruptionSpec::Mode::OverflowSmear:
      j["region_offset"] = s.offset;
      j["length"] = s.length;
      j["fill_byte"] = s.fill;
      break;
    case CorruptionSpec::Mode::RandomFlips:
      j["count"] = s.count;
      j["seed"] = s.seed;
      break;
    case CorruptionSpec::Mode::PointerScramble:
      j["count"] = s.count;
      j["seed"] = s.seed;
      j["alignment"] = s.alignment;
      break;
  }
  j["applied_at"] = s.applied_at ? J(*s.applied_at) : J("all");
  return j;
}

CorruptionSpec spec_from(const J& j) {
  CorruptionSpec s;
  s.mode = parse_mode(j.at("mode").get<std::string>());
  s.offset = j.value("region_offset", std::uint64_t{0});
  s.length = j.value("length", std::uint64_t{0});
  s.fill = j.value("fill_byte", std::uint8_t{0xAA});
  s.count = j.value("count", std::uint32_t{1});
  s.seed = j.value("seed", std::uint64_t{0});
  s.alignment = j.value("alignment", std::uint32_t{4});
  const J& at = j.at("applied_at");
  if (at.is_number()) s.applied_at = at.get<std::uint64_t>();
  return s;
}

}  // namespace

std::string DatasetManifest::to_json() const {
  J j;
  j["seed"] = seed;
  j["created"] = created;
  J arr = J::array();
  for (const auto& e : entries) {
    J x;
    x["snapshot_file"] = e.snapshot_file;
    x["record_index"] = e.record_index;
    x["label"] = nn::label_name(e.label);
    x["source_program"] = e.source_program;
    x["input_id"] = e.input_id;
    x["corruption"] = e.corruption ? spec_json(*e.corruption) : J(nullptr);
    x["split"] = split_name(e.split);
    arr.push_back(std::move(x));
  }
  j["entries"] = std::move(arr);
  return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  DatasetManifest m;
  try {
    J j = J::parse(text);
    m.seed = j.at("seed").get<std::uint64_t>();
    m.created = j.value("created", std::string());
    for (const auto& x : j.at("entries")) {
      ManifestEntry e;
      e.snapshot_file = x.at("snapshot_file").get<std::string>();
      e.record_index = x.at("record_index").get<std::uint64_t>();
      const auto label = x.at("label").get<std::string>();
      if (label != "Benign" && label != "Corrupted") throw Error(Errc::InvalidArgument, "bad label " + label);
      e.label = label == "Corrupted" ? nn::Label::Corrupted : nn::Label::Benign;
      e.source_program = x.at("source_program").get<std::string>();
      e.input_id = x.at("input_id").get<std::string>();
      if (!x.at("corruption").is_null()) e.corruption = spec_from(x.at("corruption"));
      e.split = parse_split(x.at("split").get<std::string>());
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::InvalidArgument, std::string("malformed manifest: ") + ex.what());
  }
  return m;
}

bool DatasetManifest::operator==(const DatasetManifest& o) const { return to_json() == o.to_json(); }

DatasetManifest load_manifest(const std::string& path) {
  Bytes b = read_file(path);
  return DatasetManifest::from_json(std::string(b.begin(), b.end()));
}

DatasetManifest generate(const GenerateOptions& opt) {
  auto corpus = load_corpus(opt.corpus_dir);
  wasm::Module module = wasm::decode_and_validate(read_file(opt.module_path));
  if (!has_hook_import(module)) throw Error(Errc::MissingHookImport, opt.module_path + " is not instrumented");
  const std::string program = fs::path(opt.module_path).filename().string();
  const fs::path snap_dir = fs::path(opt.out_dir) / "snapshots";
  fs::create_directories(snap_dir);

  DatasetManifest man;
  man.seed = opt.seed;
  man.created = opt.created;
  std::mt19937_64 master(opt.seed);

  for (std::size_t idx = 0; idx < corpus.size(); ++idx) {
    const auto& input = corpus[idx];
    // Per-input generator keeps results independent of skipped inputs.
    std::mt19937_64 rng(master() ^ (idx * 0x9E3779B97F4A7C15ull));
    AttesterConfig cfg;
    cfg.max_snapshots = opt.max_snapshots;
    cfg.guest.args = opt.guest_args;
    cfg.guest.stdin_data = input.data;
    // Session ids derive from the seed so regenerated files are identical.
    SessionId sid;
    for (auto& b : sid) b = static_cast<std::uint8_t>(rng());
    cfg.session_id = sid;
    MemorySink sink;
    RunSummary sum;
    try {
      sum = run_attested(module, cfg, sink);
      if (sum.trap) throw Error(Errc::RunFailure, "trap: " + *sum.trap);
      if (sum.exit_code != 0) throw Error(Errc::RunFailure, "exit code " + std::to_string(sum.exit_code));
      if (sink.records().empty()) throw Error(Errc::RunFailure, "no snapshots emitted");
    } catch (const Error& e) {
      if (opt.log) opt.log("skipping input " + input.id + ": " + e.what());
      continue;
    }
    const Split split = assign_split(input.id, opt.seed);
    const std::string benign_file = "snapshots/" + input.id + ".lmas";
    write_file((fs::path(opt.out_dir) / benign_file).string(), sink.bytes());
    for (std::size_t i = 0; i < sink.records().size(); ++i)
      man.entries.push_back({benign_file, i, nn::Label::Benign, program, input.id, std::nullopt, split});

    std::vector<Bytes> memories;
    for (const auto& rec : sink.records()) memories.push_back(record_memory(rec));
    for (std::uint32_t v = 0; v < opt.n_corrupt_per_benign; ++v) {
      SessionId vid;
      for (auto& b : vid) b = static_cast<std::uint8_t>(rng());
      Bytes stream;
      std::vector<CorruptionSpec> specs;
      for (std::size_t i = 0; i < memories.size(); ++i) {
        // Redraw until the copy differs so every corrupted label is sound.
        Bytes mem;
        CorruptionSpec spec;
        do {
          mem = memories[i];
          spec = draw_corruption(rng, mem.size(), opt.ranges);
          apply_corruption(mem, spec);
        } while (mem == memories[i]);
        append_record(stream, make_record(vid, i, sink.records()[i].reason_code, mem));
        spec.applied_at = i;
        specs.push_back(spec);
      }
      const std::string cid = input.id + "#c" + std::to_string(v);
      const std::string cfile = "snapshots/" + input.id + ".c" + std::to_string(v) + ".lmas";
      write_file((fs::path(opt.out_dir) / cfile).string(), stream);
      for (std::size_t i = 0; i < specs.size(); ++i)
        man.entries.push_back({cfile, i, nn::Label::Corrupted, program, cid, specs[i], split});
    }
  }
  if (man.entries.empty()) throw Error(Errc::EmptyCorpus, "no corpus input produced snapshots");
  write_file((fs::path(opt.out_dir) / "manifest.json").string(), [&] {
    std::string s = man.to_json();
    return Bytes(s.begin(), s.end());
  }());
  return man;
}

}  // namespace lma
