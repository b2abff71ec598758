#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "topicattn/detail/binary_io.hpp"
#include "topicattn/error.hpp"

namespace topicattn {

// Attention archive: a directory holding manifest.json and one or more record
// files. Each record file is the 4-byte magic "ATN1" followed by records of
//
//   sentence_id   u64
//   doc_id        u64
//   word_count    u32
//   words         word_count x (u16 byte length, UTF-8 bytes)
//   token_count   u32                      (T, specials included)
//   piece_to_word T x i32                  (-1 marks a special token)
//   attention     n_layers x T x T float32, row-major, head-averaged
//
// all little-endian, no padding.

inline constexpr char archive_magic[4] = {'A', 'T', 'N', '1'};

struct ArchiveManifest {
  std::string model_name;
  std::uint32_t n_layers = 0;
  std::uint32_t n_heads = 0;
  std::uint32_t max_seq_len = 0;
  std::vector<std::string> record_files;

  bool operator==(const ArchiveManifest&) const = default;
};

struct AttentionRecord {
  std::uint64_t sentence_id = 0;
  std::uint64_t doc_id = 0;
  std::vector<std::string> words;
  std::vector<std::int32_t> piece_to_word;
  std::vector<std::vector<float>> layers; // n_layers matrices of T*T

  std::size_t token_count() const { return piece_to_word.size(); }

  float at(std::size_t layer, std::size_t row, std::size_t col) const
  {
    return layers[layer][row * token_count() + col];
  }

  bool operator==(const AttentionRecord&) const = default;
};

struct AttentionArchive {
  ArchiveManifest manifest;
  std::vector<AttentionRecord> records;
};

inline nlohmann::json to_json(const ArchiveManifest& m)
{
  return {{"model_name", m.model_name},   {"n_layers", m.n_layers},        {"n_heads", m.n_heads},
          {"max_seq_len", m.max_seq_len}, {"record_files", m.record_files}};
}

inline ArchiveManifest read_manifest(const std::filesystem::path& dir)
{
  const auto file = dir / "manifest.json";
  ArchiveManifest m;
  try {
    auto j = nlohmann::json::parse(detail::read_text_file(file));
    m.model_name = j.at("model_name").get<std::string>();
    m.n_layers = j.at("n_layers").get<std::uint32_t>();
    m.n_heads = j.at("n_heads").get<std::uint32_t>();
    m.max_seq_len = j.at("max_seq_len").get<std::uint32_t>();
    m.record_files = j.at("record_files").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(file.string() + ": " + e.what());
  }
  if (m.n_layers == 0)
    throw CorruptArchive(file.string() + ": n_layers must be positive");
  return m;
}

struct RecordCheckOptions {
  double row_sum_tolerance = 1e-3;
};

/// Every way a parsed record can violate the manifest or the format's
/// invariants; empty when the record is valid.
inline std::vector<std::string> check_record(const AttentionRecord& r, const ArchiveManifest& m,
                                             RecordCheckOptions opts = {})
{
  std::vector<std::string> problems;
  const std::size_t t = r.token_count();
  if (m.max_seq_len > 0 && t > m.max_seq_len)
    problems.push_back("token_count " + std::to_string(t) + " exceeds max_seq_len " + std::to_string(m.max_seq_len));
  for (std::size_t i = 0; i < t; ++i) {
    const auto p = r.piece_to_word[i];
    if (p < -1 || (p >= 0 && static_cast<std::size_t>(p) >= r.words.size())) {
      problems.push_back("piece_to_word[" + std::to_string(i) + "]=" + std::to_string(p) + " out of range for " +
                         std::to_string(r.words.size()) + " words");
      break;
    }
  }
  if (r.layers.size() != m.n_layers)
    problems.push_back("expected " + std::to_string(m.n_layers) + " layers, found " + std::to_string(r.layers.size()));
  for (std::size_t l = 0; l < r.layers.size(); ++l) {
    const auto& a = r.layers[l];
    if (a.size() != t * t) {
      problems.push_back("layer " + std::to_string(l) + " matrix has wrong size");
      continue;
    }
    bool reported_entry = false, reported_row = false;
    for (std::size_t row = 0; row < t; ++row) {
      double sum = 0.0;
      for (std::size_t col = 0; col < t; ++col) {
        const float v = a[row * t + col];
        if (!std::isfinite(v) || v < 0.0f) {
          if (!reported_entry)
            problems.push_back("layer " + std::to_string(l) + " row " + std::to_string(row) +
                               ": negative or non-finite entry");
          reported_entry = true;
        }
        sum += v;
      }
      if (!(std::abs(sum - 1.0) <= opts.row_sum_tolerance) && !reported_row) {
        problems.push_back("layer " + std::to_string(l) + " row " + std::to_string(row) + " sums to " +
                           std::to_string(sum));
        reported_row = true;
      }
    }
  }
  return problems;
}

inline std::string encode_record(const AttentionRecord& r)
{
  std::string out;
  detail::put<std::uint64_t>(out, r.sentence_id);
  detail::put<std::uint64_t>(out, r.doc_id);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(r.words.size()));
  for (const auto& w : r.words) {
    if (w.size() > 0xFFFF)
      throw InputError("word longer than 65535 bytes in sentence " + std::to_string(r.sentence_id));
    detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(w.size()));
    out += w;
  }
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(r.token_count()));
  detail::put_array<std::int32_t>(out, r.piece_to_word);
  for (const auto& layer : r.layers)
    detail::put_array<float>(out, layer);
  return out;
}

namespace detail {

// Reads exact byte counts from a stream; a short read is a truncated archive.
class StreamSource {
public:
  explicit StreamSource(const std::filesystem::path& path) : in_(path, std::ios::binary), name_(path.string())
  {
    if (!in_)
      throw InputError("cannot open " + name_);
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  void read(void* dst, std::size_t n, const char* what)
  {
    if (n == 0)
      return;
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw CorruptArchive(name_ + ": truncated record (" + what + ")");
  }

  template <typename T>
  T get(const char* what)
  {
    T v;
    read(&v, sizeof(T), what);
    return v;
  }

  const std::string& name() const { return name_; }

private:
  std::ifstream in_;
  std::string name_;
};

inline void expect_magic(StreamSource& src)
{
  char magic[4];
  try {
    src.read(magic, 4, "magic");
  } catch (const CorruptArchive&) {
    throw CorruptArchive(src.name() + ": bad magic (file too short)");
  }
  if (std::memcmp(magic, archive_magic, 4) != 0)
    throw CorruptArchive(src.name() + ": bad magic");
}

inline AttentionRecord decode_record(StreamSource& src, std::uint32_t n_layers)
{
  AttentionRecord r;
  r.sentence_id = src.get<std::uint64_t>("sentence_id");
  r.doc_id = src.get<std::uint64_t>("doc_id");
  const auto word_count = src.get<std::uint32_t>("word_count");
  r.words.reserve(std::min<std::uint32_t>(word_count, 1u << 16));
  for (std::uint32_t i = 0; i < word_count; ++i) {
    const auto len = src.get<std::uint16_t>("word length");
    std::string w(len, '\0');
    src.read(w.data(), len, "word bytes");
    r.words.push_back(std::move(w));
  }
  const auto t = src.get<std::uint32_t>("token_count");
  if (t > (1u << 16))
    throw CorruptArchive(src.name() + ": implausible token_count " + std::to_string(t));
  r.piece_to_word.resize(t);
  src.read(r.piece_to_word.data(), t * sizeof(std::int32_t), "piece_to_word");
  r.layers.assign(n_layers, std::vector<float>(static_cast<std::size_t>(t) * t));
  for (auto& layer : r.layers)
    src.read(layer.data(), layer.size() * sizeof(float), "attention matrix");
  return r;
}

} // namespace detail

/// Streams records in manifest file order, validating each one.
class ArchiveReader {
public:
  explicit ArchiveReader(std::filesystem::path dir) : dir_(std::move(dir)), manifest_(read_manifest(dir_)) {}

  const ArchiveManifest& manifest() const { return manifest_; }

  /// Calls fn(record) for every record; throws CorruptArchive on the first invalid one.
  void for_each(const std::function<void(const AttentionRecord&)>& fn) const
  {
    for (const auto& file : manifest_.record_files) {
      detail::StreamSource src(dir_ / file);
      detail::expect_magic(src);
      while (!src.at_end()) {
        auto r = detail::decode_record(src, manifest_.n_layers);
        auto problems = check_record(r, manifest_);
        if (!problems.empty())
          throw CorruptArchive(file + ": sentence " + std::to_string(r.sentence_id) + ": " + problems.front());
        fn(r);
      }
    }
  }

private:
  std::filesystem::path dir_;
  ArchiveManifest manifest_;
};

inline AttentionArchive read_archive(const std::filesystem::path& dir)
{
  ArchiveReader reader(dir);
  AttentionArchive a;
  a.manifest = reader.manifest();
  reader.for_each([&](const AttentionRecord& r) { a.records.push_back(r); });
  return a;
}

/// Appends records to numbered files, then writes the manifest on finish().
class ArchiveWriter {
public:
  ArchiveWriter(std::filesystem::path dir, ArchiveManifest manifest, std::size_t records_per_file = 50000)
      : dir_(std::move(dir)), manifest_(std::move(manifest)), per_file_(std::max<std::size_t>(records_per_file, 1))
  {
    manifest_.record_files.clear();
    std::filesystem::create_directories(dir_);
  }

  void append(const AttentionRecord& r)
  {
    auto problems = check_record(r, manifest_);
    if (!problems.empty())
      throw InputError("record " + std::to_string(r.sentence_id) + " inconsistent with manifest: " + problems.front());
    if (!out_.is_open() || in_file_ == per_file_)
      open_next();
    const auto bytes = encode_record(r);
    out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    ++in_file_;
  }

  void finish()
  {
    if (!out_.is_open() && manifest_.record_files.empty())
      open_next();
    out_.close();
    if (!out_)
      throw InputError("failed writing archive under " + dir_.string());
    detail::write_file_bytes(dir_ / "manifest.json", to_json(manifest_).dump(2) + "\n");
  }

  const ArchiveManifest& manifest() const { return manifest_; }

private:
  void open_next()
  {
    if (out_.is_open())
      out_.close();
    char name[32];
    std::snprintf(name, sizeof name, "records-%05zu.atn", manifest_.record_files.size());
    manifest_.record_files.emplace_back(name);
    out_.open(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out_)
      throw InputError("cannot create " + (dir_ / name).string());
    out_.write(archive_magic, 4);
    in_file_ = 0;
  }

  std::filesystem::path dir_;
  ArchiveManifest manifest_;
  std::size_t per_file_;
  std::size_t in_file_ = 0;
  std::ofstream out_;
};

inline ArchiveManifest write_archive(const std::filesystem::path& dir, const ArchiveManifest& manifest,
                                     const std::vector<AttentionRecord>& records,
                                     std::size_t records_per_file = 50000)
{
  ArchiveWriter w(dir, manifest, records_per_file);
  for (const auto& r : records)
    w.append(r);
  w.finish();
  return w.manifest();
}

struct RecordVerdict {
  std::string file;
  std::size_t index = 0; // position within its file
  std::uint64_t sentence_id = 0;
  std::vector<std::string> problems;

  bool ok() const { return problems.empty(); }
};

struct ArchiveReport {
  std::vector<std::string> file_errors; // magic, truncation, unreadable files
  std::vector<RecordVerdict> records;

  std::size_t n_failed() const
  {
    std::size_t n = 0;
    for (const auto& r : records)
      n += !r.ok();
    return n;
  }
  bool ok() const { return file_errors.empty() && n_failed() == 0; }

  nlohmann::json to_json() const
  {
    nlohmann::json failed = nlohmann::json::array();
    for (const auto& r : records)
      if (!r.ok())
        failed.push_back({{"file", r.file}, {"index", r.index}, {"sentence_id", r.sentence_id}, {"problems", r.problems}});
    return {{"ok", ok()},
            {"records", records.size()},
            {"passed", records.size() - n_failed()},
            {"failed", n_failed()},
            {"file_errors", file_errors},
            {"failures", failed}};
  }
};

/// Checks an archive without stopping at the first problem. Row sums are held
/// to the dump tool's contract (1e-4), tighter than what the reader accepts.
inline ArchiveReport validate_archive(const std::filesystem::path& dir, RecordCheckOptions opts = {1e-4})
{
  std::error_code ec;
  if (!std::filesystem::exists(dir / "manifest.json", ec))
    throw InputError("no manifest.json under " + dir.string());
  const auto manifest = read_manifest(dir);
  ArchiveReport report;
  for (const auto& file : manifest.record_files) {
    try {
      detail::StreamSource src(dir / file);
      detail::expect_magic(src);
      std::size_t index = 0;
      while (!src.at_end()) {
        auto r = detail::decode_record(src, manifest.n_layers);
        report.records.push_back({file, index++, r.sentence_id, check_record(r, manifest, opts)});
      }
    } catch (const InputError& e) {
      report.file_errors.push_back(e.what());
    }
  }
  return report;
}

} // namespace topicattn
