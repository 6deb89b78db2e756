#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "chronoseme/common.hpp"
#include "chronoseme/records.hpp"

namespace chronoseme {

static_assert(std::endian::native == std::endian::little, "CSEM I/O assumes a little-endian host");

// n x d row-major matrix with one id per row.
struct EmbeddingMatrix {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> data;
  std::vector<std::string> ids;
  std::vector<std::string> warnings;

  std::span<const double> row(std::size_t i) const { return {data.data() + i * d, d}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * d, d}; }

  // Rows selected by index, in the given order.
  EmbeddingMatrix subset(std::span<const std::size_t> rows) const {
    EmbeddingMatrix out;
    out.n = rows.size();
    out.d = d;
    out.data.reserve(out.n * d);
    out.ids.reserve(out.n);
    for (auto r : rows) {
      auto src = row(r);
      out.data.insert(out.data.end(), src.begin(), src.end());
      out.ids.push_back(ids[r]);
    }
    return out;
  }
};

inline constexpr std::array<char, 4> kCsemMagic{'C', 'S', 'E', 'M'};
inline constexpr std::uint32_t kCsemVersion = 1;

class CsemError : public FormatError {
 public:
  using FormatError::FormatError;
};

inline void write_csem(std::ostream& out, const EmbeddingMatrix& m) {
  auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  out.write(kCsemMagic.data(), 4);
  put_u32(kCsemVersion);
  put_u32(static_cast<std::uint32_t>(m.n));
  put_u32(static_cast<std::uint32_t>(m.d));
  for (const auto& id : m.ids) {
    if (id.size() > 0xFFFF) throw CsemError("id longer than 65535 bytes: " + id.substr(0, 32));
    const auto len = static_cast<std::uint16_t>(id.size());
    out.write(reinterpret_cast<const char*>(&len), 2);
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  for (double v : m.data) {
    const float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
}

inline void write_csem(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CsemError("cannot write embeddings file " + path.string());
  write_csem(out, m);
}

// Raw file contents in file order; no alignment or norm checks.
inline EmbeddingMatrix read_csem(std::istream& in) {
  auto get = [&](void* dst, std::size_t len) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(len));
    if (static_cast<std::size_t>(in.gcount()) != len) throw CsemError("embeddings file truncated");
  };
  std::array<char, 4> magic{};
  get(magic.data(), 4);
  if (magic != kCsemMagic) throw CsemError("embeddings file: bad magic (expected CSEM)");
  std::uint32_t version = 0, n = 0, d = 0;
  get(&version, 4);
  if (version != kCsemVersion) throw CsemError("embeddings file: unsupported version " + std::to_string(version));
  get(&n, 4);
  get(&d, 4);
  if (d == 0 && n > 0) throw CsemError("embeddings file: zero dimensionality");
  EmbeddingMatrix m;
  m.n = n;
  m.d = d;
  m.ids.resize(n);
  for (auto& id : m.ids) {
    std::uint16_t len = 0;
    get(&len, 2);
    id.resize(len);
    if (len) get(id.data(), len);
  }
  std::vector<float> raw(static_cast<std::size_t>(n) * d);
  if (!raw.empty()) get(raw.data(), raw.size() * 4);
  m.data.assign(raw.begin(), raw.end());
  return m;
}

inline EmbeddingMatrix read_csem(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CsemError("cannot read embeddings file " + path.string());
  return read_csem(in);
}

inline double row_norm(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) s += v * v;
  return std::sqrt(s);
}

struct EmbeddingLoadOptions {
  bool require_unit_norm = true;
  double norm_tolerance = 1e-3;
};

// Reorders rows to record order. Orphan rows are dropped with a warning;
// a record without a row is fatal, as is a non-unit row when required.
inline EmbeddingMatrix align_embeddings(EmbeddingMatrix raw, const std::vector<SubmissionRecord>& records,
                                        const EmbeddingLoadOptions& opts = {}) {
  std::unordered_map<std::string, std::size_t> by_id;
  by_id.reserve(raw.n);
  for (std::size_t i = 0; i < raw.n; ++i) {
    if (!by_id.emplace(raw.ids[i], i).second) throw CsemError("embeddings file: duplicate id '" + raw.ids[i] + "'");
  }
  EmbeddingMatrix out;
  out.n = records.size();
  out.d = raw.d;
  out.data.resize(out.n * out.d);
  out.ids.reserve(out.n);
  std::vector<char> used(raw.n, 0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto it = by_id.find(records[i].id);
    if (it == by_id.end()) throw CsemError("record '" + records[i].id + "' has no embedding row");
    used[it->second] = 1;
    auto src = raw.row(it->second);
    std::copy(src.begin(), src.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * out.d));
    out.ids.push_back(records[i].id);
    if (opts.require_unit_norm) {
      const double norm = row_norm(out.row(i));
      if (!(std::fabs(norm - 1.0) <= opts.norm_tolerance)) {
        throw CsemError("embedding row for '" + records[i].id + "' has norm " + format_double(norm) +
                        " (expected 1 within " + format_double(opts.norm_tolerance) + ")");
      }
    }
  }
  std::size_t orphans = 0;
  for (std::size_t i = 0; i < raw.n; ++i) orphans += used[i] ? 0 : 1;
  out.warnings = std::move(raw.warnings);
  if (orphans) out.warnings.push_back("dropped " + std::to_string(orphans) + " embedding rows without a matching record");
  return out;
}

inline EmbeddingMatrix load_embeddings(const std::filesystem::path& path, const std::vector<SubmissionRecord>& records,
                                       const EmbeddingLoadOptions& opts = {}) {
  return align_embeddings(read_csem(path), records, opts);
}

}  // namespace chronoseme
