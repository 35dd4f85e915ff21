#pragma once
// Persistence: snapshot container, SHA-256 digests, CSV tables, JSON config plumbing.
//
// Snapshot layout (all integers and reals little-endian):
//   8 bytes   magic "MRSSNAP1"
//   u64       header length H, then H bytes of compact JSON (sorted keys)
//   u64       array count A, then per array:
//               u32 name length, name bytes, u64 value count n, n x f64
//   32 bytes  SHA-256 of every preceding byte
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

namespace mrs {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr char kSnapshotMagic[9] = "MRSSNAP1";

/// Stored digest does not match the content.
struct DigestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated container.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::array<unsigned char, 32> sha256(const void* data, std::size_t n) {
  std::array<unsigned char, 32> out{};
  unsigned int len = 0;
  if (EVP_Digest(data, n, out.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32)
    throw std::runtime_error("SHA-256 failed");
  return out;
}

inline std::string hex(const unsigned char* p, std::size_t n) {
  std::ostringstream os;
  for (std::size_t i = 0; i < n; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(p[i]);
  return os.str();
}

inline std::string sha256_hex(const std::string& bytes) {
  auto d = sha256(bytes.data(), bytes.size());
  return hex(d.data(), d.size());
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary file and renames, so readers never see a partial file.
inline void write_file(const fs::path& p, const std::string& bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, p);
}

inline std::string file_sha256(const fs::path& p) { return sha256_hex(read_file(p)); }

// ---------------------------------------------------------------- snapshot

struct Snapshot {
  json header = json::object();
  std::map<std::string, std::vector<double>> arrays;
};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U u = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  if (pos + sizeof(T) > in.size()) throw FormatError("snapshot truncated");
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(T);
  return std::bit_cast<T>(u);
}

}  // namespace detail

inline std::string encode_snapshot(const Snapshot& s) {
  std::string out(kSnapshotMagic, 8);
  const std::string h = s.header.dump();
  detail::put_le<std::uint64_t>(out, h.size());
  out += h;
  detail::put_le<std::uint64_t>(out, s.arrays.size());
  for (auto& [name, v] : s.arrays) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_le<std::uint64_t>(out, v.size());
    for (double x : v) detail::put_le<double>(out, x);
  }
  auto d = sha256(out.data(), out.size());
  out.append(reinterpret_cast<const char*>(d.data()), d.size());
  return out;
}

inline Snapshot decode_snapshot(const std::string& in) {
  if (in.size() < 8 + 8 + 8 + 32 || in.compare(0, 8, kSnapshotMagic) != 0) throw FormatError("not a snapshot container");
  const std::size_t body = in.size() - 32;
  auto d = sha256(in.data(), body);
  if (in.compare(body, 32, std::string(reinterpret_cast<const char*>(d.data()), 32)) != 0)
    throw DigestError("snapshot digest mismatch");
  Snapshot s;
  std::size_t pos = 8;
  const auto hl = detail::get_le<std::uint64_t>(in, pos);
  if (pos + hl > body) throw FormatError("snapshot header truncated");
  try {
    s.header = json::parse(in.substr(pos, hl));
  } catch (const json::exception& e) {
    throw FormatError(std::string("snapshot header: ") + e.what());
  }
  pos += hl;
  const auto na = detail::get_le<std::uint64_t>(in, pos);
  for (std::uint64_t a = 0; a < na; ++a) {
    const auto nl = detail::get_le<std::uint32_t>(in, pos);
    if (pos + nl > body) throw FormatError("snapshot array name truncated");
    std::string name = in.substr(pos, nl);
    pos += nl;
    const auto n = detail::get_le<std::uint64_t>(in, pos);
    if (n > (body - pos) / 8) throw FormatError("snapshot array truncated");
    std::vector<double> v(n);
    for (auto& x : v) x = detail::get_le<double>(in, pos);
    s.arrays.emplace(std::move(name), std::move(v));
  }
  if (pos != body) throw FormatError("trailing bytes in snapshot");
  return s;
}

/// Returns the SHA-256 of the written file.
inline std::string write_snapshot(const fs::path& p, const Snapshot& s) {
  const auto bytes = encode_snapshot(s);
  write_file(p, bytes);
  return sha256_hex(bytes);
}

inline Snapshot read_snapshot(const fs::path& p) { return decode_snapshot(read_file(p)); }

// ---------------------------------------------------------------- CSV

inline std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> r) {
    if (r.size() != columns.size()) throw std::invalid_argument("CSV row width mismatch");
    rows.push_back(std::move(r));
  }
  std::string str() const {
    auto line = [](const std::vector<std::string>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        if (v[i].find_first_of(",\"\n") != std::string::npos) {
          s += '"';
          for (char c : v[i]) s += c == '"' ? std::string("\"\"") : std::string(1, c);
          s += '"';
        } else {
          s += v[i];
        }
      }
      return s + "\n";
    };
    std::string out = line(columns);
    for (auto& r : rows) out += line(r);
    return out;
  }
};

// ---------------------------------------------------------------- JSON config plumbing

/// Dotted-path view of a JSON object; arrays are leaves.
inline void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
  if (j.is_object() && !j.empty()) {
    for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
  } else {
    out[prefix] = j;
  }
}

inline std::map<std::string, json> flatten(const json& j) {
  std::map<std::string, json> out;
  flatten(j, "", out);
  return out;
}

/// Merges `patch` into `base`; every key of `patch` must exist in `base`.
inline void merge_known(json& base, const json& patch, const std::string& where = "") {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw std::invalid_argument("unknown config key '" + path + "'");
    auto& b = base[it.key()];
    // an empty default section (such as goldens) is free-form
    if (b.is_object() && !b.empty() && it.value().is_object()) merge_known(b, it.value(), path);
    else b = it.value();
  }
}

/// Applies "a.b.c=VALUE"; VALUE is parsed as JSON, falling back to a string.
inline std::string apply_override(json& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override must look like KEY=VALUE: " + kv);
  const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
  json* node = &cfg;
  std::istringstream ks(key);
  std::string part;
  while (std::getline(ks, part, '.')) {
    if (!node->is_object() || !node->contains(part)) throw std::invalid_argument("unknown config key '" + key + "'");
    node = &(*node)[part];
  }
  if (node->is_object()) throw std::invalid_argument("override targets a section, not a value: " + key);
  json v;
  try {
    v = json::parse(val);
  } catch (const json::exception&) {
    v = val;
  }
  *node = v;
  return key;
}

/// Dotted keys whose values differ between two configs.
inline std::vector<std::string> config_diff(const json& a, const json& b) {
  auto fa = flatten(a), fb = flatten(b);
  std::vector<std::string> out;
  for (auto& [k, v] : fa)
    if (!fb.count(k) || fb[k] != v) out.push_back(k);
  for (auto& [k, v] : fb)
    if (!fa.count(k)) out.push_back(k);
  return out;
}

}  // namespace mrs
