#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ldst {

// Single-file named-tensor container shared by checkpoints and pretrained
// weight files:
//   "LDST" | u32 schema_version | u32 record_count
//   record: u32 name_len | name | u8 dtype | u32 ndim | u64 dims[ndim] |
//           u64 byte_len | raw little-endian data
//   u64 text_len | text (key=value lines) | "TSDL"
enum class DType : std::uint8_t { f32 = 0, f64 = 1, i64 = 2 };

inline constexpr std::uint32_t kArchiveSchemaVersion = 1;

struct NamedTensor {
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::int64_t> shape;
  std::vector<unsigned char> bytes;

  std::int64_t element_count() const;
  std::vector<float> as_f32() const;
  std::vector<double> as_f64() const;
  std::vector<std::int64_t> as_i64() const;
};

class Archive {
 public:
  Archive() = default;

  void put_f32(const std::string& name, std::span<const float> values,
               std::vector<std::int64_t> shape);
  void put_f64(const std::string& name, std::span<const double> values,
               std::vector<std::int64_t> shape);
  void put_i64(const std::string& name, std::span<const std::int64_t> values,
               std::vector<std::int64_t> shape);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  // Throws a checkpoint-format error naming the record when absent.
  const NamedTensor& get(const std::string& name) const;
  const std::vector<NamedTensor>& records() const { return records_; }

  std::string text;  // free-form key=value block
  std::uint32_t schema_version = kArchiveSchemaVersion;

  std::vector<unsigned char> serialize() const;
  // Wrong magic / truncation -> corrupt error; other schema -> checkpoint-format error.
  static Archive parse(std::span<const unsigned char> bytes, const std::string& origin,
                       std::uint32_t expected_version = kArchiveSchemaVersion);

  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path,
                      std::uint32_t expected_version = kArchiveSchemaVersion);

 private:
  void put(NamedTensor t);
  std::vector<NamedTensor> records_;
  std::map<std::string, std::size_t> index_;
};

// key=value text helpers (one pair per line, '#' comments).
std::map<std::string, std::string> parse_key_values(const std::string& text);

}  // namespace ldst
