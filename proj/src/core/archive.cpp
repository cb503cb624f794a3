#include "core/archive.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "core/errors.hpp"
#include "core/fsutil.hpp"

namespace ldst {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes little-endian host");

namespace {

constexpr char kMagic[4] = {'L', 'D', 'S', 'T'};
constexpr char kTrailer[4] = {'T', 'S', 'D', 'L'};

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::i64: return 8;
  }
  return 0;
}

template <typename T>
void append(std::vector<unsigned char>& out, const T& v) {
  const auto* p = reinterpret_cast<const unsigned char*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  Reader(std::span<const unsigned char> bytes, const std::string& origin)
      : bytes_(bytes), origin_(origin) {}

  void read(void* dst, std::size_t n) {
    if (n > bytes_.size() - pos_) fail(ErrorCode::corrupt, "truncated archive: " + origin_);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T get() {
    T v;
    read(&v, sizeof(T));
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const unsigned char> bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

template <typename Src, typename Dst>
std::vector<Dst> convert(const std::vector<unsigned char>& bytes) {
  std::vector<Dst> out(bytes.size() / sizeof(Src));
  for (std::size_t i = 0; i < out.size(); ++i) {
    Src v;
    std::memcpy(&v, bytes.data() + i * sizeof(Src), sizeof(Src));
    out[i] = static_cast<Dst>(v);
  }
  return out;
}

template <typename Dst>
std::vector<Dst> convert_any(const NamedTensor& t) {
  switch (t.dtype) {
    case DType::f32: return convert<float, Dst>(t.bytes);
    case DType::f64: return convert<double, Dst>(t.bytes);
    case DType::i64: return convert<std::int64_t, Dst>(t.bytes);
  }
  return {};
}

template <typename T>
NamedTensor make_record(const std::string& name, DType dtype, std::span<const T> values,
                        std::vector<std::int64_t> shape) {
  NamedTensor t{name, dtype, std::move(shape), {}};
  if (t.element_count() != static_cast<std::int64_t>(values.size())) {
    fail(ErrorCode::argument, "record " + name + ": shape does not match value count");
  }
  t.bytes.resize(values.size_bytes());
  std::memcpy(t.bytes.data(), values.data(), values.size_bytes());
  return t;
}

}  // namespace

std::int64_t NamedTensor::element_count() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::vector<float> NamedTensor::as_f32() const { return convert_any<float>(*this); }
std::vector<double> NamedTensor::as_f64() const { return convert_any<double>(*this); }
std::vector<std::int64_t> NamedTensor::as_i64() const { return convert_any<std::int64_t>(*this); }

void Archive::put(NamedTensor t) {
  auto it = index_.find(t.name);
  if (it != index_.end()) {
    records_[it->second] = std::move(t);
    return;
  }
  index_[t.name] = records_.size();
  records_.push_back(std::move(t));
}

void Archive::put_f32(const std::string& name, std::span<const float> values,
                      std::vector<std::int64_t> shape) {
  put(make_record(name, DType::f32, values, std::move(shape)));
}
void Archive::put_f64(const std::string& name, std::span<const double> values,
                      std::vector<std::int64_t> shape) {
  put(make_record(name, DType::f64, values, std::move(shape)));
}
void Archive::put_i64(const std::string& name, std::span<const std::int64_t> values,
                      std::vector<std::int64_t> shape) {
  put(make_record(name, DType::i64, values, std::move(shape)));
}

const NamedTensor& Archive::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorCode::checkpoint_format, "missing tensor: " + name);
  return records_[it->second];
}

std::vector<unsigned char> Archive::serialize() const {
  std::vector<unsigned char> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  append(out, schema_version);
  append(out, static_cast<std::uint32_t>(records_.size()));
  for (const auto& r : records_) {
    append(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    append(out, static_cast<std::uint8_t>(r.dtype));
    append(out, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) append(out, static_cast<std::uint64_t>(d));
    append(out, static_cast<std::uint64_t>(r.bytes.size()));
    out.insert(out.end(), r.bytes.begin(), r.bytes.end());
  }
  append(out, static_cast<std::uint64_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), kTrailer, kTrailer + 4);
  return out;
}

Archive Archive::parse(std::span<const unsigned char> bytes, const std::string& origin,
                       std::uint32_t expected_version) {
  Reader in(bytes, origin);
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) fail(ErrorCode::corrupt, "not an LDST archive: " + origin);
  Archive a;
  a.schema_version = in.get<std::uint32_t>();
  if (a.schema_version != expected_version) {
    fail(ErrorCode::checkpoint_format,
         "unsupported schema_version " + std::to_string(a.schema_version) + " (expected " +
             std::to_string(expected_version) + ") in " + origin);
  }
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = in.get<std::uint32_t>();
    if (name_len > in.remaining()) fail(ErrorCode::corrupt, "truncated archive: " + origin);
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    const auto dtype = in.get<std::uint8_t>();
    if (dtype > static_cast<std::uint8_t>(DType::i64)) {
      fail(ErrorCode::corrupt, "bad dtype for " + t.name + " in " + origin);
    }
    t.dtype = static_cast<DType>(dtype);
    const auto ndim = in.get<std::uint32_t>();
    if (ndim > 16) fail(ErrorCode::corrupt, "bad rank for " + t.name + " in " + origin);
    for (std::uint32_t d = 0; d < ndim; ++d) t.shape.push_back(static_cast<std::int64_t>(in.get<std::uint64_t>()));
    const auto nbytes = in.get<std::uint64_t>();
    if (nbytes > in.remaining()) fail(ErrorCode::corrupt, "truncated archive: " + origin);
    if (nbytes != static_cast<std::uint64_t>(t.element_count()) * dtype_size(t.dtype)) {
      fail(ErrorCode::corrupt, "size mismatch for " + t.name + " in " + origin);
    }
    t.bytes.resize(nbytes);
    in.read(t.bytes.data(), nbytes);
    a.put(std::move(t));
  }
  const auto text_len = in.get<std::uint64_t>();
  if (text_len > in.remaining()) fail(ErrorCode::corrupt, "truncated archive: " + origin);
  a.text.resize(text_len);
  in.read(a.text.data(), text_len);
  char trailer[4];
  in.read(trailer, 4);
  if (std::memcmp(trailer, kTrailer, 4) != 0) fail(ErrorCode::corrupt, "bad trailer in " + origin);
  return a;
}

void Archive::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

Archive Archive::load(const std::filesystem::path& path, std::uint32_t expected_version) {
  std::vector<unsigned char> bytes;
  try {
    bytes = read_file(path);
  } catch (const Error&) {
    fail(ErrorCode::io, "cannot open archive: " + path.string());
  }
  return parse(bytes, path.string(), expected_version);
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string{};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::argument, "line " + std::to_string(lineno) + ": expected key = value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace ldst
