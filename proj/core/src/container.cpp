#include "stpn/container.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <sstream>

namespace stpn {

namespace {

constexpr std::size_t kMagicLen = 8;
constexpr std::size_t kPreamble = kMagicLen + 4 + 8;

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_le(std::string_view in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::string doubles_to_bytes(std::span<const double> values) {
  std::string out;
  out.reserve(values.size() * 8);
  for (double d : values) put_le(out, std::bit_cast<std::uint64_t>(d), 8);
  return out;
}

std::vector<double> bytes_to_doubles(std::string_view bytes) {
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<double>(get_le(bytes, i * 8, 8));
  return out;
}

constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

ContainerWriter::ContainerWriter(std::string_view magic, std::uint32_t version)
    : magic_(magic), version_(version) {
  if (magic_.size() != kMagicLen) throw std::invalid_argument("container magic must be 8 bytes");
}

void ContainerWriter::add(const std::string& name, std::vector<std::size_t> shape,
                          std::span<const double> data) {
  std::size_t count = 1;
  for (auto s : shape) count *= s;
  if (count != data.size()) {
    throw ShapeError("container entry '" + name + "': shape holds " + std::to_string(count) +
                     " values, got " + std::to_string(data.size()));
  }
  for (const auto& e : index_)
    if (e["name"] == name) throw std::invalid_argument("duplicate container entry: " + name);
  index_.push_back({{"name", name}, {"shape", shape}, {"offset", payload_.size()}, {"count", count}});
  payload_.insert(payload_.end(), data.begin(), data.end());
}

void ContainerWriter::add(const std::string& name, const Matrix& m) {
  add(name, {m.rows(), m.cols()}, m.values());
}

void ContainerWriter::add(const std::string& name, const Tensor3& t) {
  add(name, {t.nodes(), t.steps(), t.channels()}, t.values());
}

std::string ContainerWriter::bytes() const {
  nlohmann::json header = meta_;
  header["tensors"] = index_;
  header["payload_doubles"] = payload_.size();
  const std::string text = header.dump();
  std::string out = magic_;
  put_le(out, version_, 4);
  put_le(out, text.size(), 8);
  out += text;
  out += doubles_to_bytes(payload_);
  return out;
}

void ContainerWriter::write(const std::filesystem::path& path) const { write_file(path, bytes()); }

ContainerReader ContainerReader::parse(std::string_view bytes, std::string_view magic,
                                       std::uint32_t version) {
  if (bytes.size() < kPreamble) throw FormatError("container truncated: missing preamble");
  if (bytes.substr(0, kMagicLen) != magic) {
    throw FormatError("container magic mismatch: expected '" + std::string(magic) + "', found '" +
                      std::string(bytes.substr(0, kMagicLen)) + "'");
  }
  const auto found_version = static_cast<std::uint32_t>(get_le(bytes, kMagicLen, 4));
  if (found_version != version) {
    throw FormatError("container version mismatch: expected " + std::to_string(version) +
                      ", found " + std::to_string(found_version));
  }
  const std::uint64_t header_len = get_le(bytes, kMagicLen + 4, 8);
  if (header_len > bytes.size() - kPreamble) throw FormatError("container truncated: header");

  ContainerReader r;
  try {
    r.meta_ = nlohmann::json::parse(bytes.substr(kPreamble, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("container header is not valid JSON: ") + e.what());
  }
  if (!r.meta_.is_object() || !r.meta_.contains("tensors") || !r.meta_["tensors"].is_array() ||
      !r.meta_.contains("payload_doubles")) {
    throw FormatError("container header lacks tensor index");
  }
  const std::size_t payload_bytes = bytes.size() - kPreamble - header_len;
  const auto declared = r.meta_["payload_doubles"].get<std::size_t>();
  if (payload_bytes != declared * 8) {
    throw FormatError("container payload has " + std::to_string(payload_bytes) +
                      " bytes, header declares " + std::to_string(declared * 8));
  }
  try {
    for (const auto& e : r.meta_["tensors"]) {
      Entry entry{e.at("shape").get<std::vector<std::size_t>>(), e.at("offset").get<std::size_t>(),
                  e.at("count").get<std::size_t>()};
      std::size_t count = 1;
      for (auto s : entry.shape) count *= s;
      if (count != entry.count || entry.offset + entry.count > declared) {
        throw FormatError("container entry '" + e.at("name").get<std::string>() +
                          "' is inconsistent with the payload");
      }
      r.entries_.emplace_back(e.at("name").get<std::string>(), std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("container tensor index malformed: ") + e.what());
  }
  r.payload_ = bytes_to_doubles(bytes.substr(kPreamble + header_len));
  r.meta_.erase("tensors");
  r.meta_.erase("payload_doubles");
  return r;
}

ContainerReader ContainerReader::open(const std::filesystem::path& path, std::string_view magic,
                                      std::uint32_t version) {
  const std::string bytes = read_file(path);
  try {
    return parse(bytes, magic, version);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

bool ContainerReader::contains(const std::string& name) const {
  for (const auto& [n, e] : entries_)
    if (n == name) return true;
  return false;
}

std::vector<std::string> ContainerReader::names() const {
  std::vector<std::string> out;
  for (const auto& [n, e] : entries_) out.push_back(n);
  return out;
}

const ContainerReader::Entry& ContainerReader::entry(const std::string& name) const {
  for (const auto& [n, e] : entries_)
    if (n == name) return e;
  throw FormatError("container has no entry '" + name + "'");
}

std::vector<std::size_t> ContainerReader::shape(const std::string& name) const {
  return entry(name).shape;
}

std::vector<double> ContainerReader::data(const std::string& name) const {
  const Entry& e = entry(name);
  return {payload_.begin() + static_cast<std::ptrdiff_t>(e.offset),
          payload_.begin() + static_cast<std::ptrdiff_t>(e.offset + e.count)};
}

Matrix ContainerReader::matrix(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.shape.size() != 2) throw FormatError("entry '" + name + "' is not a matrix");
  return Matrix(e.shape[0], e.shape[1], data(name));
}

Tensor3 ContainerReader::tensor3(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.shape.size() != 3) throw FormatError("entry '" + name + "' is not a rank-3 tensor");
  return Tensor3(e.shape[0], e.shape[1], e.shape[2], data(name));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                            static_cast<unsigned char>(bytes[i + 2]);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (const std::size_t rest = bytes.size() - i; rest > 0) {
    std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
    if (rest == 2) v |= static_cast<unsigned char>(bytes[i + 1]) << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  std::array<int, 256> lookup{};
  lookup.fill(-1);
  for (std::size_t i = 0; i < kAlphabet.size(); ++i)
    lookup[static_cast<unsigned char>(kAlphabet[i])] = static_cast<int>(i);
  if (text.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char ch = text[i + k];
      if (ch == '=') {
        if (i + 4 != text.size() || k < 2) throw FormatError("misplaced base64 padding");
        ++pad;
        v <<= 6;
        continue;
      }
      if (pad) throw FormatError("misplaced base64 padding");
      const int d = lookup[static_cast<unsigned char>(ch)];
      if (d < 0) throw FormatError("invalid base64 character");
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out += static_cast<char>((v >> 16) & 0xff);
    if (pad < 2) out += static_cast<char>((v >> 8) & 0xff);
    if (pad < 1) out += static_cast<char>(v & 0xff);
  }
  return out;
}

std::string encode_doubles(std::span<const double> values) {
  return base64_encode(doubles_to_bytes(values));
}

std::vector<double> decode_doubles(std::string_view text) {
  const std::string bytes = base64_decode(text);
  if (bytes.size() % 8 != 0) throw FormatError("encoded matrix is not a whole number of doubles");
  return bytes_to_doubles(bytes);
}

}  // namespace stpn
