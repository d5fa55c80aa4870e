#pragma once

// Versioned binary container: an 8-byte magic, a little-endian u32 format
// version, a little-endian u64 header length, a UTF-8 JSON header, then a
// payload of little-endian IEEE-754 doubles. The header's "tensors" array
// lists each named block with its shape and element offset.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "stpn/tensor.hpp"

namespace stpn {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContainerWriter {
 public:
  ContainerWriter(std::string_view magic, std::uint32_t version);

  nlohmann::json& meta() { return meta_; }

  void add(const std::string& name, std::vector<std::size_t> shape, std::span<const double> data);
  void add(const std::string& name, const Matrix& m);
  void add(const std::string& name, const Tensor3& t);

  std::string bytes() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::string magic_;
  std::uint32_t version_;
  nlohmann::json meta_ = nlohmann::json::object();
  nlohmann::json index_ = nlohmann::json::array();
  std::vector<double> payload_;
};

class ContainerReader {
 public:
  /// Parses and validates the whole container; nothing is returned unless
  /// the magic, version, header and payload length all check out.
  static ContainerReader parse(std::string_view bytes, std::string_view magic,
                               std::uint32_t version);
  static ContainerReader open(const std::filesystem::path& path, std::string_view magic,
                              std::uint32_t version);

  const nlohmann::json& meta() const { return meta_; }
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;

  std::vector<std::size_t> shape(const std::string& name) const;
  std::vector<double> data(const std::string& name) const;
  Matrix matrix(const std::string& name) const;
  Tensor3 tensor3(const std::string& name) const;

 private:
  struct Entry {
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t count = 0;
  };
  const Entry& entry(const std::string& name) const;

  nlohmann::json meta_;
  std::vector<std::pair<std::string, Entry>> entries_;
  std::vector<double> payload_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// Row-major doubles as little-endian bytes, base64 encoded.
std::string encode_doubles(std::span<const double> values);
std::vector<double> decode_doubles(std::string_view text);

}  // namespace stpn
