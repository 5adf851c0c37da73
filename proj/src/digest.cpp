#include "wakenllm/digest.hpp"

#include <array>
#include <stdexcept>

#include <openssl/evp.h>

namespace wakenllm {

namespace {

std::array<unsigned char, 32> sha256_raw(std::string_view bytes) {
  std::array<unsigned char, 32> out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  const auto raw = sha256_raw(bytes);
  std::string hex;
  hex.reserve(64);
  for (unsigned char b : raw) {
    hex += kHex[b >> 4];
    hex += kHex[b & 0xf];
  }
  return hex;
}

std::uint64_t digest_u64(std::initializer_list<std::string_view> parts) {
  std::string joined;
  for (auto part : parts) {
    joined.append(part);
    joined += '\x1f';
  }
  const auto raw = sha256_raw(joined);
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i) value = (value << 8) | raw[i];
  return value;
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::string_view> parts) {
  std::string joined = std::to_string(seed);
  for (auto part : parts) {
    joined += '\x1f';
    joined.append(part);
  }
  return digest_u64({joined});
}

}  // namespace wakenllm
