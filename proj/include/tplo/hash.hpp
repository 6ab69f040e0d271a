#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include <openssl/evp.h>

#include "tplo/error.hpp"

namespace tplo {

namespace detail {

inline std::string digest_hex(const EVP_MD* md, std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, md, nullptr) != 1)
    fail(ErrorCode::IOError, "digest computation failed");
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", out[i]);
    hex += buf;
  }
  return hex;
}

}  // namespace detail

inline std::string sha256_hex(std::string_view data) { return detail::digest_hex(EVP_sha256(), data); }

/// Hash of `data` as git would name it as a blob object.
inline std::string git_blob_hash(std::string_view data) {
  std::string obj = "blob " + std::to_string(data.size());
  obj.push_back('\0');
  obj.append(data);
  return detail::digest_hex(EVP_sha1(), obj);
}

}  // namespace tplo
