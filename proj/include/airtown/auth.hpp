#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

#include "airtown/error.hpp"

namespace airtown::auth {

inline std::string to_hex(const unsigned char* data, std::size_t n) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(2 * n, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = digits[data[i] >> 4];
    out[2 * i + 1] = digits[data[i] & 0xF];
  }
  return out;
}

inline std::vector<unsigned char> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw error(error_code::parse_error, "odd-length hex string");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw error(error_code::parse_error, "invalid hex digit");
  };
  std::vector<unsigned char> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<unsigned char>(nibble(hex[2 * i]) * 16 + nibble(hex[2 * i + 1]));
  }
  return out;
}

inline std::vector<unsigned char> random_bytes(std::size_t n) {
  std::vector<unsigned char> out(n);
  if (RAND_bytes(out.data(), static_cast<int>(n)) != 1) {
    throw std::runtime_error("RAND_bytes failed");
  }
  return out;
}

struct password_hash {
  std::string salt_hex;
  std::string hash_hex;
  int iterations = 0;
};

/// PBKDF2-HMAC-SHA256 with a 16-byte salt and 32-byte output.
inline std::string derive(std::string_view password, const std::vector<unsigned char>& salt,
                          int iterations) {
  unsigned char out[32];
  if (PKCS5_PBKDF2_HMAC(password.data(), static_cast<int>(password.size()), salt.data(),
                        static_cast<int>(salt.size()), iterations, EVP_sha256(), sizeof(out),
                        out) != 1) {
    throw std::runtime_error("PBKDF2 failed");
  }
  return to_hex(out, sizeof(out));
}

inline password_hash hash_password(std::string_view password, int iterations) {
  const auto salt = random_bytes(16);
  return {to_hex(salt.data(), salt.size()), derive(password, salt, iterations), iterations};
}

inline bool verify_password(std::string_view password, const password_hash& stored) {
  const auto candidate = derive(password, from_hex(stored.salt_hex), stored.iterations);
  return candidate.size() == stored.hash_hex.size() &&
         CRYPTO_memcmp(candidate.data(), stored.hash_hex.data(), candidate.size()) == 0;
}

/// Opaque 128-bit bearer token, hex encoded.
inline std::string new_token() {
  const auto bytes = random_bytes(16);
  return to_hex(bytes.data(), bytes.size());
}

/// In-memory bearer sessions. Tokens are not persisted; clients log in
/// again after a restart.
class session_table {
 public:
  std::string issue(const std::string& user_id, std::int64_t now, std::int64_t ttl_s) {
    std::lock_guard lock(mu_);
    auto token = new_token();
    sessions_[token] = {user_id, now + ttl_s};
    return token;
  }

  /// user_id for a live token. A token is live strictly before its expiry.
  std::string resolve(std::string_view token, std::int64_t now) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(token);
    if (token.empty() || it == sessions_.end()) {
      throw error(error_code::authentication_failed, "missing or unknown bearer token");
    }
    if (now >= it->second.expires_at) throw error(error_code::token_expired, "token expired");
    return it->second.user_id;
  }

  std::int64_t expiry(std::string_view token) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(token);
    return it == sessions_.end() ? 0 : it->second.expires_at;
  }

 private:
  struct session {
    std::string user_id;
    std::int64_t expires_at;
  };
  mutable std::mutex mu_;
  std::map<std::string, session, std::less<>> sessions_;
};

}  // namespace airtown::auth
