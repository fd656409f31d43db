#pragma once

#include <openssl/hmac.h>
#include <openssl/sha.h>

#include <array>
#include <map>
#include <memory>
#include <span>

#include "blockdfl/bytes.hpp"

namespace blockdfl {

using Hash = std::array<std::uint8_t, 32>;

inline Hash sha256(std::span<const std::uint8_t> data) {
  Hash h{};
  SHA256(data.data(), data.size(), h.data());
  return h;
}

inline Hash sha256(std::string_view s) {
  return sha256(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

inline std::string to_hex(const Hash& h) { return to_hex(std::span<const std::uint8_t>(h)); }

/// First eight bytes of a hash as a big-endian integer.
inline std::uint64_t hash_prefix_u64(const Hash& h) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | h[i];
  return v;
}

using Signature = Bytes;

/// Signing scheme. Implementations may be real asymmetric schemes; the
/// simulator default is HmacSigner.
class Signer {
 public:
  virtual ~Signer() = default;
  virtual bool knows(ParticipantId id) const = 0;
  virtual Signature sign(ParticipantId id, std::span<const std::uint8_t> msg) const = 0;
  virtual bool verify(ParticipantId id, std::span<const std::uint8_t> msg, const Signature& sig) const = 0;
};

/// Keyed-hash simulation signer: each identity holds a 32-byte secret derived
/// from a registry seed, signatures are HMAC-SHA256(secret, msg). Verification
/// recomputes the tag, so any party holding the registry can verify.
class HmacSigner final : public Signer {
 public:
  HmacSigner(std::uint64_t registry_seed, std::size_t n_participants) {
    for (ParticipantId id = 0; id < n_participants; ++id) {
      ByteWriter w;
      w.text("blockdfl-identity");
      w.u64(registry_seed);
      w.u64(id);
      keys_.emplace(id, sha256(w.bytes()));
    }
  }

  bool knows(ParticipantId id) const override { return keys_.contains(id); }

  Signature sign(ParticipantId id, std::span<const std::uint8_t> msg) const override {
    const auto it = keys_.find(id);
    if (it == keys_.end()) throw Error("sign: unknown identity " + std::to_string(id));
    Signature sig(32);
    unsigned int len = 0;
    HMAC(EVP_sha256(), it->second.data(), static_cast<int>(it->second.size()), msg.data(), msg.size(), sig.data(),
         &len);
    sig.resize(len);
    return sig;
  }

  bool verify(ParticipantId id, std::span<const std::uint8_t> msg, const Signature& sig) const override {
    if (!knows(id)) throw Error("verify: unknown identity " + std::to_string(id));
    const Signature expected = sign(id, msg);
    if (expected.size() != sig.size()) return false;
    unsigned char diff = 0;
    for (std::size_t i = 0; i < sig.size(); ++i) diff |= expected[i] ^ sig[i];
    return diff == 0;
  }

 private:
  std::map<ParticipantId, Hash> keys_;
};

}  // namespace blockdfl
