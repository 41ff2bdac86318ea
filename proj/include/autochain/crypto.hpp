#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "autochain/bytes.hpp"

namespace autochain::crypto {

inline constexpr std::size_t kPublicKeySize = 32;
inline constexpr std::size_t kSecretKeySize = 64;
inline constexpr std::size_t kSignatureSize = 64;
inline constexpr std::size_t kDigestSize = 32;

/// Fixed-size byte value with a distinct type per role, so a digest cannot be
/// passed where a public key is expected.
template <class Tag, std::size_t N>
struct FixedBytes {
  static constexpr std::size_t size = N;
  std::array<std::uint8_t, N> bytes{};

  ByteView view() const { return ByteView{bytes}; }
  std::string hex() const { return to_hex(view()); }
  bool is_zero() const {
    for (auto b : bytes)
      if (b != 0) return false;
    return true;
  }

  static FixedBytes from_bytes(ByteView src) {
    if (src.size() != N) throw DecodeError("fixed-size value has wrong length");
    FixedBytes out;
    std::memcpy(out.bytes.data(), src.data(), N);
    return out;
  }
  static FixedBytes from_hex(std::string_view text) { return from_bytes(autochain::from_hex(text)); }

  friend auto operator<=>(const FixedBytes&, const FixedBytes&) = default;
  friend bool operator==(const FixedBytes&, const FixedBytes&) = default;
};

using PublicKey = FixedBytes<struct PublicKeyTag, kPublicKeySize>;
using SecretKey = FixedBytes<struct SecretKeyTag, kSecretKeySize>;
using Signature = FixedBytes<struct SignatureTag, kSignatureSize>;
using Digest = FixedBytes<struct DigestTag, kDigestSize>;

struct KeyPair {
  PublicKey public_key;
  SecretKey secret_key;
  friend bool operator==(const KeyPair&, const KeyPair&) = default;
};

/// Ed25519 keypair derived deterministically from `seed`.
KeyPair generate_keypair(std::uint64_t seed);
Signature sign(ByteView message, const SecretKey& secret_key);
bool verify(ByteView message, const Signature& signature, const PublicKey& public_key);
/// SHA-256.
Digest digest(ByteView data);
inline Digest zero_digest() { return Digest{}; }

struct Certificate {
  std::string subject_identity;
  PublicKey subject_pk;
  Signature ca_signature;

  /// identity || subject_pk, length-prefixed; this is what the CA signs.
  Bytes signed_body() const;
  Bytes encode() const;
  static Certificate decode(ByteView data);
  friend bool operator==(const Certificate&, const Certificate&) = default;
};

Certificate issue_certificate(const KeyPair& ca, std::string identity, const PublicKey& subject_pk);
bool verify_certificate(const Certificate& cert, const PublicKey& ca_pk);

/// The keys an actor holds.
///
/// Rotating actors (vehicles, users) replace their current key on rotation.
/// Certified actors keep the CA-certified identity key stable and rotate an
/// auxiliary key used where their identity should stay private. Every key
/// ever held stays in the history so past ledger entries remain attributable
/// to the owner.
class KeyRing {
 public:
  static KeyRing rotating(KeyPair initial);
  static KeyRing certified(KeyPair identity, Certificate cert, KeyPair auxiliary);

  bool is_certified() const { return certificate_.has_value(); }
  /// Key that is rotated: the current key, or the auxiliary key when certified.
  const KeyPair& current() const { return current_; }
  /// Stable identity: the certified key, or the current key for rotating rings.
  const KeyPair& identity() const { return is_certified() ? *identity_ : current_; }
  const std::optional<Certificate>& certificate() const { return certificate_; }
  const std::vector<KeyPair>& history() const { return history_; }

  bool owns(const PublicKey& pk) const { return find(pk) != nullptr; }
  const KeyPair* find(const PublicKey& pk) const;

 private:
  friend KeyPair rotate_key(KeyRing& ring, std::uint64_t seed);

  KeyPair current_;
  std::optional<KeyPair> identity_;
  std::optional<Certificate> certificate_;
  std::vector<KeyPair> history_;
};

/// Replaces the ring's rotating key with a fresh one and returns it.
KeyPair rotate_key(KeyRing& ring, std::uint64_t seed);

}  // namespace autochain::crypto

template <class Tag, std::size_t N>
struct std::hash<autochain::crypto::FixedBytes<Tag, N>> {
  std::size_t operator()(const autochain::crypto::FixedBytes<Tag, N>& v) const noexcept {
    std::size_t out = 0;
    std::memcpy(&out, v.bytes.data(), sizeof(out) < N ? sizeof(out) : N);
    return out;
  }
};
