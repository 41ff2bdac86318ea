#include "autochain/crypto.hpp"

#include <sodium.h>

#include <stdexcept>

namespace autochain::crypto {
namespace {

void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw std::runtime_error("libsodium initialisation failed");
}

static_assert(crypto_sign_PUBLICKEYBYTES == kPublicKeySize);
static_assert(crypto_sign_SECRETKEYBYTES == kSecretKeySize);
static_assert(crypto_sign_BYTES == kSignatureSize);
static_assert(crypto_hash_sha256_BYTES == kDigestSize);

}  // namespace

KeyPair generate_keypair(std::uint64_t seed) {
  ensure_sodium();
  CanonicalWriter w;
  w.field(std::string_view{"autochain.keypair.v1"}).u64(seed);
  const Digest expanded = digest(w.bytes());
  static_assert(crypto_sign_SEEDBYTES == kDigestSize);

  KeyPair kp;
  crypto_sign_seed_keypair(kp.public_key.bytes.data(), kp.secret_key.bytes.data(),
                           expanded.bytes.data());
  return kp;
}

Signature sign(ByteView message, const SecretKey& secret_key) {
  ensure_sodium();
  Signature sig;
  crypto_sign_detached(sig.bytes.data(), nullptr, message.data(), message.size(),
                       secret_key.bytes.data());
  return sig;
}

bool verify(ByteView message, const Signature& signature, const PublicKey& public_key) {
  ensure_sodium();
  return crypto_sign_verify_detached(signature.bytes.data(), message.data(), message.size(),
                                     public_key.bytes.data()) == 0;
}

Digest digest(ByteView data) {
  ensure_sodium();
  Digest out;
  crypto_hash_sha256(out.bytes.data(), data.data(), data.size());
  return out;
}

Bytes Certificate::signed_body() const {
  CanonicalWriter w;
  w.field(std::string_view{subject_identity}).field(subject_pk.bytes);
  return std::move(w).bytes();
}

Bytes Certificate::encode() const {
  CanonicalWriter w;
  w.field(std::string_view{subject_identity}).field(subject_pk.bytes).field(ca_signature.bytes);
  return std::move(w).bytes();
}

Certificate Certificate::decode(ByteView data) {
  CanonicalReader r(data);
  Certificate c;
  c.subject_identity = r.text_field();
  c.subject_pk.bytes = r.fixed_field<kPublicKeySize>();
  c.ca_signature.bytes = r.fixed_field<kSignatureSize>();
  r.expect_done();
  return c;
}

Certificate issue_certificate(const KeyPair& ca, std::string identity, const PublicKey& subject_pk) {
  Certificate c;
  c.subject_identity = std::move(identity);
  c.subject_pk = subject_pk;
  c.ca_signature = sign(c.signed_body(), ca.secret_key);
  return c;
}

bool verify_certificate(const Certificate& cert, const PublicKey& ca_pk) {
  return verify(cert.signed_body(), cert.ca_signature, ca_pk);
}

KeyRing KeyRing::rotating(KeyPair initial) {
  KeyRing ring;
  ring.current_ = initial;
  ring.history_.push_back(initial);
  return ring;
}

KeyRing KeyRing::certified(KeyPair identity, Certificate cert, KeyPair auxiliary) {
  if (cert.subject_pk != identity.public_key) {
    throw std::invalid_argument("certificate does not name the identity key");
  }
  KeyRing ring;
  ring.identity_ = identity;
  ring.certificate_ = std::move(cert);
  ring.current_ = auxiliary;
  ring.history_.push_back(identity);
  ring.history_.push_back(auxiliary);
  return ring;
}

const KeyPair* KeyRing::find(const PublicKey& pk) const {
  for (const auto& kp : history_)
    if (kp.public_key == pk) return &kp;
  return nullptr;
}

KeyPair rotate_key(KeyRing& ring, std::uint64_t seed) {
  KeyPair fresh = generate_keypair(seed);
  // A colliding seed would hand back a key the ring already used.
  while (ring.owns(fresh.public_key)) fresh = generate_keypair(++seed);
  ring.current_ = fresh;
  ring.history_.push_back(fresh);
  return fresh;
}

}  // namespace autochain::crypto
