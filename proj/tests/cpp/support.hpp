#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "autochain/crypto.hpp"
#include "autochain/ledger.hpp"

namespace autochain::testing {

inline crypto::Digest payload(std::uint64_t n) {
  const std::string s = "payload-" + std::to_string(n);
  return crypto::digest(as_bytes(s));
}

/// First transaction of a fresh key: predecessor is the zero digest.
inline ledger::Transaction first_tx(const crypto::KeyPair& key, std::uint64_t n = 0) {
  return ledger::build_transaction(ledger::TxKind::SingleSig, crypto::zero_digest(), payload(n),
                                   ledger::PayloadTag::Generic, key);
}

/// `count` single-signature transactions from distinct fresh keys.
inline std::vector<ledger::Transaction> fresh_txs(std::size_t count, std::uint64_t seed_base = 1000) {
  std::vector<ledger::Transaction> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(first_tx(crypto::generate_keypair(seed_base + i), i));
  return out;
}

/// Appends a sealed block of `txs`; returns the appended block.
inline ledger::Block append(ledger::Chain& chain, std::vector<ledger::Transaction> txs,
                            const crypto::KeyPair& generator) {
  auto block = ledger::seal_block(std::move(txs), generator, chain);
  if (!chain.append(block)) throw std::logic_error("append failed in test fixture");
  return block;
}

/// Chain of `blocks` blocks of `per_block` fresh transactions each, all signed by `generator`.
inline ledger::Chain build_chain(std::size_t blocks, std::size_t per_block, const crypto::KeyPair& generator) {
  ledger::Chain chain;
  for (std::size_t b = 0; b < blocks; ++b) append(chain, fresh_txs(per_block, 5000 + b * per_block), generator);
  return chain;
}

}  // namespace autochain::testing
