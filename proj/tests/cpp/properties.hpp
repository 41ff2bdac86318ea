#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace autochain::properties {

struct PropertyResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  std::string first_failure;
  bool passed() const { return cases > 0 && failures == 0; }
};

/// Valid transactions validate; forged signatures and wrong predecessors are
/// reported as BadSignature and MissingPredecessor.
PropertyResult transaction_validation(std::size_t cases, std::uint64_t seed);
/// Random actors issuing through cursors into randomly cut blocks: every
/// key's stored transactions form one unforked list rooted at the zero digest.
PropertyResult per_key_linked_list(std::size_t cases, std::uint64_t seed);
/// In every period exactly one OBM holds the turn and only it forms a block.
PropertyResult block_turn_exclusivity(std::size_t cases, std::uint64_t seed);
PropertyResult sign_verify_roundtrip(std::size_t cases, std::uint64_t seed);
/// Flipping any one bit of a certificate's signed content or signature breaks it.
PropertyResult certificate_bit_flip(std::size_t cases, std::uint64_t seed);
/// Trust stays in [0, 1 - f_min] and the verification quota in [1, n], shrinking as trust grows.
PropertyResult trust_and_quota_bounds(std::size_t cases, std::uint64_t seed);
/// One DTM step never moves the period away from the band or outside its bounds.
PropertyResult dtm_moves_toward_band(std::size_t cases, std::uint64_t seed);
/// Encoding a chain and decoding it gives the same bytes and a valid chain.
PropertyResult chain_codec_roundtrip(std::size_t cases, std::uint64_t seed);

}  // namespace autochain::properties
