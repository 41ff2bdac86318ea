#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "autochain/bytes.hpp"
#include "autochain/crypto.hpp"
#include "autochain/result.hpp"

namespace autochain::ledger {

using crypto::Digest;
using crypto::KeyPair;
using crypto::PublicKey;
using crypto::Signature;

enum class TxKind : std::uint8_t { SingleSig = 0, Multisig = 1 };

enum class PayloadTag : std::uint8_t {
  StorageAnchor = 0,
  BackupAnchor = 1,
  SwUpdate = 2,
  InsuranceData = 3,
  Generic = 4,
};

std::string_view to_string(TxKind kind);
std::string_view to_string(PayloadTag tag);
std::optional<PayloadTag> parse_payload_tag(std::string_view text);

class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Transaction {
  Digest t_id;
  Digest p_t_id;
  TxKind kind = TxKind::SingleSig;
  PublicKey pk_1;
  Signature sig_1;
  std::optional<PublicKey> pk_2;
  std::optional<Signature> sig_2;
  Digest payload_digest;
  PayloadTag payload_tag = PayloadTag::Generic;

  bool is_pending() const { return kind == TxKind::Multisig && !sig_2.has_value(); }
  bool fully_signed() const { return !is_pending(); }

  /// p_t_id || payload_digest || pk_1 [|| pk_2]; both signatures cover this.
  Bytes signing_body() const;
  /// Digest of every field except t_id itself.
  Digest compute_id() const;

  void encode_to(CanonicalWriter& w) const;
  Bytes encode() const;
  static Transaction decode_from(CanonicalReader& r);

  friend bool operator==(const Transaction&, const Transaction&) = default;
};

/// Identity of a stored transaction as seen by its generator.
struct TxHead {
  Digest t_id;
  Digest p_t_id;
  PublicKey pk_1;
  friend bool operator==(const TxHead&, const TxHead&) = default;
};

inline TxHead head_of(const Transaction& tx) { return {tx.t_id, tx.p_t_id, tx.pk_1}; }

/// Builds and signs a transaction as its generator. Multisig transactions come
/// back pending (no sig_2).
Transaction build_transaction(TxKind kind, const Digest& p_t_id, const Digest& payload_digest,
                              PayloadTag payload_tag, const KeyPair& generator,
                              std::optional<PublicKey> recipient_pk = std::nullopt);

enum class CountersignError { NotMultisig, WrongRecipient, AlreadySigned };
std::string_view to_string(CountersignError e);

Result<Transaction, CountersignError> countersign(const Transaction& tx, const KeyPair& recipient);

struct Block {
  Digest block_id;
  Digest prev_block_hash;
  PublicKey generator_pk;
  std::uint64_t height = 0;
  std::vector<Transaction> transactions;
  Signature generator_signature;

  /// prev || generator || height || t_ids; block_id and the signature cover it.
  Bytes header_body() const;
  Digest compute_id() const;

  void encode_to(CanonicalWriter& w) const;
  Bytes encode() const;
  static Block decode_from(CanonicalReader& r);

  friend bool operator==(const Block&, const Block&) = default;
};

struct TxLocation {
  std::uint64_t height = 0;
  std::size_t index = 0;
};

enum class AppendError { StalePrevHash, HeightMismatch, BadBlockId, DuplicateTransaction };
std::string_view to_string(AppendError e);

class Chain {
 public:
  const std::vector<Block>& blocks() const { return blocks_; }
  std::uint64_t height() const { return blocks_.size(); }
  bool empty() const { return blocks_.empty(); }
  Digest head_hash() const { return blocks_.empty() ? crypto::zero_digest() : blocks_.back().block_id; }
  std::size_t transaction_count() const { return tx_index_.size(); }

  bool contains(const Digest& t_id) const { return tx_index_.contains(t_id); }
  std::optional<TxLocation> locate(const Digest& t_id) const;
  const Transaction* find(const Digest& t_id) const;
  /// Last stored transaction generated under `pk`, if any.
  std::optional<Digest> latest_by_generator(const PublicKey& pk) const;

  /// Appends after checking linkage against the current head. Does not verify
  /// signatures; that is validate_block's job.
  Status<AppendError> append(Block block);

  Bytes encode() const;
  /// Decodes and re-indexes. Linkage is not checked here; run verify_chain.
  static Chain decode(ByteView data);
  /// One JSON object per block per line, hex digests, transactions nested.
  std::string dump() const;

 private:
  std::vector<Block> blocks_;
  std::unordered_map<Digest, TxLocation> tx_index_;
  std::unordered_map<PublicKey, Digest> latest_by_pk_;
};

enum class TxVerdict { Ok, BadSignature, MissingPredecessor, Malformed };
std::string_view to_string(TxVerdict v);

/// Structure, then signatures, then predecessor existence; the first failure
/// is reported.
TxVerdict validate_transaction(const Transaction& tx, const Chain& chain);
/// Structure and signatures only, for holders without a chain copy.
bool is_authentic(const Transaction& tx);

/// Fully signed transactions awaiting a block, oldest first.
class TxPool {
 public:
  bool add(Transaction tx);
  bool contains(const Digest& t_id) const { return ids_.contains(t_id); }
  bool remove(const Digest& t_id);
  std::size_t size() const { return txs_.size(); }
  bool empty() const { return txs_.empty(); }
  const std::deque<Transaction>& transactions() const { return txs_; }
  std::vector<Transaction> take_oldest(std::size_t n);

 private:
  std::deque<Transaction> txs_;
  std::unordered_set<Digest> ids_;
};

struct TrustParams {
  double f_min = 0.1;
  double k = 5.0;
};

struct TrustRecord {
  std::uint64_t valid_blocks_seen = 0;
  std::uint64_t invalid_blocks_seen = 0;
  /// Valid blocks since the last invalid one; the score is computed from this.
  std::uint64_t valid_streak = 0;
  double trust_score = 0.0;
};

class TrustTable {
 public:
  double score(const PublicKey& generator) const;
  const TrustRecord* find(const PublicKey& generator) const;
  TrustRecord& record(const PublicKey& generator) { return records_[generator]; }
  const std::map<PublicKey, TrustRecord>& records() const { return records_; }

 private:
  std::map<PublicKey, TrustRecord> records_;
};

/// min(1 - f_min, streak / (streak + k))
double trust_from_streak(std::uint64_t valid_streak, const TrustParams& params);
/// Share of a block's transactions to verify: max(f_min, 1 - trust).
double verification_fraction(double trust_score, const TrustParams& params);
/// Number of transactions a verifier checks in a block of `block_len`.
std::size_t verification_quota(std::size_t block_len, double trust_score, const TrustParams& params);

enum class BlockVerdict { Ok, BrokenLinkage, BadGeneratorSig, BadTransaction };
std::string_view to_string(BlockVerdict v);

struct BlockCheck {
  BlockVerdict verdict = BlockVerdict::Ok;
  std::size_t bad_index = 0;
  std::size_t verification_count = 0;
  bool ok() const { return verdict == BlockVerdict::Ok; }
};

/// Linkage and the generator signature are always checked; transaction
/// signatures are checked on a seeded sample whose size shrinks as the
/// generator's trust grows.
BlockCheck validate_block(const Block& block, const Chain& chain, const TrustTable& trust,
                          const TrustParams& params, std::uint64_t rng_seed);

void update_trust(TrustTable& trust, const PublicKey& generator, BlockVerdict verdict,
                  const TrustParams& params);

bool verify_chain(const Chain& chain);

/// Whose turn it is to append in `period_index`: round-robin over a stable order.
const std::string& schedule_block_turn(std::uint64_t period_index, std::span<const std::string> obm_ids);

struct DtmState {
  double block_period = 10.0;
  std::size_t block_size = 10;
  double utilization_low = 0.5;
  double utilization_high = 1.0;
  double period_min = 2.0;
  double period_max = 100.0;
  /// Transactions per simulated time unit over the measurement window.
  double observed_tx_rate = 0.0;

  void check() const;
};

/// Offered load over per-period capacity: rate * block_period / block_size.
double utilization(const DtmState& dtm, double observed_tx_rate);
DtmState dtm_adjust(DtmState dtm, double observed_tx_rate);

/// Oldest-first block of exactly block_size transactions, or the remainder
/// when flushing. Removes the taken transactions from the pool.
std::optional<Block> form_block(TxPool& pool, const DtmState& dtm, const KeyPair& generator,
                                const Chain& chain, bool flush = false);

/// Seals a block over the given transactions on top of `chain`'s head.
Block seal_block(std::vector<Transaction> transactions, const KeyPair& generator, const Chain& chain);

/// Tracks a generator key's position in its own transaction ledger: at most one
/// transaction in flight, each new one pointing at the last stored one.
class LedgerCursor {
 public:
  bool can_issue() const { return !outstanding_; }
  const Digest& previous() const { return previous_; }
  void issued() { outstanding_ = true; }
  /// Gives up on the in-flight transaction; the next one reuses previous().
  void abandon() { outstanding_ = false; }
  /// Advances when `head` is the stored successor of previous().
  bool observe_stored(const TxHead& head);

 private:
  Digest previous_ = crypto::zero_digest();
  bool outstanding_ = false;
};

/// One cursor per generator key an actor signs with.
class CursorSet {
 public:
  LedgerCursor& at(const PublicKey& pk) { return cursors_[pk]; }
  const LedgerCursor* find(const PublicKey& pk) const;
  bool can_issue(const PublicKey& pk) const;
  /// Routes a stored-transaction notice to the cursor of its generator key.
  bool observe_stored(const TxHead& head);

 private:
  std::map<PublicKey, LedgerCursor> cursors_;
};

}  // namespace autochain::ledger
