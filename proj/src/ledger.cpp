#include "autochain/ledger.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace autochain::ledger {

std::string_view to_string(TxKind kind) {
  switch (kind) {
    case TxKind::SingleSig: return "SingleSig";
    case TxKind::Multisig: return "Multisig";
  }
  return "?";
}

std::string_view to_string(PayloadTag tag) {
  switch (tag) {
    case PayloadTag::StorageAnchor: return "StorageAnchor";
    case PayloadTag::BackupAnchor: return "BackupAnchor";
    case PayloadTag::SwUpdate: return "SwUpdate";
    case PayloadTag::InsuranceData: return "InsuranceData";
    case PayloadTag::Generic: return "Generic";
  }
  return "?";
}

std::optional<PayloadTag> parse_payload_tag(std::string_view text) {
  for (auto tag : {PayloadTag::StorageAnchor, PayloadTag::BackupAnchor, PayloadTag::SwUpdate,
                   PayloadTag::InsuranceData, PayloadTag::Generic}) {
    if (to_string(tag) == text) return tag;
  }
  return std::nullopt;
}

std::string_view to_string(CountersignError e) {
  switch (e) {
    case CountersignError::NotMultisig: return "NotMultisig";
    case CountersignError::WrongRecipient: return "WrongRecipient";
    case CountersignError::AlreadySigned: return "AlreadySigned";
  }
  return "?";
}

std::string_view to_string(AppendError e) {
  switch (e) {
    case AppendError::StalePrevHash: return "StalePrevHash";
    case AppendError::HeightMismatch: return "HeightMismatch";
    case AppendError::BadBlockId: return "BadBlockId";
    case AppendError::DuplicateTransaction: return "DuplicateTransaction";
  }
  return "?";
}

std::string_view to_string(TxVerdict v) {
  switch (v) {
    case TxVerdict::Ok: return "Ok";
    case TxVerdict::BadSignature: return "BadSignature";
    case TxVerdict::MissingPredecessor: return "MissingPredecessor";
    case TxVerdict::Malformed: return "Malformed";
  }
  return "?";
}

std::string_view to_string(BlockVerdict v) {
  switch (v) {
    case BlockVerdict::Ok: return "Ok";
    case BlockVerdict::BrokenLinkage: return "BrokenLinkage";
    case BlockVerdict::BadGeneratorSig: return "BadGeneratorSig";
    case BlockVerdict::BadTransaction: return "BadTransaction";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Transaction

Bytes Transaction::signing_body() const {
  CanonicalWriter w;
  w.field(p_t_id.bytes).field(payload_digest.bytes).field(pk_1.bytes);
  if (pk_2) w.field(pk_2->bytes);
  return std::move(w).bytes();
}

namespace {

void encode_body(const Transaction& tx, CanonicalWriter& w) {
  w.field(tx.p_t_id.bytes);
  w.u8(static_cast<std::uint8_t>(tx.kind));
  w.field(tx.pk_1.bytes).field(tx.sig_1.bytes);
  w.u8(tx.pk_2 ? 1 : 0);
  if (tx.pk_2) w.field(tx.pk_2->bytes);
  w.u8(tx.sig_2 ? 1 : 0);
  if (tx.sig_2) w.field(tx.sig_2->bytes);
  w.field(tx.payload_digest.bytes);
  w.u8(static_cast<std::uint8_t>(tx.payload_tag));
}

std::uint8_t read_flag(CanonicalReader& r) {
  const auto f = r.u8();
  if (f > 1) throw DecodeError("presence flag out of range");
  return f;
}

}  // namespace

Digest Transaction::compute_id() const {
  CanonicalWriter w;
  encode_body(*this, w);
  return crypto::digest(w.bytes());
}

void Transaction::encode_to(CanonicalWriter& w) const {
  w.field(t_id.bytes);
  encode_body(*this, w);
}

Bytes Transaction::encode() const {
  CanonicalWriter w;
  encode_to(w);
  return std::move(w).bytes();
}

Transaction Transaction::decode_from(CanonicalReader& r) {
  Transaction tx;
  tx.t_id.bytes = r.fixed_field<crypto::kDigestSize>();
  tx.p_t_id.bytes = r.fixed_field<crypto::kDigestSize>();
  const auto kind = r.u8();
  if (kind > 1) throw DecodeError("transaction kind out of range");
  tx.kind = static_cast<TxKind>(kind);
  tx.pk_1.bytes = r.fixed_field<crypto::kPublicKeySize>();
  tx.sig_1.bytes = r.fixed_field<crypto::kSignatureSize>();
  if (read_flag(r)) tx.pk_2 = PublicKey{r.fixed_field<crypto::kPublicKeySize>()};
  if (read_flag(r)) tx.sig_2 = Signature{r.fixed_field<crypto::kSignatureSize>()};
  tx.payload_digest.bytes = r.fixed_field<crypto::kDigestSize>();
  const auto tag = r.u8();
  if (tag > static_cast<std::uint8_t>(PayloadTag::Generic)) throw DecodeError("payload tag out of range");
  tx.payload_tag = static_cast<PayloadTag>(tag);
  return tx;
}

Transaction build_transaction(TxKind kind, const Digest& p_t_id, const Digest& payload_digest,
                              PayloadTag payload_tag, const KeyPair& generator,
                              std::optional<PublicKey> recipient_pk) {
  if (kind == TxKind::SingleSig && recipient_pk) {
    throw StructuralError("single-signature transaction cannot name a recipient");
  }
  if (kind == TxKind::Multisig && !recipient_pk) {
    throw StructuralError("multisig transaction requires a recipient");
  }
  Transaction tx;
  tx.kind = kind;
  tx.p_t_id = p_t_id;
  tx.payload_digest = payload_digest;
  tx.payload_tag = payload_tag;
  tx.pk_1 = generator.public_key;
  tx.pk_2 = recipient_pk;
  tx.sig_1 = crypto::sign(tx.signing_body(), generator.secret_key);
  tx.t_id = tx.compute_id();
  return tx;
}

Result<Transaction, CountersignError> countersign(const Transaction& tx, const KeyPair& recipient) {
  if (tx.kind != TxKind::Multisig || !tx.pk_2) return CountersignError::NotMultisig;
  if (tx.sig_2) return CountersignError::AlreadySigned;
  if (*tx.pk_2 != recipient.public_key) return CountersignError::WrongRecipient;
  Transaction out = tx;
  out.sig_2 = crypto::sign(out.signing_body(), recipient.secret_key);
  out.t_id = out.compute_id();
  return out;
}

namespace {

bool structurally_sound(const Transaction& tx) {
  if (tx.kind == TxKind::SingleSig && (tx.pk_2 || tx.sig_2)) return false;
  if (tx.kind == TxKind::Multisig && !tx.pk_2) return false;
  return tx.t_id == tx.compute_id();
}

bool signatures_verify(const Transaction& tx) {
  const Bytes body = tx.signing_body();
  if (!crypto::verify(body, tx.sig_1, tx.pk_1)) return false;
  if (tx.sig_2 && !crypto::verify(body, *tx.sig_2, *tx.pk_2)) return false;
  return true;
}

// The predecessor must be the generator's latest stored transaction; a key
// with nothing stored yet starts its ledger from the zero digest.
bool predecessor_holds(const Transaction& tx, const Chain& chain) {
  const auto latest = chain.latest_by_generator(tx.pk_1);
  if (!latest) return tx.p_t_id.is_zero();
  return tx.p_t_id == *latest;
}

}  // namespace

bool is_authentic(const Transaction& tx) { return structurally_sound(tx) && signatures_verify(tx); }

TxVerdict validate_transaction(const Transaction& tx, const Chain& chain) {
  if (!structurally_sound(tx)) return TxVerdict::Malformed;
  if (!signatures_verify(tx)) return TxVerdict::BadSignature;
  if (!predecessor_holds(tx, chain)) return TxVerdict::MissingPredecessor;
  return TxVerdict::Ok;
}

// ---------------------------------------------------------------------------
// Block & Chain

Bytes Block::header_body() const {
  CanonicalWriter w;
  w.field(prev_block_hash.bytes).field(generator_pk.bytes).u64(height);
  w.u64(transactions.size());
  for (const auto& tx : transactions) w.field(tx.t_id.bytes);
  return std::move(w).bytes();
}

Digest Block::compute_id() const { return crypto::digest(header_body()); }

void Block::encode_to(CanonicalWriter& w) const {
  w.field(block_id.bytes).field(prev_block_hash.bytes).field(generator_pk.bytes).u64(height);
  w.u64(transactions.size());
  for (const auto& tx : transactions) tx.encode_to(w);
  w.field(generator_signature.bytes);
}

Bytes Block::encode() const {
  CanonicalWriter w;
  encode_to(w);
  return std::move(w).bytes();
}

Block Block::decode_from(CanonicalReader& r) {
  Block b;
  b.block_id.bytes = r.fixed_field<crypto::kDigestSize>();
  b.prev_block_hash.bytes = r.fixed_field<crypto::kDigestSize>();
  b.generator_pk.bytes = r.fixed_field<crypto::kPublicKeySize>();
  b.height = r.u64();
  const auto n = r.u64();
  if (n > (1u << 20)) throw DecodeError("implausible block transaction count");
  b.transactions.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) b.transactions.push_back(Transaction::decode_from(r));
  b.generator_signature.bytes = r.fixed_field<crypto::kSignatureSize>();
  return b;
}

std::optional<TxLocation> Chain::locate(const Digest& t_id) const {
  auto it = tx_index_.find(t_id);
  if (it == tx_index_.end()) return std::nullopt;
  return it->second;
}

const Transaction* Chain::find(const Digest& t_id) const {
  auto loc = locate(t_id);
  if (!loc) return nullptr;
  return &blocks_[loc->height].transactions[loc->index];
}

std::optional<Digest> Chain::latest_by_generator(const PublicKey& pk) const {
  auto it = latest_by_pk_.find(pk);
  if (it == latest_by_pk_.end()) return std::nullopt;
  return it->second;
}

Status<AppendError> Chain::append(Block block) {
  if (block.height != height()) return AppendError::HeightMismatch;
  if (block.prev_block_hash != head_hash()) return AppendError::StalePrevHash;
  if (block.block_id != block.compute_id()) return AppendError::BadBlockId;
  std::unordered_set<Digest> seen;
  for (const auto& tx : block.transactions) {
    if (tx_index_.contains(tx.t_id) || !seen.insert(tx.t_id).second) {
      return AppendError::DuplicateTransaction;
    }
  }
  const auto h = block.height;
  for (std::size_t i = 0; i < block.transactions.size(); ++i) {
    const auto& tx = block.transactions[i];
    tx_index_[tx.t_id] = TxLocation{h, i};
    latest_by_pk_[tx.pk_1] = tx.t_id;
  }
  blocks_.push_back(std::move(block));
  return Unit{};
}

Bytes Chain::encode() const {
  CanonicalWriter w;
  w.u64(blocks_.size());
  for (const auto& b : blocks_) b.encode_to(w);
  return std::move(w).bytes();
}

Chain Chain::decode(ByteView data) {
  CanonicalReader r(data);
  Chain chain;
  const auto n = r.u64();
  if (n > (1u << 24)) throw DecodeError("implausible chain length");
  for (std::uint64_t i = 0; i < n; ++i) {
    Block b = Block::decode_from(r);
    for (std::size_t j = 0; j < b.transactions.size(); ++j) {
      const auto& tx = b.transactions[j];
      chain.tx_index_.emplace(tx.t_id, TxLocation{chain.blocks_.size(), j});
      chain.latest_by_pk_[tx.pk_1] = tx.t_id;
    }
    chain.blocks_.push_back(std::move(b));
  }
  r.expect_done();
  return chain;
}

std::string Chain::dump() const {
  std::ostringstream out;
  for (const auto& b : blocks_) {
    nlohmann::ordered_json line;
    line["height"] = b.height;
    line["block_id"] = b.block_id.hex();
    line["prev"] = b.prev_block_hash.hex();
    line["generator"] = b.generator_pk.hex();
    auto& txs = line["txs"] = nlohmann::ordered_json::array();
    for (const auto& tx : b.transactions) {
      nlohmann::ordered_json t;
      t["t_id"] = tx.t_id.hex();
      t["p_t_id"] = tx.p_t_id.hex();
      t["kind"] = to_string(tx.kind);
      t["tag"] = to_string(tx.payload_tag);
      t["pk_1"] = tx.pk_1.hex();
      t["sig_1"] = tx.sig_1.hex();
      if (tx.pk_2) t["pk_2"] = tx.pk_2->hex();
      if (tx.sig_2) t["sig_2"] = tx.sig_2->hex();
      t["payload"] = tx.payload_digest.hex();
      txs.push_back(std::move(t));
    }
    line["sig"] = b.generator_signature.hex();
    out << line.dump() << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Pool

bool TxPool::add(Transaction tx) {
  if (!ids_.insert(tx.t_id).second) return false;
  txs_.push_back(std::move(tx));
  return true;
}

bool TxPool::remove(const Digest& t_id) {
  if (!ids_.erase(t_id)) return false;
  auto it = std::find_if(txs_.begin(), txs_.end(), [&](const Transaction& t) { return t.t_id == t_id; });
  txs_.erase(it);
  return true;
}

std::vector<Transaction> TxPool::take_oldest(std::size_t n) {
  n = std::min(n, txs_.size());
  std::vector<Transaction> out(std::make_move_iterator(txs_.begin()),
                               std::make_move_iterator(txs_.begin() + static_cast<std::ptrdiff_t>(n)));
  txs_.erase(txs_.begin(), txs_.begin() + static_cast<std::ptrdiff_t>(n));
  for (const auto& tx : out) ids_.erase(tx.t_id);
  return out;
}

// ---------------------------------------------------------------------------
// Distributed trust

double TrustTable::score(const PublicKey& generator) const {
  auto r = find(generator);
  return r ? r->trust_score : 0.0;
}

const TrustRecord* TrustTable::find(const PublicKey& generator) const {
  auto it = records_.find(generator);
  return it == records_.end() ? nullptr : &it->second;
}

double trust_from_streak(std::uint64_t valid_streak, const TrustParams& params) {
  const double v = static_cast<double>(valid_streak);
  return std::min(1.0 - params.f_min, v / (v + params.k));
}

double verification_fraction(double trust_score, const TrustParams& params) {
  return std::max(params.f_min, 1.0 - trust_score);
}

std::size_t verification_quota(std::size_t block_len, double trust_score, const TrustParams& params) {
  if (block_len == 0) return 0;
  const double want = verification_fraction(trust_score, params) * static_cast<double>(block_len);
  // Absorb representation error so that e.g. 0.1 * 10 rounds to exactly 1.
  const auto quota = static_cast<std::size_t>(std::ceil(want - 1e-9));
  return std::clamp<std::size_t>(quota, 1, block_len);
}

namespace {

// First `k` positions of a seeded Fisher-Yates shuffle of 0..n-1, sorted.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

BlockCheck validate_block(const Block& block, const Chain& chain, const TrustTable& trust,
                          const TrustParams& params, std::uint64_t rng_seed) {
  BlockCheck check;
  if (block.height != chain.height() || block.prev_block_hash != chain.head_hash() ||
      block.block_id != block.compute_id()) {
    check.verdict = BlockVerdict::BrokenLinkage;
    return check;
  }
  if (!crypto::verify(block.header_body(), block.generator_signature, block.generator_pk)) {
    check.verdict = BlockVerdict::BadGeneratorSig;
    return check;
  }

  // Content binding and intra-block consistency are hash-only and cheap, so
  // they run on every transaction regardless of trust.
  std::unordered_set<Digest> ids;
  std::set<std::pair<PublicKey, Digest>> successors;
  for (std::size_t i = 0; i < block.transactions.size(); ++i) {
    const auto& tx = block.transactions[i];
    if (!structurally_sound(tx) || tx.is_pending() || chain.contains(tx.t_id) ||
        !ids.insert(tx.t_id).second || !successors.emplace(tx.pk_1, tx.p_t_id).second) {
      check.verdict = BlockVerdict::BadTransaction;
      check.bad_index = i;
      return check;
    }
  }

  const auto quota = verification_quota(block.transactions.size(), trust.score(block.generator_pk), params);
  for (auto i : sample_indices(block.transactions.size(), quota, rng_seed)) {
    ++check.verification_count;
    if (validate_transaction(block.transactions[i], chain) != TxVerdict::Ok) {
      check.verdict = BlockVerdict::BadTransaction;
      check.bad_index = i;
      return check;
    }
  }
  return check;
}

void update_trust(TrustTable& trust, const PublicKey& generator, BlockVerdict verdict,
                  const TrustParams& params) {
  auto& rec = trust.record(generator);
  if (verdict == BlockVerdict::Ok) {
    ++rec.valid_blocks_seen;
    ++rec.valid_streak;
    rec.trust_score = trust_from_streak(rec.valid_streak, params);
  } else {
    ++rec.invalid_blocks_seen;
    rec.valid_streak = 0;
    rec.trust_score = 0.0;
  }
}

bool verify_chain(const Chain& chain) {
  Chain prefix;
  for (std::size_t h = 0; h < chain.blocks().size(); ++h) {
    const Block& b = chain.blocks()[h];
    if (b.height != h || b.prev_block_hash != prefix.head_hash() || b.block_id != b.compute_id()) return false;
    if (!crypto::verify(b.header_body(), b.generator_signature, b.generator_pk)) return false;
    std::set<std::pair<PublicKey, Digest>> successors;
    for (const auto& tx : b.transactions) {
      if (tx.is_pending()) return false;
      if (validate_transaction(tx, prefix) != TxVerdict::Ok) return false;
      if (!successors.emplace(tx.pk_1, tx.p_t_id).second) return false;
    }
    if (!prefix.append(b)) return false;
  }
  return true;
}

const std::string& schedule_block_turn(std::uint64_t period_index, std::span<const std::string> obm_ids) {
  if (obm_ids.empty()) throw std::invalid_argument("schedule_block_turn: no OBMs");
  return obm_ids[period_index % obm_ids.size()];
}

// ---------------------------------------------------------------------------
// Throughput management

void DtmState::check() const {
  if (!(utilization_low < utilization_high)) throw std::invalid_argument("DTM band must satisfy low < high");
  if (!(block_period > 0)) throw std::invalid_argument("DTM block_period must be positive");
  if (block_size < 1) throw std::invalid_argument("DTM block_size must be >= 1");
  if (!(period_min > 0) || period_min > period_max) throw std::invalid_argument("DTM period bounds invalid");
}

double utilization(const DtmState& dtm, double observed_tx_rate) {
  return observed_tx_rate * dtm.block_period / static_cast<double>(dtm.block_size);
}

DtmState dtm_adjust(DtmState dtm, double observed_tx_rate) {
  dtm.observed_tx_rate = observed_tx_rate;
  if (observed_tx_rate <= 0) return dtm;
  const double u = utilization(dtm, observed_tx_rate);
  double period = dtm.block_period;
  if (u > dtm.utilization_high) {
    period *= dtm.utilization_high / u;
  } else if (u < dtm.utilization_low) {
    period *= dtm.utilization_low / u;
  } else {
    return dtm;
  }
  dtm.block_period = std::clamp(period, dtm.period_min, dtm.period_max);
  return dtm;
}

// ---------------------------------------------------------------------------
// Block formation

Block seal_block(std::vector<Transaction> transactions, const KeyPair& generator, const Chain& chain) {
  Block b;
  b.prev_block_hash = chain.head_hash();
  b.generator_pk = generator.public_key;
  b.height = chain.height();
  b.transactions = std::move(transactions);
  b.block_id = b.compute_id();
  b.generator_signature = crypto::sign(b.header_body(), generator.secret_key);
  return b;
}

std::optional<Block> form_block(TxPool& pool, const DtmState& dtm, const KeyPair& generator,
                                const Chain& chain, bool flush) {
  if (pool.size() >= dtm.block_size) return seal_block(pool.take_oldest(dtm.block_size), generator, chain);
  if (flush && !pool.empty()) return seal_block(pool.take_oldest(pool.size()), generator, chain);
  return std::nullopt;
}

bool LedgerCursor::observe_stored(const TxHead& head) {
  if (head.p_t_id != previous_) return false;
  previous_ = head.t_id;
  outstanding_ = false;
  return true;
}

const LedgerCursor* CursorSet::find(const PublicKey& pk) const {
  auto it = cursors_.find(pk);
  return it == cursors_.end() ? nullptr : &it->second;
}

bool CursorSet::can_issue(const PublicKey& pk) const {
  const auto* c = find(pk);
  return c == nullptr || c->can_issue();
}

bool CursorSet::observe_stored(const TxHead& head) {
  auto it = cursors_.find(head.pk_1);
  return it != cursors_.end() && it->second.observe_stored(head);
}

}  // namespace autochain::ledger
