#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "autochain/bytes.hpp"
#include "autochain/crypto.hpp"

namespace autochain {

enum class RecordCategory : std::uint8_t { Location = 0, Braking = 1, Speed = 2, Maintenance = 3, Other = 4 };

std::string_view to_string(RecordCategory c);
std::optional<RecordCategory> parse_record_category(std::string_view text);

/// One entry of a vehicle's local data store.
struct StorageRecord {
  double timestamp = 0.0;
  RecordCategory category = RecordCategory::Other;
  Bytes payload;

  void encode_to(CanonicalWriter& w) const;
  static StorageRecord decode_from(CanonicalReader& r);
  friend bool operator==(const StorageRecord&, const StorageRecord&) = default;
};

/// u64 count followed by each record; the anchored digest is taken over this.
Bytes serialize_store(std::span<const StorageRecord> records);
crypto::Digest store_digest(std::span<const StorageRecord> records);

/// What a software provider stores in the cloud. Its canonical encoding is the
/// "binary" whose digest the update transaction commits to.
struct UpdatePackage {
  std::string ecu;
  std::string version;
  Bytes image;

  Bytes encode() const;
  static UpdatePackage decode(ByteView data);
  friend bool operator==(const UpdatePackage&, const UpdatePackage&) = default;
};

/// Cloud object holding the package with the given digest.
std::string sw_object_id(const crypto::Digest& package_digest);

}  // namespace autochain
