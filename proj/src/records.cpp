#include "autochain/records.hpp"

namespace autochain {

std::string_view to_string(RecordCategory c) {
  switch (c) {
    case RecordCategory::Location: return "Location";
    case RecordCategory::Braking: return "Braking";
    case RecordCategory::Speed: return "Speed";
    case RecordCategory::Maintenance: return "Maintenance";
    case RecordCategory::Other: return "Other";
  }
  return "?";
}

std::optional<RecordCategory> parse_record_category(std::string_view text) {
  for (auto c : {RecordCategory::Location, RecordCategory::Braking, RecordCategory::Speed,
                 RecordCategory::Maintenance, RecordCategory::Other}) {
    if (to_string(c) == text) return c;
  }
  return std::nullopt;
}

void StorageRecord::encode_to(CanonicalWriter& w) const {
  w.f64(timestamp).u8(static_cast<std::uint8_t>(category)).field(ByteView{payload});
}

StorageRecord StorageRecord::decode_from(CanonicalReader& r) {
  StorageRecord rec;
  rec.timestamp = r.f64();
  const auto c = r.u8();
  if (c > static_cast<std::uint8_t>(RecordCategory::Other)) throw DecodeError("record category out of range");
  rec.category = static_cast<RecordCategory>(c);
  rec.payload = r.field();
  return rec;
}

Bytes serialize_store(std::span<const StorageRecord> records) {
  CanonicalWriter w;
  w.u64(records.size());
  for (const auto& r : records) r.encode_to(w);
  return std::move(w).bytes();
}

crypto::Digest store_digest(std::span<const StorageRecord> records) {
  return crypto::digest(serialize_store(records));
}

Bytes UpdatePackage::encode() const {
  CanonicalWriter w;
  w.field(std::string_view{ecu}).field(std::string_view{version}).field(ByteView{image});
  return std::move(w).bytes();
}

UpdatePackage UpdatePackage::decode(ByteView data) {
  CanonicalReader r(data);
  UpdatePackage p;
  p.ecu = r.text_field();
  p.version = r.text_field();
  p.image = r.field();
  r.expect_done();
  return p;
}

std::string sw_object_id(const crypto::Digest& package_digest) { return "sw/" + package_digest.hex(); }

}  // namespace autochain
