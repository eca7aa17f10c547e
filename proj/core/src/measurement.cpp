#include "ccx/measurement.hpp"

#include <stdexcept>

#include "ccx/bytes.hpp"

namespace ccx {
namespace {

Block64 record(std::string_view tag, std::uint64_t offset) {
  Block64 b{};
  ByteWriter(b).text(tag, 8).u64(offset);
  return b;
}

}  // namespace

Block64 ecreate_record(std::uint64_t size, std::uint32_t ssa_frame_size) {
  Block64 b = record("ECREATE", size);
  ByteWriter(std::span<std::uint8_t>(b).subspan(16)).u32(ssa_frame_size);
  return b;
}

Block64 eadd_record(std::uint64_t offset, std::uint64_t secinfo_flags) {
  Block64 b = record("EADD", offset);
  ByteWriter(std::span<std::uint8_t>(b).subspan(16)).u64(secinfo_flags);
  return b;
}

Block64 eextend_record(std::uint64_t offset) { return record("EEXTEND", offset); }

void absorb_chunk(RunningHash& h, std::span<const std::uint8_t, kExtendChunk> chunk) {
  for (std::size_t i = 0; i < kExtendChunk; i += 64) {
    Block64 b{};
    std::copy_n(chunk.begin() + static_cast<std::ptrdiff_t>(i), 64, b.begin());
    h.absorb(b);
  }
}

MeasurementBuilder::MeasurementBuilder(std::uint64_t size, std::uint32_t ssa_frame_size) {
  hash_.absorb(ecreate_record(size, ssa_frame_size));
}

void MeasurementBuilder::add_page(std::uint64_t offset, std::uint64_t secinfo_flags) {
  hash_.absorb(eadd_record(offset, secinfo_flags));
}

void MeasurementBuilder::extend(std::uint64_t offset,
                                std::span<const std::uint8_t, kExtendChunk> chunk) {
  hash_.absorb(eextend_record(offset));
  absorb_chunk(hash_, chunk);
}

void MeasurementBuilder::extend_page(std::uint64_t page_offset, std::span<const std::uint8_t> page) {
  if (page.size() != kGranuleSize) throw std::invalid_argument("extend_page needs a full page");
  for (std::size_t off = 0; off < kGranuleSize; off += kExtendChunk) {
    extend(page_offset + off, page.subspan(off).first<kExtendChunk>());
  }
}

}  // namespace ccx
