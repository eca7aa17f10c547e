#pragma once

// Measurement record stream. Every record is one 64-byte block:
//   [0..8)   tag, NUL padded ("ECREATE", "EADD", "EEXTEND")
//   [8..16)  u64 offset field
//   [16..64) record specific, zero padded
// EEXTEND is followed by the four 64-byte blocks of the measured chunk.

#include <cstdint>
#include <span>

#include "ccx/crypto.hpp"
#include "ccx/types.hpp"

namespace ccx {

inline constexpr std::size_t kExtendChunk = 256;

Block64 ecreate_record(std::uint64_t size, std::uint32_t ssa_frame_size);
Block64 eadd_record(std::uint64_t offset, std::uint64_t secinfo_flags);
Block64 eextend_record(std::uint64_t offset);

// Host-side builder used by the loader to precompute the value EINIT will
// finalize, so a SIGSTRUCT can be signed before the enclave is built.
class MeasurementBuilder {
 public:
  MeasurementBuilder(std::uint64_t size, std::uint32_t ssa_frame_size);
  void add_page(std::uint64_t offset, std::uint64_t secinfo_flags);
  void extend(std::uint64_t offset, std::span<const std::uint8_t, kExtendChunk> chunk);
  // Adds every 256-byte chunk of a page.
  void extend_page(std::uint64_t page_offset, std::span<const std::uint8_t> page);
  Digest digest() const { return hash_.finalize(); }

 private:
  RunningHash hash_;
};

void absorb_chunk(RunningHash& h, std::span<const std::uint8_t, kExtendChunk> chunk);

}  // namespace ccx
