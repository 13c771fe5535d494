#pragma once

#include <optional>
#include <string>

#include "hft/model.hpp"
#include "hft/selection.hpp"

namespace hft {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Single-file container: an 8-byte little-endian header length, a UTF-8
// JSON header, then raw little-endian tensor buffers at ascending
// 64-byte-aligned offsets (relative to the payload start, which is
// itself 64-byte aligned in the file). Every tensor carries a CRC64 in
// the header; byte output is deterministic for identical inputs.
struct Checkpoint {
  int format_version = 1;
  ModelConfig config;
  ParameterRegistry registry;
  SelectionHistory history;
  std::string metadata_json;  // free-form JSON object, no timestamps
};

inline constexpr int kCheckpointFormatVersion = 1;

std::uint64_t crc64(const void* data, std::size_t len);

// Returns bytes written. Rejects tensors containing non-finite values.
std::size_t save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// Load with strict dtype: the session dtype must match the file unless
// `convert_to` explicitly requests a conversion.
Checkpoint load_checkpoint(const std::string& path,
                           std::optional<DType> convert_to = std::nullopt);

std::string selection_history_to_json(const SelectionHistory& history);
SelectionHistory selection_history_from_json(const std::string& json_text);

}  // namespace hft
