#pragma once

// SAEM checkpoints:
//   "SAEM" | version u16 | d u32 | m u32 | k u32 | normalize_decoder u8
//   W_enc (m*d f32) | b_enc (m f32) | W_dec (d*m f32) | b_pre (d f32)
//   crc32 u32 over every preceding byte

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "saesteer/sae.hpp"
#include "saesteer/trainer.hpp"
#include "saesteer/types.hpp"

namespace saesteer {

inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const SaeParams& params);
SaeParams parse_checkpoint(std::span<const std::uint8_t> bytes, const std::string& path);

void write_checkpoint(const std::string& path, const SaeParams& params);
SaeParams read_checkpoint(const std::string& path);

// SHA-256 of the serialized checkpoint.
Fingerprint sae_fingerprint(const SaeParams& params);

// "step,mse,aux" with a header row.
void write_loss_history_csv(const std::string& path, std::span<const LossRecord> history);

}  // namespace saesteer
