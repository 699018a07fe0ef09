#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace saesteer {

enum class Gender : std::uint8_t { Male = 0, Female = 1 };

// Which token's residual a feature record holds.
enum class PositionKind : std::uint8_t { Eos = 0, JobToken = 1 };

std::string_view gender_name(Gender g);
std::string_view position_kind_name(PositionKind kind);

// SHA-256 over a serialized checkpoint; binds banks and deltas to the
// autoencoder that produced them.
using Fingerprint = std::array<std::uint8_t, 32>;

std::string to_hex(const Fingerprint& fp);

// Lowercase, trim, collapse internal whitespace runs to one space.
std::string canonical_name(std::string_view name);

}  // namespace saesteer
