#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace labelaudit {

using Engine = std::mt19937_64;

// Stream derivation: one master seed, named sub-streams per stage and
// integer-keyed sub-streams per record, so results do not depend on
// iteration order or thread count.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_stream(std::uint64_t parent, std::string_view name);
std::uint64_t derive_stream(std::uint64_t parent, std::int64_t key);
std::uint64_t derive_stream(std::uint64_t parent, std::span<const double> values);

inline Engine make_engine(std::uint64_t stream) { return Engine(mix64(stream)); }

// Components with alpha == 0 are returned as exact zeros.
std::vector<double> sample_dirichlet(std::span<const double> alpha, Engine& engine);

}  // namespace labelaudit
