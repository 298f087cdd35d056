#pragma once

#include "quantschemes/chain.hpp"

#include <filesystem>
#include <iosfwd>

namespace qs {

enum class ChainEncoding { text, binary };

/// Text: a header (format version, d, q, n, T, layer sizes, seed, mc_paths, centering flag),
/// then every layer in the grid format, marginals, and dense row-major transition and companion
/// matrices at 17 significant digits. Binary: the same content as little-endian 64-bit values.
void write_chain(const QuantizedChain& chain, std::ostream& out, ChainEncoding encoding = ChainEncoding::text);
/// Detects the encoding and validates the chain invariants after reading.
QuantizedChain read_chain(std::istream& in);

void save_chain(const QuantizedChain& chain, const std::filesystem::path& path,
                ChainEncoding encoding = ChainEncoding::text);
QuantizedChain load_chain(const std::filesystem::path& path);

} // namespace qs
