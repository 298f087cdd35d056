#pragma once

#include "quantschemes/grid.hpp"

#include <filesystem>
#include <iosfwd>

namespace qs {

enum class GridLayout {
    /// Header "d N", then N rows of d coordinates followed by one weight (-1 = unknown).
    standard,
    /// Headerless: N rows of d coordinates, then N rows holding one weight each.
    legacy,
};

void write_grid(const Grid& grid, std::ostream& out);
Grid read_grid(std::istream& in, GridLayout layout = GridLayout::standard);

void save_grid(const Grid& grid, const std::filesystem::path& path);
Grid load_grid(const std::filesystem::path& path, GridLayout layout = GridLayout::standard);

} // namespace qs
