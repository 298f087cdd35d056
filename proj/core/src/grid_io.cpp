#include "quantschemes/grid_io.hpp"

#include "text_io.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

namespace qs {

namespace detail {

Grid read_grid_block(LineReader& reader) {
    auto header = reader.expect("grid header 'd N'");
    const std::size_t header_line = reader.line();
    if (header.size() != 2) throw ParseError("grid header must be 'd N'", header_line);
    const std::size_t d = parse_unsigned(header[0], header_line);
    const std::size_t n = parse_unsigned(header[1], header_line);
    if (d == 0 || n == 0) throw ParseError("grid header needs d >= 1 and N >= 1", header_line);

    std::vector<double> points;
    points.reserve(n * d);
    std::vector<double> weights;
    std::size_t unknown = 0;
    std::vector<std::string_view> row;
    for (std::size_t i = 0; i < n; ++i) {
        if (!reader.next(row))
            throw ParseError("grid header announces " + std::to_string(n) + " rows, found " + std::to_string(i),
                             reader.line());
        if (row.size() != d + 1)
            throw ParseError("grid row must hold " + std::to_string(d) + " coordinates and one weight", reader.line());
        for (std::size_t k = 0; k < d; ++k) points.push_back(parse_double(row[k], reader.line()));
        const double w = parse_double(row[d], reader.line());
        if (w == -1.0) {
            ++unknown;
        } else if (!(w >= 0.0)) {
            throw ParseError("grid weight must be nonnegative or -1", reader.line());
        }
        weights.push_back(w);
    }
    if (unknown == n) {
        weights.clear();
    } else if (unknown != 0) {
        throw ParseError("grid mixes known and unknown (-1) weights", header_line);
    }
    try {
        return Grid(d, std::move(points), std::move(weights));
    } catch (const InputError& e) {
        throw ParseError(e.what(), header_line);
    }
}

} // namespace detail

namespace {

Grid read_legacy(std::istream& in) {
    detail::LineReader reader(in);
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> lines;
    std::vector<std::string_view> tokens;
    while (reader.next(tokens)) {
        std::vector<double> row;
        for (auto t : tokens) row.push_back(detail::parse_double(t, reader.line()));
        rows.push_back(std::move(row));
        lines.push_back(reader.line());
    }
    if (rows.empty() || rows.size() % 2 != 0)
        throw ParseError("legacy grid needs N point rows followed by N weight rows", reader.line());
    const std::size_t n = rows.size() / 2;
    const std::size_t d = rows.front().size();
    std::vector<double> points;
    std::vector<double> weights;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != d) throw ParseError("legacy grid point rows differ in dimension", lines[i]);
        points.insert(points.end(), rows[i].begin(), rows[i].end());
        const auto& w = rows[n + i];
        if (w.size() != 1 || !(w[0] >= 0.0)) throw ParseError("legacy grid weight row must hold one weight", lines[n + i]);
        weights.push_back(w[0]);
        total += w[0];
    }
    // Published grids carry weights rounded to a few digits.
    if (!(total > 0.0) || std::abs(total - 1.0) > 1e-4)
        throw ParseError("legacy grid weights sum to " + std::to_string(total), lines[n]);
    for (double& w : weights) w /= total;
    return Grid(d, std::move(points), std::move(weights));
}

} // namespace

void write_grid(const Grid& grid, std::ostream& out) {
    out << grid.dim() << ' ' << grid.size() << '\n';
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (double v : grid.point(i)) out << detail::format_double(v) << ' ';
        out << (grid.has_weights() ? detail::format_double(grid.weights()[i]) : std::string("-1")) << '\n';
    }
}

Grid read_grid(std::istream& in, GridLayout layout) {
    if (layout == GridLayout::legacy) return read_legacy(in);
    detail::LineReader reader(in);
    Grid grid = detail::read_grid_block(reader);
    std::vector<std::string_view> extra;
    if (reader.next(extra)) throw ParseError("trailing content after grid rows", reader.line());
    return grid;
}

void save_grid(const Grid& grid, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    write_grid(grid, out);
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

Grid load_grid(const std::filesystem::path& path, GridLayout layout) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return read_grid(in, layout);
}

} // namespace qs
