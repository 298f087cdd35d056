#pragma once

// Line-oriented helpers shared by the grid and chain text formats.

#include "quantschemes/error.hpp"
#include "quantschemes/grid.hpp"

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace qs::detail {

class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    /// Next non-blank line, with '#' comments stripped. False at end of input.
    bool next(std::vector<std::string_view>& tokens) {
        while (std::getline(in_, buffer_)) {
            ++line_;
            if (const auto hash = buffer_.find('#'); hash != std::string::npos) buffer_.resize(hash);
            tokens.clear();
            std::string_view rest(buffer_);
            while (true) {
                const auto start = rest.find_first_not_of(" \t\r");
                if (start == std::string_view::npos) break;
                rest.remove_prefix(start);
                const auto end = rest.find_first_of(" \t\r");
                tokens.push_back(rest.substr(0, end));
                if (end == std::string_view::npos) break;
                rest.remove_prefix(end);
            }
            if (!tokens.empty()) return true;
        }
        return false;
    }

    std::vector<std::string_view> expect(const char* what) {
        std::vector<std::string_view> tokens;
        if (!next(tokens)) throw ParseError(std::string("unexpected end of input, expected ") + what, line_ + 1);
        return tokens;
    }

    std::size_t line() const noexcept { return line_; }

private:
    std::istream& in_;
    std::string buffer_;
    std::size_t line_ = 0;
};

inline double parse_double(std::string_view token, std::size_t line) {
    double v = 0.0;
    const char* first = token.data();
    if (!token.empty() && token.front() == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size())
        throw ParseError("malformed number '" + std::string(token) + "'", line);
    return v;
}

inline std::uint64_t parse_unsigned(std::string_view token, std::size_t line) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size())
        throw ParseError("malformed integer '" + std::string(token) + "'", line);
    return v;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Grid in the standard layout, read from the current position of `reader`.
Grid read_grid_block(LineReader& reader);

} // namespace qs::detail
