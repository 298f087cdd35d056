#include "quantschemes/chain_io.hpp"

#include "quantschemes/grid_io.hpp"
#include "text_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace qs {

namespace {

constexpr char kTextMagic[] = "quantschemes-chain";
constexpr char kBinaryMagic[8] = {'Q', 'S', 'C', 'H', 'A', 'I', 'N', 'B'};
constexpr std::uint64_t kVersion = 1;

// ---- binary primitives (little-endian regardless of host) ----

void put_u64(std::ostream& out, std::uint64_t v) {
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((v >> (8 * b)) & 0xffu);
    out.write(bytes, 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::istream& in) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw ParseError("truncated binary chain file", 0);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

std::size_t get_size(std::istream& in, std::uint64_t limit = std::uint64_t{1} << 32) {
    const std::uint64_t v = get_u64(in);
    if (v > limit) throw ParseError("implausible size field in binary chain file", 0);
    return static_cast<std::size_t>(v);
}

/// Rebuilds a row-compressed step from dense probability and companion rows.
TransitionStep sparse_step(std::size_t rows, std::size_t cols, std::size_t q, const std::vector<double>& probs,
                           const std::vector<double>& companions, std::vector<std::uint32_t> dead,
                           std::size_t line) {
    TransitionStep step;
    step.rows = rows;
    step.cols = cols;
    step.dim_w = q;
    step.row_offsets.assign(1, 0);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            const double p = probs[i * cols + j];
            const double* w = companions.data() + (i * cols + j) * q;
            if (p == 0.0) {
                for (std::size_t c = 0; c < q; ++c)
                    if (w[c] != 0.0) throw ParseError("companion weight on a zero-probability transition", line);
                continue;
            }
            step.columns.push_back(static_cast<std::uint32_t>(j));
            step.probabilities.push_back(p);
            step.companions.insert(step.companions.end(), w, w + q);
        }
        step.row_offsets.push_back(step.columns.size());
    }
    step.dead_rows = std::move(dead);
    return step;
}

void validated(const QuantizedChain& chain) {
    try {
        chain.validate();
    } catch (const ParseError&) {
        throw;
    } catch (const InputError& e) {
        throw ParseError(std::string("invalid chain: ") + e.what(), 0);
    }
}

// ---- text ----

void expect_keyword(const std::vector<std::string_view>& tokens, std::string_view keyword, std::size_t count,
                    std::size_t line) {
    if (tokens.empty() || tokens[0] != keyword || tokens.size() != count)
        throw ParseError("expected '" + std::string(keyword) + "' record with " + std::to_string(count - 1) + " fields",
                         line);
}

std::vector<double> read_row(detail::LineReader& reader, std::size_t expected, const char* what) {
    const auto tokens = reader.expect(what);
    if (tokens.size() != expected)
        throw ParseError(std::string(what) + " row holds " + std::to_string(tokens.size()) + " values, expected " +
                             std::to_string(expected),
                         reader.line());
    std::vector<double> row(expected);
    for (std::size_t i = 0; i < expected; ++i) row[i] = detail::parse_double(tokens[i], reader.line());
    return row;
}

void write_text(const QuantizedChain& chain, std::ostream& out) {
    const std::size_t n = chain.steps();
    const std::size_t q = chain.dim_w;
    out << kTextMagic << ' ' << kVersion << '\n';
    out << "dims " << chain.dim_x << ' ' << q << '\n';
    out << "mesh " << detail::format_double(chain.mesh.horizon) << ' ' << chain.mesh.steps << '\n';
    out << "sizes";
    for (const auto& g : chain.layers) out << ' ' << g.size();
    out << '\n';
    out << "provenance " << chain.seed << ' ' << chain.mc_paths << ' ' << (chain.centered ? 1 : 0) << '\n';
    for (std::size_t k = 0; k <= n; ++k) {
        out << "layer " << k << '\n';
        write_grid(chain.layers[k], out);
    }
    for (std::size_t k = 0; k <= n; ++k) {
        out << "marginals " << k << '\n';
        for (std::size_t i = 0; i < chain.marginals[k].size(); ++i)
            out << (i ? " " : "") << detail::format_double(chain.marginals[k][i]);
        out << '\n';
    }
    for (std::size_t k = 0; k < n; ++k) {
        const auto& t = chain.transitions[k];
        const auto dense = t.dense_probabilities();
        out << "transitions " << k << '\n';
        for (std::size_t i = 0; i < t.rows; ++i) {
            for (std::size_t j = 0; j < t.cols; ++j)
                out << (j ? " " : "") << detail::format_double(dense[i * t.cols + j]);
            out << '\n';
        }
        out << "companions " << k << '\n';
        for (std::size_t i = 0; i < t.rows; ++i) {
            std::vector<double> row(t.cols * q, 0.0);
            for (std::size_t e = t.row_offsets[i]; e < t.row_offsets[i + 1]; ++e)
                for (std::size_t c = 0; c < q; ++c) row[t.columns[e] * q + c] = t.companions[e * q + c];
            for (std::size_t r = 0; r < row.size(); ++r) out << (r ? " " : "") << detail::format_double(row[r]);
            out << '\n';
        }
        out << "dead " << k << ' ' << t.dead_rows.size();
        for (auto i : t.dead_rows) out << ' ' << i;
        out << '\n';
    }
}

QuantizedChain read_text(std::istream& in) {
    detail::LineReader reader(in);
    auto tokens = reader.expect("chain header");
    expect_keyword(tokens, kTextMagic, 2, reader.line());
    if (detail::parse_unsigned(tokens[1], reader.line()) != kVersion)
        throw ParseError("unsupported chain format version", reader.line());

    QuantizedChain chain;
    tokens = reader.expect("dims");
    expect_keyword(tokens, "dims", 3, reader.line());
    chain.dim_x = detail::parse_unsigned(tokens[1], reader.line());
    chain.dim_w = detail::parse_unsigned(tokens[2], reader.line());
    if (chain.dim_x == 0 || chain.dim_w == 0) throw ParseError("chain dimensions must be positive", reader.line());
    const std::size_t q = chain.dim_w;

    tokens = reader.expect("mesh");
    expect_keyword(tokens, "mesh", 3, reader.line());
    chain.mesh.horizon = detail::parse_double(tokens[1], reader.line());
    chain.mesh.steps = detail::parse_unsigned(tokens[2], reader.line());
    if (!(chain.mesh.horizon > 0.0) || chain.mesh.steps == 0) throw ParseError("invalid time mesh", reader.line());
    const std::size_t n = chain.mesh.steps;

    tokens = reader.expect("sizes");
    expect_keyword(tokens, "sizes", n + 2, reader.line());
    std::vector<std::size_t> sizes(n + 1);
    for (std::size_t k = 0; k <= n; ++k) sizes[k] = detail::parse_unsigned(tokens[k + 1], reader.line());

    tokens = reader.expect("provenance");
    expect_keyword(tokens, "provenance", 4, reader.line());
    chain.seed = detail::parse_unsigned(tokens[1], reader.line());
    chain.mc_paths = detail::parse_unsigned(tokens[2], reader.line());
    chain.centered = detail::parse_unsigned(tokens[3], reader.line()) != 0;

    for (std::size_t k = 0; k <= n; ++k) {
        tokens = reader.expect("layer");
        expect_keyword(tokens, "layer", 2, reader.line());
        if (detail::parse_unsigned(tokens[1], reader.line()) != k) throw ParseError("layers out of order", reader.line());
        Grid g = detail::read_grid_block(reader);
        if (g.size() != sizes[k] || g.dim() != chain.dim_x)
            throw ParseError("layer " + std::to_string(k) + " does not match the header shape", reader.line());
        chain.layers.push_back(std::move(g));
    }
    for (std::size_t k = 0; k <= n; ++k) {
        tokens = reader.expect("marginals");
        expect_keyword(tokens, "marginals", 2, reader.line());
        chain.marginals.push_back(read_row(reader, sizes[k], "marginals"));
    }
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t rows = sizes[k], cols = sizes[k + 1];
        tokens = reader.expect("transitions");
        expect_keyword(tokens, "transitions", 2, reader.line());
        const std::size_t block_line = reader.line();
        std::vector<double> probs;
        probs.reserve(rows * cols);
        for (std::size_t i = 0; i < rows; ++i) {
            const auto row = read_row(reader, cols, "transition");
            probs.insert(probs.end(), row.begin(), row.end());
        }
        tokens = reader.expect("companions");
        expect_keyword(tokens, "companions", 2, reader.line());
        std::vector<double> comps;
        comps.reserve(rows * cols * q);
        for (std::size_t i = 0; i < rows; ++i) {
            const auto row = read_row(reader, cols * q, "companion");
            comps.insert(comps.end(), row.begin(), row.end());
        }
        tokens = reader.expect("dead");
        if (tokens.size() < 3 || tokens[0] != "dead") throw ParseError("expected 'dead' record", reader.line());
        const std::size_t count = detail::parse_unsigned(tokens[2], reader.line());
        if (tokens.size() != 3 + count) throw ParseError("dead-row count does not match its list", reader.line());
        std::vector<std::uint32_t> dead;
        for (std::size_t r = 0; r < count; ++r)
            dead.push_back(static_cast<std::uint32_t>(detail::parse_unsigned(tokens[3 + r], reader.line())));
        chain.transitions.push_back(sparse_step(rows, cols, q, probs, comps, std::move(dead), block_line));
    }
    std::vector<std::string_view> extra;
    if (reader.next(extra)) throw ParseError("trailing content after chain", reader.line());
    validated(chain);
    return chain;
}

// ---- binary ----

void write_binary(const QuantizedChain& chain, std::ostream& out) {
    const std::size_t n = chain.steps();
    const std::size_t q = chain.dim_w;
    out.write(kBinaryMagic, sizeof kBinaryMagic);
    put_u64(out, kVersion);
    put_u64(out, chain.dim_x);
    put_u64(out, q);
    put_f64(out, chain.mesh.horizon);
    put_u64(out, chain.mesh.steps);
    for (const auto& g : chain.layers) put_u64(out, g.size());
    put_u64(out, chain.seed);
    put_u64(out, chain.mc_paths);
    put_u64(out, chain.centered ? 1 : 0);
    for (const auto& g : chain.layers) {
        for (double v : g.points()) put_f64(out, v);
        put_u64(out, g.has_weights() ? 1 : 0);
        for (double w : g.weights()) put_f64(out, w);
    }
    for (const auto& m : chain.marginals)
        for (double v : m) put_f64(out, v);
    for (std::size_t k = 0; k < n; ++k) {
        const auto& t = chain.transitions[k];
        for (double v : t.dense_probabilities()) put_f64(out, v);
        for (std::size_t i = 0; i < t.rows; ++i) {
            std::vector<double> row(t.cols * q, 0.0);
            for (std::size_t e = t.row_offsets[i]; e < t.row_offsets[i + 1]; ++e)
                for (std::size_t c = 0; c < q; ++c) row[t.columns[e] * q + c] = t.companions[e * q + c];
            for (double v : row) put_f64(out, v);
        }
        put_u64(out, t.dead_rows.size());
        for (auto i : t.dead_rows) put_u64(out, i);
    }
}

QuantizedChain read_binary(std::istream& in) {
    char magic[sizeof kBinaryMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kBinaryMagic, sizeof magic) != 0)
        throw ParseError("not a binary chain file", 0);
    if (get_u64(in) != kVersion) throw ParseError("unsupported chain format version", 0);
    QuantizedChain chain;
    chain.dim_x = get_size(in);
    chain.dim_w = get_size(in);
    chain.mesh.horizon = get_f64(in);
    chain.mesh.steps = get_size(in);
    if (chain.dim_x == 0 || chain.dim_w == 0 || chain.mesh.steps == 0 || !(chain.mesh.horizon > 0.0))
        throw ParseError("invalid binary chain header", 0);
    const std::size_t n = chain.mesh.steps;
    const std::size_t d = chain.dim_x;
    const std::size_t q = chain.dim_w;
    std::vector<std::size_t> sizes(n + 1);
    for (auto& s : sizes) {
        s = get_size(in);
        if (s == 0) throw ParseError("empty layer in binary chain header", 0);
    }
    chain.seed = get_u64(in);
    chain.mc_paths = get_u64(in);
    chain.centered = get_u64(in) != 0;
    for (std::size_t k = 0; k <= n; ++k) {
        std::vector<double> pts(sizes[k] * d);
        for (double& v : pts) v = get_f64(in);
        std::vector<double> w;
        if (get_u64(in)) {
            w.resize(sizes[k]);
            for (double& v : w) v = get_f64(in);
        }
        try {
            chain.layers.emplace_back(d, std::move(pts), std::move(w));
        } catch (const InputError& e) {
            throw ParseError(std::string("invalid layer grid: ") + e.what(), 0);
        }
    }
    for (std::size_t k = 0; k <= n; ++k) {
        std::vector<double> m(sizes[k]);
        for (double& v : m) v = get_f64(in);
        chain.marginals.push_back(std::move(m));
    }
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t rows = sizes[k], cols = sizes[k + 1];
        std::vector<double> probs(rows * cols), comps(rows * cols * q);
        for (double& v : probs) v = get_f64(in);
        for (double& v : comps) v = get_f64(in);
        std::vector<std::uint32_t> dead(get_size(in, rows));
        for (auto& i : dead) i = static_cast<std::uint32_t>(get_size(in, rows));
        chain.transitions.push_back(sparse_step(rows, cols, q, probs, comps, std::move(dead), 0));
    }
    validated(chain);
    return chain;
}

} // namespace

void write_chain(const QuantizedChain& chain, std::ostream& out, ChainEncoding encoding) {
    chain.validate();
    if (encoding == ChainEncoding::binary)
        write_binary(chain, out);
    else
        write_text(chain, out);
}

QuantizedChain read_chain(std::istream& in) {
    char first[sizeof kBinaryMagic] = {};
    in.read(first, sizeof first);
    const bool binary = in.gcount() == sizeof first && std::memcmp(first, kBinaryMagic, sizeof first) == 0;
    in.clear();
    in.seekg(0);
    return binary ? read_binary(in) : read_text(in);
}

void save_chain(const QuantizedChain& chain, const std::filesystem::path& path, ChainEncoding encoding) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    write_chain(chain, out, encoding);
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

QuantizedChain load_chain(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return read_chain(in);
}

} // namespace qs
