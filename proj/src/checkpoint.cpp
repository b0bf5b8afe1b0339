#include "ner/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "ner/errors.hpp"

namespace ner {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

[[noreturn]] void truncated(const std::string& where) {
    throw DataError("checkpoint truncated in " + where);
}

std::uint32_t get_u32(std::istream& in, const std::string& where) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) truncated(where);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in, const std::string& where) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) truncated(where);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in, const std::string& where) {
    return std::bit_cast<double>(get_u64(in, where));
}

}  // namespace

void write_segments(std::ostream& out, const std::vector<Segment>& segments) {
    out.write(kCheckpointMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(segments.size()));
    for (const Segment& s : segments) {
        put_u32(out, static_cast<std::uint32_t>(s.name.size()));
        out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
        put_u32(out, static_cast<std::uint32_t>(s.shape.size()));
        std::size_t expected = 1;
        for (std::size_t dim : s.shape) {
            put_u64(out, dim);
            expected *= dim;
        }
        if (expected != s.values.size())
            throw std::invalid_argument("checkpoint: segment " + s.name +
                                        " shape does not match value count");
        for (double v : s.values) put_f64(out, v);
    }
    if (!out) throw DataError("checkpoint: write failed");
}

std::vector<Segment> read_segments(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4)) truncated("header");
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw DataError("checkpoint: bad magic bytes, not a model file");
    std::uint32_t version = get_u32(in, "header");
    if (version != kCheckpointVersion)
        throw DataError("checkpoint: unsupported format version " + std::to_string(version));
    std::uint32_t count = get_u32(in, "header");

    std::vector<Segment> segments;
    segments.reserve(count);
    for (std::uint32_t idx = 0; idx < count; ++idx) {
        std::string where = "segment " + std::to_string(idx);
        std::uint32_t name_len = get_u32(in, where + " header");
        Segment s;
        s.name.resize(name_len);
        if (name_len > 0 && !in.read(s.name.data(), name_len)) truncated(where + " name");
        where = "segment " + s.name;
        std::uint32_t rank = get_u32(in, where);
        std::size_t expected = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            std::uint64_t dim = get_u64(in, where + " shape");
            if (expected != 0 && dim != 0 &&
                expected > std::numeric_limits<std::size_t>::max() / dim)
                throw DataError("checkpoint: segment " + s.name + " shape overflows");
            s.shape.push_back(dim);
            expected *= dim;
        }
        s.values.reserve(expected);
        for (std::size_t v = 0; v < expected; ++v)
            s.values.push_back(get_f64(in, where + " values"));
        segments.push_back(std::move(s));
    }
    return segments;
}

void write_segments_file(const std::string& path, const std::vector<Segment>& segments) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot open " + path + " for writing");
    write_segments(out, segments);
}

std::vector<Segment> read_segments_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open " + path);
    return read_segments(in);
}

Segment make_segment(const std::string& name, const Matrix& m) {
    return Segment{name, {m.rows(), m.cols()}, m.values()};
}

Segment make_segment(const std::string& name, const std::vector<double>& v) {
    return Segment{name, {v.size()}, v};
}

Segment make_scalar_segment(const std::string& name, double value) {
    return Segment{name, {}, {value}};
}

Segment make_string_segment(const std::string& name, const std::vector<std::string>& strings) {
    // Newline-joined UTF-8 bytes, one f64 per byte. Entries must not contain
    // newlines (corpus tokens and type names never do).
    Segment s;
    s.name = name;
    std::size_t total = 0;
    for (const std::string& str : strings) total += str.size() + 1;
    s.values.reserve(total);
    for (const std::string& str : strings) {
        for (unsigned char c : str) {
            if (c == '\n') throw std::invalid_argument("checkpoint: newline in string entry");
            s.values.push_back(static_cast<double>(c));
        }
        s.values.push_back(static_cast<double>('\n'));
    }
    s.shape = {s.values.size()};
    return s;
}

Matrix segment_matrix(const Segment& s) {
    if (s.shape.size() != 2)
        throw DataError("checkpoint: segment " + s.name + " is not a matrix");
    Matrix m(s.shape[0], s.shape[1]);
    m.values() = s.values;
    return m;
}

std::vector<double> segment_vector(const Segment& s) {
    if (s.shape.size() != 1)
        throw DataError("checkpoint: segment " + s.name + " is not a vector");
    return s.values;
}

double segment_scalar(const Segment& s) {
    if (s.values.size() != 1)
        throw DataError("checkpoint: segment " + s.name + " is not a scalar");
    return s.values[0];
}

std::vector<std::string> segment_strings(const Segment& s) {
    std::vector<std::string> out;
    std::string current;
    for (double v : s.values) {
        if (v < 0.0 || v > 255.0 || v != static_cast<double>(static_cast<unsigned char>(v)))
            throw DataError("checkpoint: segment " + s.name + " holds a non-byte value");
        auto c = static_cast<unsigned char>(v);
        if (c == '\n') {
            out.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(static_cast<char>(c));
        }
    }
    if (!current.empty())
        throw DataError("checkpoint: segment " + s.name + " string data not terminated");
    return out;
}

}  // namespace ner
