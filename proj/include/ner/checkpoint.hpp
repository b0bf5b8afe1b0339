#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ner/matrix.hpp"

namespace ner {

// One named parameter array inside a model file. Everything is stored as
// little-endian f64, including encoded strings (one byte value per element),
// which keeps the segment format uniform.
struct Segment {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> values;
};

inline constexpr char kCheckpointMagic[4] = {'E', 'N', 'S', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_segments(std::ostream& out, const std::vector<Segment>& segments);

// Throws DataError naming the offending segment on bad magic/version,
// truncation, or shape/value-count disagreement.
std::vector<Segment> read_segments(std::istream& in);

void write_segments_file(const std::string& path, const std::vector<Segment>& segments);
std::vector<Segment> read_segments_file(const std::string& path);

Segment make_segment(const std::string& name, const Matrix& m);
Segment make_segment(const std::string& name, const std::vector<double>& v);
Segment make_scalar_segment(const std::string& name, double value);
Segment make_string_segment(const std::string& name, const std::vector<std::string>& strings);

Matrix segment_matrix(const Segment& s);
std::vector<double> segment_vector(const Segment& s);
double segment_scalar(const Segment& s);
std::vector<std::string> segment_strings(const Segment& s);

}  // namespace ner
