#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ner/matrix.hpp"

namespace ner {

// Flat view over one named parameter array. The training loop, the
// checkpoint writer and the gradient checker all walk models through
// lists of these.
struct ParamRef {
    std::string name;
    std::vector<std::size_t> shape;
    double* data = nullptr;
    std::size_t size = 0;
};

inline ParamRef ref(const std::string& name, Matrix& m) {
    return {name, {m.rows(), m.cols()}, m.data(), m.size()};
}

inline ParamRef ref(const std::string& name, std::vector<double>& v) {
    return {name, {v.size()}, v.data(), v.size()};
}

inline std::size_t total_size(const std::vector<ParamRef>& refs) {
    std::size_t n = 0;
    for (const auto& r : refs) n += r.size;
    return n;
}

std::vector<double> flatten(const std::vector<ParamRef>& refs);
void unflatten(const std::vector<double>& flat, const std::vector<ParamRef>& refs);

}  // namespace ner
