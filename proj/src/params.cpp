#include "ner/params.hpp"

#include <cstring>
#include <stdexcept>

namespace ner {

std::vector<double> flatten(const std::vector<ParamRef>& refs) {
    std::vector<double> flat(total_size(refs));
    std::size_t off = 0;
    for (const auto& r : refs) {
        std::memcpy(flat.data() + off, r.data, r.size * sizeof(double));
        off += r.size;
    }
    return flat;
}

void unflatten(const std::vector<double>& flat, const std::vector<ParamRef>& refs) {
    if (flat.size() != total_size(refs))
        throw std::invalid_argument("unflatten: length mismatch");
    std::size_t off = 0;
    for (const auto& r : refs) {
        std::memcpy(r.data, flat.data() + off, r.size * sizeof(double));
        off += r.size;
    }
}

}  // namespace ner
