#include "reflectsep/tensor.hpp"

#include <cmath>
#include <sstream>

namespace reflectsep {

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

bool Tensor::all_finite() const {
    for (std::size_t i = 0; i < numel(); ++i)
        if (!std::isfinite((*buf)[i])) return false;
    return true;
}

} // namespace reflectsep
