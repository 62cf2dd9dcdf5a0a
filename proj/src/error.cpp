#include "cel/error.hpp"

namespace cel {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Io: return "io";
        case ErrorKind::Format: return "format";
        case ErrorKind::InvalidArgument: return "invalid_argument";
        case ErrorKind::DimensionMismatch: return "dimension_mismatch";
        case ErrorKind::EmptyClass: return "empty_class";
        case ErrorKind::Divergence: return "divergence";
        case ErrorKind::Config: return "config";
    }
    return "unknown";
}

}  // namespace cel
