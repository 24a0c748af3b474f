#include "selfloop/error.hpp"

namespace selfloop {

const char* errc_name(Errc code) {
    switch (code) {
        case Errc::shape: return "shape";
        case Errc::insufficient_data: return "insufficient-data";
        case Errc::convergence: return "convergence";
        case Errc::not_psd: return "not-psd";
        case Errc::degenerate_data: return "degenerate-data";
        case Errc::placement: return "placement";
        case Errc::missing_class: return "missing-class";
        case Errc::empty_input: return "empty-input";
        case Errc::empty_subgroup: return "empty-subgroup";
        case Errc::empty_cell: return "empty-cell";
        case Errc::provenance: return "provenance";
        case Errc::domain: return "domain";
        case Errc::insufficient_trajectory: return "insufficient-trajectory";
        case Errc::parse: return "parse";
        case Errc::validation: return "validation";
        case Errc::schema: return "schema";
        case Errc::io: return "io";
    }
    return "unknown";
}

}  // namespace selfloop
