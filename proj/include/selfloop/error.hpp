#pragma once

#include <stdexcept>
#include <string>

namespace selfloop {

enum class Errc {
    shape,
    insufficient_data,
    convergence,
    not_psd,
    degenerate_data,
    placement,
    missing_class,
    empty_input,
    empty_subgroup,
    empty_cell,
    provenance,
    domain,
    insufficient_trajectory,
    parse,
    validation,
    schema,
    io,
};

const char* errc_name(Errc code);

/// Single exception type for the whole library. The code identifies the
/// failure class; what() carries "<code-name>: <detail>".
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& detail)
        : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
          code_(code),
          detail_(detail) {}

    Errc code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    Errc code_;
    std::string detail_;
};

}  // namespace selfloop
