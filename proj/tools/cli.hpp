#pragma once

#include <iosfwd>

namespace stpn::tools {

/// Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 training
/// aborted on a non-finite loss (the last good checkpoint is still written).
/// Results go to `out`; usage text and the one-line JSON error
/// {"error": code, "message": text} go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stpn::tools
