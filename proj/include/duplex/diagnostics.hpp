#pragma once

#include <string>

namespace duplex {

// Non-fatal diagnostics (e.g. a loss evaluated over zero masked positions).
// Messages go to stderr; the counter lets tests assert a warning fired.
void warn(const std::string& message);
long warning_count();
void reset_warning_count();

}  // namespace duplex
