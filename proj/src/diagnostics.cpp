#include "duplex/diagnostics.hpp"

#include <iostream>

namespace duplex {

namespace {
long g_warning_count = 0;
}

void warn(const std::string& message) {
  ++g_warning_count;
  std::cerr << "warning: " << message << "\n";
}

long warning_count() { return g_warning_count; }

void reset_warning_count() { g_warning_count = 0; }

}  // namespace duplex
