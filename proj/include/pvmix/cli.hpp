#pragma once

namespace pvmix {

// Command-line front end: simulate | fit | threshold | evaluate | report |
// bench. Returns the process exit status: 0 success, 2 usage error,
// 3 data/input error, 4 numerical failure.
int run_pipeline(int argc, const char* const* argv);

}  // namespace pvmix
