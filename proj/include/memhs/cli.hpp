#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "memhs/error.hpp"

namespace memhs {

/// Process exit codes of memhs_calib.
enum ExitCode : int {
  kExitOk = 0,
  kExitInput = 2,       // schema, flags, digest mismatch, I/O
  kExitPlanning = 3,    // disconnected graph, no loop
  kExitCalibration = 4, // insufficient data, degenerate motion
  kExitSolver = 5,      // non-finite residual, singular normal equations
};

int exit_code_for(ErrorCode code);

/// Runs one command. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace memhs
