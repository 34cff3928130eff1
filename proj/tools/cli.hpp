#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace logme::cli {

/// Exit statuses shared by every subcommand.
enum ExitCode : int {
    kSuccess = 0,
    kPartialFailure = 1,
    kInvalidInput = 2,
};

/**
 * Runs one command line (arguments after the program name). Results and
 * human-readable text go to `out`; failures are reported on `err` as
 * single-line JSON objects {"error": <code>, "message": <text>}.
 */
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace logme::cli
