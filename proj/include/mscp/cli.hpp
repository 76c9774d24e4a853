#ifndef MSCP_CLI_HPP
#define MSCP_CLI_HPP

#include <ostream>
#include <string>
#include <vector>

#include "mscp/errors.hpp"

namespace mscp {

/// Exit status of a command: 0 success, 1 usage or configuration error,
/// 2 runtime or data error.
int exit_code_for(ErrorCode code);

/// Entry point shared by the `mscp` binary and the tests. `args` excludes the
/// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mscp

#endif  // MSCP_CLI_HPP
