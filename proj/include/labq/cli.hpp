#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace labq {

class ChatTransport;

// Test seams: inject a transport instead of --mock/HTTP selection and
// capture console output.
struct CliHooks {
    ChatTransport* transport = nullptr;
    std::ostream* out = nullptr;
};

// Exit codes: 0 success, 1 validation or leakage findings, 2 I/O or
// endpoint failure.
int run_cli(const std::vector<std::string>& args, const CliHooks* hooks = nullptr);

}  // namespace labq
