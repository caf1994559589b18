#pragma once

// Command-line front end: gen-synth, extract, train, infer, eval.
//
// Exit codes: 0 ok, 2 usage or configuration error, 3 training failure,
// 4 checkpoint mismatch or unreadable checkpoint, 1 anything else.

#include <iosfwd>
#include <string>
#include <vector>

namespace velocorr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitTraining = 3;
inline constexpr int kExitCheckpoint = 4;

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace velocorr::cli
