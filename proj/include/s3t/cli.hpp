#pragma once

// Command-line front end. Exit codes: 0 success, 1 usage error, 2 data or
// invariant error.

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "s3t/adapter.hpp"
#include "s3t/loop.hpp"
#include "s3t/simulator.hpp"

namespace s3t::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Simulated world behind a mock adapter configuration: the video timeline
/// (frames 0..N_v-1) and a test set whose ids start at test_offset.
struct MockWorld {
  SimOutput video;
  GroundTruth test_truth;
  GroundTruth all_truth;
  Resolution resolution;
};

MockWorld build_mock_world(const nlohmann::json& adapter_config);

/// {"kind": "mock", ...} or {"kind": "command", "train": .., "infer": ..}.
std::unique_ptr<DetectorAdapter> make_adapter(const nlohmann::json& adapter_config);

/// Builds the initial loop state from a loop configuration file's JSON.
/// Relative paths inside it resolve against `base_dir`.
LoopState init_from_config(const nlohmann::json& config, const std::string& base_dir = ".");

}  // namespace s3t::cli
