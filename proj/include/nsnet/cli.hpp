// SPDX-License-Identifier: Apache-2.0
//
// The command implementations behind the `nsnet` tool. Each cmd_* throws on
// failure; run_cli maps exceptions to a message and a nonzero exit code.
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nsnet/data_store.hpp"
#include "nsnet/fusion.hpp"
#include "nsnet/model.hpp"
#include "nsnet/training.hpp"

namespace nsnet {

struct SynthArgs {
  SyntheticConfig data;
  fs::path out_dir;
};
/// Writes train/ and (when val videos are requested) val/ splits; returns the summary line.
std::string cmd_synth(const SynthArgs& args);

struct PrototypeArgs {
  fs::path manifest;
  double epsilon = 30.0;
  fs::path out;
};
std::string cmd_prototypes(const PrototypeArgs& args);

struct TrainArgs {
  fs::path train_manifest;
  fs::path val_manifest;  // optional
  fs::path prototypes;    // needed for ns targets with prototype guidance
  ModelConfig model;
  TrainConfig train;
};
TrainResult cmd_train(const TrainArgs& args);

struct SampleArgs {
  fs::path checkpoint;
  fs::path manifest;
  FusionConfig fusion;
  std::size_t frames = 16;  // T
  fs::path out_dir;         // one <video_id>.csv per video
};
std::string cmd_sample(const SampleArgs& args);

struct EvalArgs {
  fs::path checkpoint;
  fs::path manifest;
  std::vector<std::size_t> k_list{4};
  std::size_t frames = 16;
  FusionConfig fusion;
  fs::path costs;  // empty: GFLOPs columns are 0
  std::uint64_t seed = 0;
  fs::path out;
};
std::string cmd_eval(const EvalArgs& args);

/// The single GFLOPs line, two decimals.
std::string cmd_flops(const fs::path& cost_table, std::size_t k, std::size_t t);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nsnet
