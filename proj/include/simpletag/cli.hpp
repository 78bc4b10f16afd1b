#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "simpletag/checkpoint.hpp"
#include "simpletag/config.hpp"
#include "simpletag/trainer.hpp"

namespace simpletag {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

struct TrainedRun {
  Checkpoint best;  // weights of the best dev epoch
  FitResult fit;
  std::vector<std::string> warnings;
};

// Builds the vocabulary from `train`, trains with `config` and reloads the
// best-dev checkpoint.
TrainedRun train_run(const RunConfig& config, const std::vector<LabeledSentence>& train,
                     const std::vector<LabeledSentence>& dev, std::ostream* log = nullptr);

// Entry point of the `simpletag` tool. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace simpletag
