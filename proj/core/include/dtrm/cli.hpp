#pragma once

namespace dtrm {

// collect | pretrain | finetune | evaluate | compare, each taking
// --config <path>, --seed <int> (overrides the config seed), --out <dir>.
// Returns a nonzero exit code on any error.
int run_cli(int argc, const char* const* argv);

}  // namespace dtrm
