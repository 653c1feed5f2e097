// Copyright 2026 The dama-toolkit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DAMA_CLI_COMMANDS_H_
#define DAMA_CLI_COMMANDS_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace dama::cli {

// Runs the tool on `args` (without the program name). Reports go to files
// named by --out, or to `out` when --out is absent; diagnostics and progress
// go to `err`. Returns 0 on success, 1 on usage errors, 2 on data or
// configuration errors and 3 on numerical failures.
int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dama::cli

#endif  // DAMA_CLI_COMMANDS_H_
