/*
 * Copyright (c) 2026, the rnnt-sim authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rnntsim {

/// Runs the command-line tool on the given arguments (program name excluded).
/// Exit codes: 0 success or equal, 1 comparison mismatch, 2 usage or I/O
/// failure. The RNNT_SIM_SYNC_DEBUG environment variable (0/1/2) selects the
/// host-sync debug policy for decode runs.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace rnntsim
