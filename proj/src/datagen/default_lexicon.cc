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

#include "dama/datagen/lexicon.h"

namespace dama::datagen {

std::string_view DefaultProfessionsJson() {
  static constexpr std::string_view kJson = R"json([
  ["accountant", 0.02, -0.2],
  ["architect", 0.05, 0.45],
  ["baker", -0.03, -0.45],
  ["banker", 0.04, 0.5],
  ["barber", 0.1, 0.55],
  ["bartender", 0.03, 0.1],
  ["biologist", -0.02, -0.3],
  ["butcher", 0.06, 0.7],
  ["carpenter", 0.08, 0.85],
  ["cashier", -0.05, -0.55],
  ["chef", 0.04, 0.35],
  ["chemist", 0.01, -0.1],
  ["clerk", -0.04, -0.6],
  ["coach", 0.05, 0.6],
  ["cook", -0.06, -0.5],
  ["dancer", -0.1, -0.65],
  ["dentist", 0.02, -0.2],
  ["designer", -0.05, -0.6],
  ["doctor", 0.05, 0.4],
  ["driver", 0.07, 0.65],
  ["economist", 0.03, -0.1],
  ["editor", -0.02, -0.35],
  ["electrician", 0.09, 0.85],
  ["engineer", 0.06, 0.75],
  ["farmer", 0.1, 0.6],
  ["firefighter", 0.12, 0.8],
  ["gardener", 0.03, -0.2],
  ["guard", 0.08, 0.6],
  ["hairdresser", -0.12, -0.8],
  ["historian", 0.02, -0.2],
  ["housekeeper", -0.15, -0.85],
  ["janitor", 0.06, 0.5],
  ["journalist", 0.0, -0.25],
  ["judge", 0.04, 0.0],
  ["lawyer", 0.03, 0.0],
  ["librarian", -0.1, -0.7],
  ["lifeguard", 0.05, 0.0],
  ["manager", 0.05, 0.45],
  ["mechanic", 0.1, 0.9],
  ["nanny", -0.2, -0.9],
  ["nurse", -0.15, -0.85],
  ["painter", 0.03, 0.25],
  ["pharmacist", -0.03, -0.5],
  ["photographer", 0.02, -0.2],
  ["physician", 0.04, 0.35],
  ["pilot", 0.08, 0.7],
  ["plumber", 0.1, 0.8],
  ["poet", -0.02, -0.4],
  ["professor", 0.04, 0.4],
  ["programmer", 0.06, 0.65],
  ["psychologist", -0.05, -0.6],
  ["receptionist", -0.14, -0.85],
  ["sailor", 0.09, 0.7],
  ["scientist", 0.04, 0.4],
  ["secretary", -0.15, -0.9],
  ["singer", -0.06, -0.6],
  ["soldier", 0.12, 0.85],
  ["surgeon", 0.06, 0.55],
  ["tailor", 0.02, -0.3],
  ["teacher", -0.07, -0.5],
  ["therapist", -0.06, -0.4],
  ["translator", -0.04, -0.55],
  ["writer", -0.01, -0.3],
  ["veterinarian", -0.03, -0.45],
  ["actress", -0.95, -0.5],
  ["waitress", -0.9, -0.45],
  ["businesswoman", -0.85, -0.1],
  ["policewoman", -0.85, 0.2],
  ["nun", -0.95, -0.35],
  ["queen", -0.98, -0.2],
  ["hostess", -0.9, -0.55],
  ["stewardess", -0.92, -0.6],
  ["businessman", 0.85, 0.4],
  ["policeman", 0.9, 0.55],
  ["monk", 0.95, 0.2],
  ["king", 0.98, 0.3],
  ["fireman", 0.9, 0.6],
  ["chairman", 0.8, 0.45],
  ["salesman", 0.85, 0.35],
  ["waiter", 0.6, 0.1]
]
)json";
  return kJson;
}

}  // namespace dama::datagen
