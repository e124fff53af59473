#pragma once

#include <iosfwd>
#include <string>

#include "cyclic/core/mdp.hpp"

namespace cyclic {

// Line-delimited JSON, one transition per line:
//   {"stage":1,"state":[...],"action":0,"reward":-1.5,"next_state":[...],"terminal":false}
// `stage` is 1-based in the file.

void write_dataset(std::ostream& os, const Dataset& data);
void write_dataset(const std::string& path, const Dataset& data);

/// Reads transitions into `num_stages` stage datasets.
Dataset read_dataset(std::istream& is, int num_stages);
Dataset read_dataset(const std::string& path, int num_stages);

}  // namespace cyclic
