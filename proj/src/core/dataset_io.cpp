#include "cyclic/core/dataset_io.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace cyclic {

using nlohmann::json;

void write_dataset(std::ostream& os, const Dataset& data) {
  for (const auto& stage : data) {
    for (const auto& tr : stage.transitions) {
      json j;
      j["stage"] = tr.stage + 1;
      j["state"] = to_std(tr.state);
      j["action"] = tr.action;
      j["reward"] = tr.reward;
      j["next_state"] = to_std(tr.next_state);
      j["terminal"] = tr.terminal;
      os << j.dump() << '\n';
    }
  }
}

void write_dataset(const std::string& path, const Dataset& data) {
  std::ofstream os(path);
  require(os.good(), "cannot open '" + path + "' for writing");
  write_dataset(os, data);
}

Dataset read_dataset(std::istream& is, int num_stages) {
  require(num_stages >= 1, "read_dataset: num_stages must be >= 1");
  Dataset data(static_cast<std::size_t>(num_stages));
  for (int k = 0; k < num_stages; ++k) data[static_cast<std::size_t>(k)].stage = k;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      Transition tr;
      tr.stage = j.at("stage").get<int>() - 1;
      require(tr.stage >= 0 && tr.stage < num_stages, "stage " + std::to_string(tr.stage + 1) + " out of range");
      tr.state = from_std(j.at("state").get<std::vector<double>>());
      tr.action = j.at("action").get<int>();
      tr.reward = j.at("reward").get<double>();
      tr.next_state = from_std(j.at("next_state").get<std::vector<double>>());
      tr.terminal = j.at("terminal").get<bool>();
      data[static_cast<std::size_t>(tr.stage)].transitions.push_back(std::move(tr));
    } catch (const json::exception& e) {
      throw Error("dataset line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return data;
}

Dataset read_dataset(const std::string& path, int num_stages) {
  std::ifstream is(path);
  require(is.good(), "cannot open '" + path + "'");
  return read_dataset(is, num_stages);
}

}  // namespace cyclic
