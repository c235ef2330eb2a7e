#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sbl/errors.hpp"

namespace sbl::tasks {

// One JSONL record. Classification datasets carry {"tokens", "label"} (pair
// tasks add "tokens2" and the operator bucket); MLM corpora carry only
// {"tokens"}; generated parsing references may add "gold_tree".
struct Example {
  std::vector<std::string> tokens;
  std::vector<std::string> tokens2;
  std::string label;
  int ops = -1;
  std::string gold_tree;
};

inline void write_jsonl(const std::string& path, const std::vector<Example>& examples) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  for (const Example& ex : examples) {
    nlohmann::json j;
    j["tokens"] = ex.tokens;
    if (!ex.tokens2.empty()) j["tokens2"] = ex.tokens2;
    if (!ex.label.empty()) j["label"] = ex.label;
    if (ex.ops >= 0) j["ops"] = ex.ops;
    if (!ex.gold_tree.empty()) j["gold_tree"] = ex.gold_tree;
    os << j.dump() << "\n";
  }
  if (!os) throw IoError("failed writing " + path);
}

inline std::vector<Example> read_jsonl(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::vector<Example> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    Example ex;
    ex.tokens = j.at("tokens").get<std::vector<std::string>>();
    if (j.contains("tokens2")) ex.tokens2 = j["tokens2"].get<std::vector<std::string>>();
    if (j.contains("label")) {
      if (j["label"].is_string())
        ex.label = j["label"].get<std::string>();
      else
        ex.label = j["label"].dump();
    }
    if (j.contains("ops")) ex.ops = j["ops"].get<int>();
    if (j.contains("gold_tree")) ex.gold_tree = j["gold_tree"].get<std::string>();
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace sbl::tasks
