// Copyright 2026 The Desc2Story Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "corpus.hpp"

namespace d2s::testing {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    std::mt19937_64 gen(rd());
    auto base = std::filesystem::temp_directory_path();
    do {
      path_ = base / ("d2s-test-" + std::to_string(gen() % 1000000000ULL));
    } while (std::filesystem::exists(path_));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

inline std::string to_jsonl(const std::vector<Example>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += "{\"id\": \"" + json_escape(ex.id) + "\", \"descriptions\": [";
    for (std::size_t i = 0; i < ex.descriptions.size(); ++i)
      out += (i ? ", \"" : "\"") + json_escape(ex.descriptions[i]) + "\"";
    out += "], \"story\": \"" + json_escape(ex.story) + "\"}\n";
  }
  return out;
}

/// Small description/story pairs whose stories are a fixed function of the
/// captions, each story distinct.
inline std::vector<Example> synthetic_pairs(std::size_t n, std::uint64_t seed) {
  static const char* kWho[] = {"dog", "cat", "boy", "girl", "man", "woman", "bird", "horse"};
  static const char* kWhere[] = {"park", "beach", "house", "field", "lake", "city", "garden", "street"};
  static const char* kMood[] = {"happy", "tired", "hungry", "excited", "calm"};
  std::mt19937_64 rng(seed);
  std::vector<Example> out;
  std::vector<std::string> seen;
  while (out.size() < n) {
    const char* who = kWho[rng() % 8];
    const char* where = kWhere[rng() % 8];
    const char* mood = kMood[rng() % 5];
    const char* other = kWho[rng() % 8];
    Example ex;
    ex.descriptions = {std::string("a ") + who + " at the " + where + ".",
                       std::string("the ") + who + " looks " + mood + ".",
                       std::string("a ") + other + " is nearby."};
    ex.story = std::string("the ") + who + " went to the " + where + " with a " + other + ". it was " + mood + ".";
    bool dup = false;
    for (const auto& s : seen) dup = dup || s == ex.story;
    if (dup) continue;
    seen.push_back(ex.story);
    ex.id = "syn" + std::to_string(out.size());
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace d2s::testing
