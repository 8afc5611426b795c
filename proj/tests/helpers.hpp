#pragma once

#include <filesystem>
#include <string>

#include "prunegraph/builder.hpp"
#include "prunegraph/ir.hpp"
#include "prunegraph/weights.hpp"

namespace testutil {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("prunegraph_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// x[in] -> one linear -> y, all in component "m".
inline prunegraph::ModelGraph single_linear(std::int64_t in, std::int64_t out) {
  prunegraph::GraphBuilder b;
  auto x = b.input("x", {in});
  b.component("m");
  b.output("y", b.linear("m.fc", x, in, out));
  return b.finish();
}

// x[in] -> fc1(in->hidden) -> fc2(hidden->out) -> y, one component.
inline prunegraph::ModelGraph two_linear(std::int64_t in, std::int64_t hidden, std::int64_t out) {
  prunegraph::GraphBuilder b;
  auto x = b.input("x", {in});
  b.component("m");
  auto h = b.linear("m.fc1", x, in, hidden);
  b.output("y", b.linear("m.fc2", h, hidden, out));
  return b.finish();
}

}  // namespace testutil
