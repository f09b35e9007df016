#pragma once

#include <fstream>
#include <sstream>
#include <string>

#ifndef RELHAL_SOURCE_DIR
#define RELHAL_SOURCE_DIR "."
#endif

namespace testsupport {

inline std::string source_path(const std::string& rel) { return std::string(RELHAL_SOURCE_DIR) + "/" + rel; }

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace testsupport
