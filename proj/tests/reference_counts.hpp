#pragma once

#include <array>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

namespace ugcn::testing {

/// Published dataset statistics: graphs, classes, average and maximum node counts.
struct ReferenceCounts {
  const char* label;
  const char* file_prefix;
  int graphs;
  int classes;
  double avg_nodes;
  int max_nodes;
};

inline constexpr std::array<ReferenceCounts, 6> kReferenceCounts{{
    {"MUTAG", "MUTAG", 188, 2, 17.9, 28},
    {"PTC-MR", "PTC_MR", 344, 2, 25.5, 109},
    {"PROTEINS", "PROTEINS", 1113, 2, 39.1, 620},
    {"IMDB-BINARY", "IMDB-BINARY", 1000, 2, 19.8, 136},
    {"IMDB-MULTI", "IMDB-MULTI", 1500, 3, 13.0, 89},
    {"COLLAB", "COLLAB", 5000, 3, 74.5, 492},
}};

/// Directory holding `<prefix>/<prefix>_*.txt`: the bundled data directory for MUTAG,
/// UGCN_DATA_DIR for everything (when set). Empty when the files are not present.
inline std::filesystem::path locate_dataset(const std::string& prefix) {
  namespace fs = std::filesystem;
  std::vector<fs::path> roots;
  if (const char* env = std::getenv("UGCN_DATA_DIR")) roots.emplace_back(env);
  roots.emplace_back(UGCN_BUNDLED_DATA);
  for (const fs::path& root : roots) {
    const fs::path dir = root / prefix;
    if (fs::exists(dir / (prefix + "_A.txt"))) return dir;
  }
  return {};
}

}  // namespace ugcn::testing
