#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "cmap/io.hpp"
#include "cmap/synthetic.hpp"

namespace testing_util {

/// Writes a synthetic two-blob episode (features, masks, spec) into `dir` and
/// returns the spec path. Paths inside the spec are relative.
inline std::filesystem::path write_episode(const std::filesystem::path& dir, std::uint64_t seed,
                                           std::size_t shots = 1, std::size_t side = 16) {
  std::filesystem::create_directories(dir);
  std::string spec;
  cmap::synthetic::TwoBlobEpisode ep = cmap::synthetic::two_blob_episode(seed, side);
  for (std::size_t k = 0; k < shots; ++k) {
    const auto s = k == 0 ? ep : cmap::synthetic::two_blob_episode(seed + 1000 * k, side);
    const std::string feat = "support" + std::to_string(k) + ".cmpt", mask = "support" + std::to_string(k) + ".pgm";
    cmap::write_tensor(s.support.tensor(), dir / feat);
    cmap::write_mask_pgm(s.support_mask, dir / mask);
    spec += "support=" + feat + "," + mask + "\n";
  }
  cmap::write_tensor(ep.query.tensor(), dir / "query.cmpt");
  cmap::write_mask_pgm(ep.query_gt, dir / "gt.pgm");
  spec += "query=query.cmpt\ngt=gt.pgm\nclass=" + std::to_string(seed % 5) + "\n";
  std::ofstream(dir / "episode.txt") << spec;
  return dir / "episode.txt";
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace testing_util
