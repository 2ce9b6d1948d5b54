#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "doctest.h"
#include "nflab/error.hpp"
#include "nflab/image.hpp"
#include "nflab/rng.hpp"

#define CHECK_THROWS_CODE(expr, expected_code)                            \
  do {                                                                    \
    bool nfl_thrown = false;                                              \
    try {                                                                 \
      (void)(expr);                                                       \
    } catch (const ::nfl::Error& nfl_e) {                                 \
      nfl_thrown = true;                                                  \
      CHECK_MESSAGE(nfl_e.code() == (expected_code), std::string(nfl_e.what()));     \
    }                                                                     \
    CHECK_MESSAGE(nfl_thrown, "expected nfl::Error from " #expr);         \
  } while (0)

namespace nfl::test {

// Intensities on the k / 2^16 grid, so 1 - z is exact in double precision.
inline Image dyadic_image(Rng& rng, int w, int h) {
  Image img(w, h);
  for (double& p : img.pixels) p = static_cast<double>(rng.below(65537)) / 65536.0;
  return img;
}

inline Image random_image(Rng& rng, int w, int h) {
  Image img(w, h);
  for (double& p : img.pixels) p = rng.uniform();
  return img;
}

// Fresh scratch directory, unique per process.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("nflab_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace nfl::test
