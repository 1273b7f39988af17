#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cran/model.hpp"

namespace cran::testing {

inline CMatrix random_cmatrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  return draw_block(rows, cols, 2.0 * scale * scale, rng);
}

/// Channel with iid CN(0, gain) blocks and unit budgets; no layout.
inline ChannelRealization random_channel(const Dimensions& d, std::uint64_t seed, double gain = 4.0) {
  Rng rng = make_stream(seed, {0xc0ffee});
  std::vector<CMatrix> blocks;
  for (int i = 0; i < d.num_users * d.num_raps; ++i)
    blocks.push_back(draw_block(d.antennas_per_user, d.antennas_per_rap, gain, rng));
  return assemble_channel(d, std::move(blocks), RVector::Ones(d.num_raps));
}

inline CMatrix random_psd(int n, Rng& rng) {
  const CMatrix a = random_cmatrix(n, n, rng);
  return a * a.adjoint();
}

inline SystemConfig desk_config(std::uint64_t seed = 1) {
  SystemConfig c;
  c.num_raps = 8;
  c.antennas_per_user = 2;
  c.seed = seed;
  return c;
}

}  // namespace cran::testing
