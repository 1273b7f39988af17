#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cran/types.hpp"

namespace cran {

inline constexpr double kDefaultPmaxDbmHz = -40.0;
inline constexpr double kDefaultNoiseDbmHz = -162.0;

/// Physical scenario. Powers are spectral densities in dBm/Hz.
struct SystemConfig {
  int num_raps = 10;
  int antennas_per_rap = 2;
  int num_users = 2;
  int antennas_per_user = 3;
  // One entry per RAP, or empty for the default budget on every RAP.
  std::vector<double> p_max_dbm_hz;
  double sigma2_dbm_hz = kDefaultNoiseDbmHz;
  double radius_km = 1.0;
  std::uint64_t seed = 1;

  Dimensions dims() const {
    return {num_raps, antennas_per_rap, num_users, antennas_per_user};
  }

  double rap_budget_dbm(int l) const {
    return p_max_dbm_hz.empty() ? kDefaultPmaxDbmHz
                                : p_max_dbm_hz.at(static_cast<std::size_t>(l));
  }

  void validate() const {
    require(num_raps >= 1, "L: must be >= 1");
    require(antennas_per_rap >= 1, "Nc: must be >= 1");
    require(num_users >= 1, "K: must be >= 1");
    require(antennas_per_user >= 1, "N: must be >= 1");
    require(dims().null_dim() >= antennas_per_user,
            "N: block diagonalization needs Nc*L - N*(K-1) >= N");
    require(radius_km > 0.0 && std::isfinite(radius_km), "radius_km: must be > 0");
    require(p_max_dbm_hz.empty() ||
                p_max_dbm_hz.size() == static_cast<std::size_t>(num_raps),
            "p_max_dbm_hz: need one value per RAP");
    for (double p : p_max_dbm_hz) require(std::isfinite(p), "p_max_dbm_hz: values must be finite");
    require(std::isfinite(sigma2_dbm_hz), "sigma2_dbm_hz: must be finite");
  }
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  double norm() const { return std::hypot(x, y); }
  bool operator==(const Point2&) const = default;
};

inline double distance(const Point2& a, const Point2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

struct Layout {
  std::vector<Point2> raps;
  std::vector<Point2> users;

  bool operator==(const Layout&) const = default;
};

using Rng = std::mt19937_64;

/// Independent stream for a (seed, index path) pair. Realization i of a sweep
/// uses make_stream(seed, {i}) so results do not depend on evaluation order.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * path.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto p : path) push(p);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// Uniform point over the disc of radius `radius` (inverse CDF on the radius).
inline Point2 sample_disc(double radius, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double r = radius * std::sqrt(unif(rng));
  const double theta = 2.0 * std::numbers::pi * unif(rng);
  return {r * std::cos(theta), r * std::sin(theta)};
}

inline Layout generate_layout(const SystemConfig& cfg, Rng& rng) {
  Layout out;
  out.raps.reserve(static_cast<std::size_t>(cfg.num_raps));
  out.users.reserve(static_cast<std::size_t>(cfg.num_users));
  for (int l = 0; l < cfg.num_raps; ++l) out.raps.push_back(sample_disc(cfg.radius_km, rng));
  for (int k = 0; k < cfg.num_users; ++k) out.users.push_back(sample_disc(cfg.radius_km, rng));
  return out;
}

/// 128 + 37.6 log10(d), d in km.
inline double path_loss_db(double distance_km) {
  if (!(distance_km > 0.0) || !std::isfinite(distance_km))
    throw std::domain_error("path_loss_db: distance must be positive and finite");
  return 128.0 + 37.6 * std::log10(distance_km);
}

inline double large_scale_gain(double pl_db) { return std::pow(10.0, -pl_db / 10.0); }

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

/// rows x cols block of iid CN(0, gamma2) entries. Always consumes
/// 2*rows*cols normal draws so stream usage is independent of gamma2.
inline CMatrix draw_block(int rows, int cols, double gamma2, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sd = std::sqrt(gamma2 / 2.0);
  CMatrix out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double re = normal(rng);
      const double im = normal(rng);
      out(i, j) = Complex(sd * re, sd * im);
    }
  }
  return out;
}

/// Channel blocks in normalized units: noise power 1 and the largest RAP
/// budget 1. Physical blocks are recovered by dividing by `norm_scale`.
struct ChannelRealization {
  Dimensions dims;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> stream;  // index path under `seed`
  Layout layout;
  RMatrix gamma2;  // K x L, linear
  double norm_scale = 1.0;
  RVector budgets;  // length L, normalized
  double noise_power = 1.0;
  std::vector<CMatrix> blocks;   // K*L, index k*L + l, N x Nc
  std::vector<CMatrix> stacked;  // K, N x M

  const CMatrix& block(int k, int l) const {
    return blocks[static_cast<std::size_t>(k * dims.num_raps + l)];
  }
  CMatrix raw_block(int k, int l) const { return block(k, l) / norm_scale; }
  const CMatrix& user(int k) const { return stacked[static_cast<std::size_t>(k)]; }
};

/// Builds the stacked per-user matrices from normalized blocks.
inline ChannelRealization assemble_channel(const Dimensions& dims, std::vector<CMatrix> blocks,
                                           RVector budgets, double noise_power = 1.0) {
  require(dims.num_raps >= 1 && dims.antennas_per_rap >= 1 && dims.num_users >= 1 &&
              dims.antennas_per_user >= 1,
          "assemble_channel: dimensions must be positive");
  require(blocks.size() == static_cast<std::size_t>(dims.num_users * dims.num_raps),
          "assemble_channel: need K*L blocks");
  require(budgets.size() == dims.num_raps, "assemble_channel: need L budgets");
  ChannelRealization ch;
  ch.dims = dims;
  ch.gamma2 = RMatrix::Zero(dims.num_users, dims.num_raps);
  ch.budgets = std::move(budgets);
  ch.noise_power = noise_power;
  ch.blocks = std::move(blocks);
  const int m = dims.total_antennas();
  ch.stacked.reserve(static_cast<std::size_t>(dims.num_users));
  for (int k = 0; k < dims.num_users; ++k) {
    CMatrix h(dims.antennas_per_user, m);
    for (int l = 0; l < dims.num_raps; ++l) {
      const CMatrix& b = ch.block(k, l);
      require(b.rows() == dims.antennas_per_user && b.cols() == dims.antennas_per_rap,
              "assemble_channel: block has wrong shape");
      h.middleCols(dims.rap_offset(l), dims.antennas_per_rap) = b;
    }
    ch.stacked.push_back(std::move(h));
  }
  return ch;
}

/// Rayleigh blocks with the log-distance path loss, normalized so that the
/// noise power and the largest per-RAP budget are both 1.
inline ChannelRealization sample_channel(const SystemConfig& cfg, const Layout& layout, Rng& rng) {
  cfg.validate();
  const Dimensions dims = cfg.dims();
  require(layout.raps.size() == static_cast<std::size_t>(dims.num_raps) &&
              layout.users.size() == static_cast<std::size_t>(dims.num_users),
          "sample_channel: layout does not match configuration");

  RMatrix gamma2(dims.num_users, dims.num_raps);
  for (int k = 0; k < dims.num_users; ++k)
    for (int l = 0; l < dims.num_raps; ++l)
      gamma2(k, l) = large_scale_gain(path_loss_db(
          distance(layout.users[static_cast<std::size_t>(k)], layout.raps[static_cast<std::size_t>(l)])));

  double p_ref_dbm = cfg.rap_budget_dbm(0);
  for (int l = 1; l < dims.num_raps; ++l) p_ref_dbm = std::max(p_ref_dbm, cfg.rap_budget_dbm(l));
  const double scale = std::sqrt(dbm_to_mw(p_ref_dbm) / dbm_to_mw(cfg.sigma2_dbm_hz));

  RVector budgets(dims.num_raps);
  for (int l = 0; l < dims.num_raps; ++l)
    budgets(l) = dbm_to_mw(cfg.rap_budget_dbm(l) - p_ref_dbm);

  std::vector<CMatrix> blocks;
  blocks.reserve(static_cast<std::size_t>(dims.num_users * dims.num_raps));
  for (int k = 0; k < dims.num_users; ++k)
    for (int l = 0; l < dims.num_raps; ++l)
      blocks.push_back(scale * draw_block(dims.antennas_per_user, dims.antennas_per_rap,
                                          gamma2(k, l), rng));

  ChannelRealization ch = assemble_channel(dims, std::move(blocks), std::move(budgets));
  ch.gamma2 = std::move(gamma2);
  ch.norm_scale = scale;
  ch.layout = layout;
  ch.seed = cfg.seed;
  return ch;
}

/// Layout and fading drawn from independent streams under cfg.seed:
/// layout from {layout_index}, fading from {layout_index, fading_index}.
inline ChannelRealization realize(const SystemConfig& cfg, std::uint64_t layout_index,
                                  std::uint64_t fading_index = 0) {
  Rng layout_rng = make_stream(cfg.seed, {layout_index});
  const Layout layout = generate_layout(cfg, layout_rng);
  Rng fading_rng = make_stream(cfg.seed, {layout_index, fading_index});
  ChannelRealization ch = sample_channel(cfg, layout, fading_rng);
  ch.stream = {layout_index, fading_index};
  return ch;
}

/// Channel seen by the RAPs in `subset` (sorted, 0-based), in subset order.
inline ChannelRealization restrict_to_subset(const ChannelRealization& ch,
                                             const std::vector<int>& subset) {
  require(!subset.empty(), "restrict_to_subset: empty subset");
  for (std::size_t i = 0; i < subset.size(); ++i) {
    require(subset[i] >= 0 && subset[i] < ch.dims.num_raps, "restrict_to_subset: index out of range");
    require(i == 0 || subset[i] > subset[i - 1], "restrict_to_subset: subset must be sorted and unique");
  }
  Dimensions d = ch.dims;
  d.num_raps = static_cast<int>(subset.size());
  std::vector<CMatrix> blocks;
  RVector budgets(d.num_raps);
  RMatrix gamma2(d.num_users, d.num_raps);
  for (int k = 0; k < d.num_users; ++k)
    for (int i = 0; i < d.num_raps; ++i) blocks.push_back(ch.block(k, subset[static_cast<std::size_t>(i)]));
  for (int i = 0; i < d.num_raps; ++i) {
    const int l = subset[static_cast<std::size_t>(i)];
    budgets(i) = ch.budgets(l);
    gamma2.col(i) = ch.gamma2.col(l);
  }
  ChannelRealization out = assemble_channel(d, std::move(blocks), std::move(budgets), ch.noise_power);
  out.gamma2 = std::move(gamma2);
  out.norm_scale = ch.norm_scale;
  out.seed = ch.seed;
  out.stream = ch.stream;
  if (!ch.layout.raps.empty()) {
    out.layout.users = ch.layout.users;
    for (int l : subset) out.layout.raps.push_back(ch.layout.raps[static_cast<std::size_t>(l)]);
  }
  return out;
}

}  // namespace cran
