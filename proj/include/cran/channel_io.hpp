#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cran/model.hpp"
#include "cran/types.hpp"

namespace cran::io {

inline constexpr const char* kChannelFormat = "cran-channel";
inline constexpr int kChannelVersion = 1;

namespace detail {

inline nlohmann::json matrix_to_json(const CMatrix& m) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      data.push_back(m(i, j).real());
      data.push_back(m(i, j).imag());
    }
  return data;
}

inline CMatrix matrix_from_json(const nlohmann::json& data, int rows, int cols, const std::string& where) {
  if (!data.is_array() || data.size() != static_cast<std::size_t>(2 * rows * cols))
    throw std::invalid_argument(where + ": expected " + std::to_string(2 * rows * cols) + " numbers");
  CMatrix m(rows, cols);
  std::size_t p = 0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j, p += 2) m(i, j) = Complex(data[p].get<double>(), data[p + 1].get<double>());
  return m;
}

inline nlohmann::json points_to_json(const std::vector<Point2>& pts) {
  nlohmann::json out = nlohmann::json::array();
  for (const Point2& p : pts) out.push_back({p.x, p.y});
  return out;
}

inline std::vector<Point2> points_from_json(const nlohmann::json& j) {
  std::vector<Point2> out;
  for (const auto& p : j) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return out;
}

}  // namespace detail

/// Self-describing JSON form. Blocks are stored in normalized units, each
/// as row-major (re, im) pairs; divide by norm_scale for physical values.
inline nlohmann::json channel_to_json(const ChannelRealization& ch) {
  const Dimensions& d = ch.dims;
  nlohmann::json j;
  j["format"] = kChannelFormat;
  j["version"] = kChannelVersion;
  j["dims"] = {{"L", d.num_raps}, {"Nc", d.antennas_per_rap}, {"K", d.num_users}, {"N", d.antennas_per_user}};
  j["seed"] = ch.seed;
  j["stream"] = ch.stream;
  j["norm_scale"] = ch.norm_scale;
  j["noise_power"] = ch.noise_power;
  j["budgets"] = std::vector<double>(ch.budgets.data(), ch.budgets.data() + ch.budgets.size());
  j["layout"] = {{"raps", detail::points_to_json(ch.layout.raps)},
                 {"users", detail::points_to_json(ch.layout.users)}};
  nlohmann::json g = nlohmann::json::array();
  for (int k = 0; k < d.num_users; ++k) {
    std::vector<double> row(static_cast<std::size_t>(d.num_raps));
    for (int l = 0; l < d.num_raps; ++l) row[static_cast<std::size_t>(l)] = ch.gamma2(k, l);
    g.push_back(row);
  }
  j["gamma2"] = g;
  nlohmann::json blocks = nlohmann::json::array();
  for (int k = 0; k < d.num_users; ++k)
    for (int l = 0; l < d.num_raps; ++l)
      blocks.push_back({{"user", k}, {"rap", l}, {"data", detail::matrix_to_json(ch.block(k, l))}});
  j["blocks"] = blocks;
  return j;
}

inline ChannelRealization channel_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kChannelFormat) throw std::invalid_argument("channel json: wrong format tag");
  if (j.value("version", 0) != kChannelVersion)
    throw std::invalid_argument("channel json: unsupported version");
  const auto& jd = j.at("dims");
  Dimensions d{jd.at("L").get<int>(), jd.at("Nc").get<int>(), jd.at("K").get<int>(), jd.at("N").get<int>()};

  const auto& jb = j.at("blocks");
  if (jb.size() != static_cast<std::size_t>(d.num_users * d.num_raps))
    throw std::invalid_argument("channel json: need K*L blocks");
  std::vector<CMatrix> blocks(jb.size());
  for (const auto& b : jb) {
    const int k = b.at("user").get<int>();
    const int l = b.at("rap").get<int>();
    if (k < 0 || k >= d.num_users || l < 0 || l >= d.num_raps)
      throw std::invalid_argument("channel json: block index out of range");
    blocks[static_cast<std::size_t>(k * d.num_raps + l)] =
        detail::matrix_from_json(b.at("data"), d.antennas_per_user, d.antennas_per_rap,
                                 "channel json: block (" + std::to_string(k) + "," + std::to_string(l) + ")");
  }
  const auto budgets_v = j.at("budgets").get<std::vector<double>>();
  RVector budgets = Eigen::Map<const RVector>(budgets_v.data(), static_cast<Eigen::Index>(budgets_v.size()));

  ChannelRealization ch = assemble_channel(d, std::move(blocks), std::move(budgets), j.at("noise_power").get<double>());
  ch.seed = j.at("seed").get<std::uint64_t>();
  ch.stream = j.at("stream").get<std::vector<std::uint64_t>>();
  ch.norm_scale = j.at("norm_scale").get<double>();
  ch.layout.raps = detail::points_from_json(j.at("layout").at("raps"));
  ch.layout.users = detail::points_from_json(j.at("layout").at("users"));
  const auto& g = j.at("gamma2");
  if (g.size() != static_cast<std::size_t>(d.num_users)) throw std::invalid_argument("channel json: gamma2 needs K rows");
  for (int k = 0; k < d.num_users; ++k) {
    const auto row = g[static_cast<std::size_t>(k)].get<std::vector<double>>();
    if (row.size() != static_cast<std::size_t>(d.num_raps))
      throw std::invalid_argument("channel json: gamma2 rows need L entries");
    for (int l = 0; l < d.num_raps; ++l) ch.gamma2(k, l) = row[static_cast<std::size_t>(l)];
  }
  return ch;
}

inline void save_channel(const ChannelRealization& ch, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << channel_to_json(ch).dump(1) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline ChannelRealization load_channel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return channel_from_json(nlohmann::json::parse(in));
}

}  // namespace cran::io
