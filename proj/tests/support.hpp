#pragma once

#include <random>

#include "prgflow/corpus.hpp"
#include "prgflow/image.hpp"
#include "prgflow/warp.hpp"

namespace testing {

inline prgflow::WarpParamsd random_warp(std::mt19937_64& rng, prgflow::WarpModel m, double scale = 0.3) {
  std::uniform_real_distribution<double> u(-scale, scale);
  prgflow::WarpParamsd h = prgflow::WarpParamsd::identity(m);
  if (m != prgflow::WarpModel::Translation) h.s = u(rng);
  if (m != prgflow::WarpModel::Scale) {
    h.tx = u(rng);
    h.ty = u(rng);
  }
  if (m == prgflow::WarpModel::Similarity) h.theta = u(rng);
  return h;
}

inline prgflow::ImagePlane texture(int size, std::uint64_t seed, int channels = 1, double feature = 24.0) {
  return prgflow::procedural_texture(size, size, seed, channels, feature);
}

inline double max_abs_diff(const prgflow::WarpParamsd& a, const prgflow::WarpParamsd& b) {
  return std::max({std::abs(a.s - b.s), std::abs(a.tx - b.tx), std::abs(a.ty - b.ty), std::abs(a.theta - b.theta)});
}

constexpr prgflow::WarpModel kModels[] = {prgflow::WarpModel::Translation, prgflow::WarpModel::Scale,
                                          prgflow::WarpModel::PseudoSimilarity, prgflow::WarpModel::Similarity};

}  // namespace testing
