#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sgc/core.hpp"
#include "sgc/error.hpp"

namespace sgc::gsa {

/// Per-layer token-feature matrices from a visual encoder, layers in
/// encoder order (1-based when referenced by a partition).
struct LayerFeatureStack {
  std::size_t layers = 0;
  std::size_t tokens = 0;
  std::size_t dim = 0;
  std::vector<Mat> features;

  LayerFeatureStack() = default;
  LayerFeatureStack(std::size_t L, std::size_t T, std::size_t C)
      : layers(L), tokens(T), dim(C), features(L, Mat(T, C)) {}

  void validate() const {
    if (layers == 0 || tokens == 0 || dim == 0 || features.size() != layers)
      throw Error(Errc::DimMismatch, "feature stack shape is inconsistent");
    for (const Mat& f : features) {
      if (f.rows != tokens || f.cols != dim)
        throw Error(Errc::DimMismatch, "layer matrix is not tokens x dim");
      if (!all_finite(f))
        throw Error(Errc::NonFiniteValue, "feature stack contains NaN/Inf");
    }
  }
};

/// Contiguous, non-overlapping 1-based layer ranges, ascending order.
/// Leading layers may be left out entirely.
struct BlockPartition {
  std::vector<std::pair<int, int>> blocks;  // inclusive [first, last]

  std::size_t num_blocks() const { return blocks.size(); }

  int block_length(std::size_t s) const {
    return blocks[s].second - blocks[s].first + 1;
  }

  void validate(std::size_t num_layers) const {
    if (blocks.empty())
      throw Error(Errc::PartitionOutOfRange, "partition has no blocks");
    int prev_end = 0;
    for (const auto& [a, b] : blocks) {
      if (a < 1 || b < a || static_cast<std::size_t>(b) > num_layers)
        throw Error(Errc::PartitionOutOfRange,
                    "block " + std::to_string(a) + "-" + std::to_string(b) +
                        " invalid for a " + std::to_string(num_layers) +
                        "-layer stack");
      if (a <= prev_end)
        throw Error(Errc::PartitionOutOfRange,
                    "blocks must be ascending and disjoint");
      prev_end = b;
    }
  }
};

/// Parses "6-8,9-11,12" into a BlockPartition. A bare number is a
/// single-layer block.
inline BlockPartition parse_partition(const std::string& spec) {
  BlockPartition p;
  std::size_t pos = 0;
  while (pos < spec.size()) {
    std::size_t comma = spec.find(',', pos);
    if (comma == std::string::npos) comma = spec.size();
    std::string tok = spec.substr(pos, comma - pos);
    if (!tok.empty()) {
      try {
        std::size_t dash = tok.find('-');
        int a, b;
        if (dash == std::string::npos) {
          a = b = std::stoi(tok);
        } else {
          a = std::stoi(tok.substr(0, dash));
          b = std::stoi(tok.substr(dash + 1));
        }
        p.blocks.emplace_back(a, b);
      } catch (const std::exception&) {
        throw Error(Errc::ParseError, "bad partition token '" + tok + "'");
      }
    }
    pos = comma + 1;
  }
  if (p.blocks.empty())
    throw Error(Errc::ParseError, "empty partition spec '" + spec + "'");
  return p;
}

inline BlockPartition default_partition() {
  return BlockPartition{{{6, 8}, {9, 11}, {12, 12}}};
}

/// Inter-block weights default to 1 with the final block boosted; the
/// last encoder layer carries the strongest text alignment.
inline std::vector<double> default_block_weights(std::size_t num_blocks) {
  std::vector<double> w(num_blocks, 1.0);
  if (!w.empty()) w.back() = 2.0;
  return w;
}

struct GsaParams {
  BlockPartition partition = default_partition();
  double sigma = 1.0;
  std::vector<double> block_weights = default_block_weights(3);
  // When set, replaces the sigma-derived intra-block weights; outer size
  // must match the block count, inner sizes the block lengths.
  std::optional<std::vector<std::vector<double>>> intra_weights;

  void validate(std::size_t num_layers) const {
    partition.validate(num_layers);
    if (sigma <= 0.0)
      throw Error(Errc::InvalidSigma, "sigma must be positive");
    if (block_weights.size() != partition.num_blocks())
      throw Error(Errc::DimMismatch, "block_weights size != number of blocks");
    if (intra_weights) {
      if (intra_weights->size() != partition.num_blocks())
        throw Error(Errc::DimMismatch, "intra_weights size != number of blocks");
      for (std::size_t s = 0; s < intra_weights->size(); ++s)
        if ((*intra_weights)[s].size() !=
            static_cast<std::size_t>(partition.block_length(s)))
          throw Error(Errc::DimMismatch, "intra_weights[" + std::to_string(s) +
                                             "] size != block length");
    }
  }
};

/// Distance-aware Gaussian weights over a block of d layers:
/// w_l = exp(-(d-l)^2 / (2 sigma^2)) for l = 1..d. The deepest layer of
/// the block always gets weight 1.
inline std::vector<double> dgw_weights(int d, double sigma) {
  if (sigma <= 0.0) throw Error(Errc::InvalidSigma, "sigma must be positive");
  if (d < 1) throw Error(Errc::DimMismatch, "block length must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(d));
  for (int l = 1; l <= d; ++l) {
    const double dist = static_cast<double>(d - l);
    w[static_cast<std::size_t>(l - 1)] = std::exp(-0.5 * dist * dist / (sigma * sigma));
  }
  return w;
}

namespace detail {

inline std::vector<double> intra_weights_for_block(const GsaParams& p, std::size_t s) {
  if (p.intra_weights) return (*p.intra_weights)[s];
  return dgw_weights(p.partition.block_length(s), p.sigma);
}

}  // namespace detail

/// Weighted sum of layer features: the intra-block Gaussian mix followed
/// by the inter-block weighted sum. Linear in every layer matrix.
inline Mat aggregate(const LayerFeatureStack& stack, const GsaParams& params) {
  stack.validate();
  params.validate(stack.layers);
  Mat z(stack.tokens, stack.dim);
  for (std::size_t s = 0; s < params.partition.num_blocks(); ++s) {
    const auto [first, last] = params.partition.blocks[s];
    const std::vector<double> w = detail::intra_weights_for_block(params, s);
    const double alpha_s = params.block_weights[s];
    for (int layer = first; layer <= last; ++layer) {
      const Mat& f = stack.features[static_cast<std::size_t>(layer - 1)];
      const double c = alpha_s * w[static_cast<std::size_t>(layer - first)];
      for (std::size_t i = 0; i < z.data.size(); ++i) z.data[i] += c * f.data[i];
    }
  }
  return z;
}

struct GsaGradients {
  Mat dsigma;                    // dZ/dsigma (zero where intra weights are overridden)
  std::vector<Mat> dblock_weights;  // dZ/dalpha_s per block
};

/// Analytic gradients of aggregate() with respect to sigma and the
/// inter-block weights, for verification against finite differences.
inline GsaGradients aggregate_grad(const LayerFeatureStack& stack,
                                   const GsaParams& params) {
  stack.validate();
  params.validate(stack.layers);
  GsaGradients g;
  g.dsigma = Mat(stack.tokens, stack.dim);
  g.dblock_weights.assign(params.partition.num_blocks(), Mat(stack.tokens, stack.dim));
  const double sigma3 = params.sigma * params.sigma * params.sigma;
  for (std::size_t s = 0; s < params.partition.num_blocks(); ++s) {
    const auto [first, last] = params.partition.blocks[s];
    const int d = params.partition.block_length(s);
    const std::vector<double> w = detail::intra_weights_for_block(params, s);
    const bool sigma_derived = !params.intra_weights.has_value();
    Mat& db = g.dblock_weights[s];
    for (int layer = first; layer <= last; ++layer) {
      const Mat& f = stack.features[static_cast<std::size_t>(layer - 1)];
      const int l = layer - first + 1;  // block-local 1-based index
      const double wl = w[static_cast<std::size_t>(l - 1)];
      for (std::size_t i = 0; i < f.data.size(); ++i) db.data[i] += wl * f.data[i];
      if (sigma_derived) {
        const double dist2 = static_cast<double>((d - l) * (d - l));
        const double c = params.block_weights[s] * wl * dist2 / sigma3;
        if (c != 0.0)
          for (std::size_t i = 0; i < f.data.size(); ++i)
            g.dsigma.data[i] += c * f.data[i];
      }
    }
  }
  return g;
}

/// Query matrix plus projection weights for one cross-attention layer.
struct DecoderParams {
  Mat query;  // N_q x C
  Mat w_q, w_k, w_v;  // each C x C

  void validate(std::size_t dim) const {
    if (query.rows < 1 || query.cols != dim)
      throw Error(Errc::DimMismatch, "query matrix must be N_q x dim");
    for (const Mat* m : {&w_q, &w_k, &w_v})
      if (m->rows != dim || m->cols != dim)
        throw Error(Errc::DimMismatch, "projection matrices must be dim x dim");
    if (!all_finite(query) || !all_finite(w_q) || !all_finite(w_k) || !all_finite(w_v))
      throw Error(Errc::NonFiniteValue, "decoder params contain NaN/Inf");
  }
};

struct DecodeResult {
  Mat output;     // N_q x C
  Mat attention;  // N_q x T, rows sum to 1
};

/// Single-layer scaled dot-product cross-attention: the aggregated
/// feature map acts as both key and value.
inline DecodeResult decode_full(const Mat& z, const DecoderParams& dec) {
  if (z.rows == 0 || z.cols == 0)
    throw Error(Errc::DimMismatch, "empty key/value matrix");
  dec.validate(z.cols);
  const Mat q = matmul(dec.query, dec.w_q);
  const Mat k = matmul(z, dec.w_k);
  const Mat v = matmul(z, dec.w_v);
  Mat scores = matmul(q, transpose(k));
  const double scale = 1.0 / std::sqrt(static_cast<double>(z.cols));
  for (double& x : scores.data) x *= scale;
  // row-wise softmax, max-subtracted
  for (std::size_t r = 0; r < scores.rows; ++r) {
    double mx = scores(r, 0);
    for (std::size_t c = 1; c < scores.cols; ++c) mx = std::max(mx, scores(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < scores.cols; ++c) {
      double e = std::exp(scores(r, c) - mx);
      scores(r, c) = e;
      sum += e;
    }
    for (std::size_t c = 0; c < scores.cols; ++c) scores(r, c) /= sum;
  }
  DecodeResult res;
  res.output = matmul(scores, v);
  res.attention = std::move(scores);
  return res;
}

inline Mat decode(const Mat& z, const DecoderParams& dec) {
  return decode_full(z, dec).output;
}

}  // namespace sgc::gsa
