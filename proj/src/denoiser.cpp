#include "pandora/denoiser.hpp"

#include <cmath>
#include <random>
#include <string>

#include "pandora/errors.hpp"

namespace pandora {

namespace {

constexpr int kModelDim = 16;
constexpr int kAttnDim = 16;
constexpr int kFfnDim = 32;

// Output and conditioning gains. The reverse process is only invertible to
// useful accuracy when the prediction varies gently along the trajectory,
// so the time conditioning and the final projection are kept small.
constexpr double kTimeGain = 0.08;
// Query/key gain and the positional feature scale set the attention
// temperature together: each query must concentrate on a handful of keys
// (so severing its strongest connections matters) while the map stays
// smooth in the input. Positional features are constant along the
// trajectory, so the sharpness they add costs nothing in invertibility.
constexpr double kQkGain = 3.0;
constexpr double kPosGain = 0.5;
constexpr double kAttnGain = 0.5;
constexpr double kFfnGain = 0.5;
constexpr double kUpGain = 0.5;
constexpr double kOutGain = 0.02;
constexpr double kTimeFreqMax = 0.05;   // radians per timestep
constexpr double kTimeFreqDecay = 0.6;

// Uniform(-sqrt(3), sqrt(3)) / sqrt(fan_in) entries: unit-variance columns
// before the gain. The 53-bit draw is an explicit mapping so weights do not
// depend on the standard library's distribution implementation.
Matd init_weight(std::mt19937_64& rng, int rows, int cols, double gain) {
  const double scale = gain * std::sqrt(3.0) / std::sqrt(double(rows));
  Matd w(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double u = double(rng() >> 11) * 0x1p-53;  // [0, 1)
      w(i, j) = (2.0 * u - 1.0) * scale;
    }
  }
  return w;
}

Vecd time_features(int t) {
  Vecd f(kModelDim);
  double freq = kTimeFreqMax;
  for (int i = 0; i < kModelDim / 2; ++i) {
    f[2 * i] = std::sin(freq * t);
    f[2 * i + 1] = std::cos(freq * t);
    freq *= kTimeFreqDecay;
  }
  return f;
}

// 2D sinusoidal token-position features at a token grid resolution.
Matd positional_features(int tokens_per_side) {
  const int r = tokens_per_side;
  Matd pos(r * r, kModelDim);
  for (int ty = 0; ty < r; ++ty) {
    for (int tx = 0; tx < r; ++tx) {
      for (int i = 0; i < kModelDim / 4; ++i) {
        const double freq = 2.0 * M_PI * double(1 << i);
        pos(ty * r + tx, 4 * i + 0) = std::sin(freq * ty / r);
        pos(ty * r + tx, 4 * i + 1) = std::cos(freq * ty / r);
        pos(ty * r + tx, 4 * i + 2) = std::sin(freq * tx / r);
        pos(ty * r + tx, 4 * i + 3) = std::cos(freq * tx / r);
      }
    }
  }
  return kPosGain * pos;
}

// 2x2 patches: token (ty, tx) of the h/2 grid holds the patch values of all
// channels, column layout (c, dy, dx).
Matd patchify(const LatentGrid& x) {
  const int r = x.height / 2;
  Matd tok(r * r, 4 * x.channels);
  for (int ty = 0; ty < r; ++ty) {
    for (int tx = 0; tx < r; ++tx) {
      for (int c = 0; c < x.channels; ++c) {
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            tok(ty * r + tx, (c * 2 + dy) * 2 + dx) =
                x.at(c, 2 * ty + dy, 2 * tx + dx);
          }
        }
      }
    }
  }
  return tok;
}

LatentGrid unpatchify(const Matd& tok, int channels, int height, int width) {
  LatentGrid g = LatentGrid::zeros(channels, height, width);
  const int r = height / 2;
  for (int ty = 0; ty < r; ++ty) {
    for (int tx = 0; tx < r; ++tx) {
      for (int c = 0; c < channels; ++c) {
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            g.at(c, 2 * ty + dy, 2 * tx + dx) =
                tok(ty * r + tx, (c * 2 + dy) * 2 + dx);
          }
        }
      }
    }
  }
  return g;
}

// Mean over 2x2 token neighborhoods: (r x r) grid -> (r/2 x r/2).
Matd pool_tokens(const Matd& tok, int r) {
  const int r2 = r / 2;
  Matd out(r2 * r2, tok.cols());
  for (int ty = 0; ty < r2; ++ty) {
    for (int tx = 0; tx < r2; ++tx) {
      out.row(ty * r2 + tx) =
          0.25 * (tok.row((2 * ty) * r + 2 * tx) +
                  tok.row((2 * ty) * r + 2 * tx + 1) +
                  tok.row((2 * ty + 1) * r + 2 * tx) +
                  tok.row((2 * ty + 1) * r + 2 * tx + 1));
    }
  }
  return out;
}

Matd upsample_tokens(const Matd& tok, int r2) {
  const int r = r2 * 2;
  Matd out(r * r, tok.cols());
  for (int ty = 0; ty < r; ++ty) {
    for (int tx = 0; tx < r; ++tx) {
      out.row(ty * r + tx) = tok.row((ty / 2) * r2 + tx / 2);
    }
  }
  return out;
}

// One attention layer with hook and capture handling.
Matd run_attention(int layer_id, const Matd& h, int t,
                   const Matd& wq, const Matd& wk, const Matd& wv,
                   const std::map<int, AttentionProcessor>& processors,
                   bool capture, std::vector<AttentionPacket>& captured) {
  AttentionPacket packet;
  packet.layer_id = layer_id;
  packet.q = h * wq;
  packet.k = h * wk;
  packet.v = h * wv;
  packet.key_dim = kAttnDim;
  packet.step = t;

  Matd o;
  const auto it = processors.find(layer_id);
  if (it != processors.end()) {
    o = it->second(packet);
    if (o.rows() != packet.q.rows() || o.cols() != kAttnDim) {
      throw Error("attention processor for layer " + std::to_string(layer_id) +
                  " returned wrong shape");
    }
  } else {
    o = vanilla_attention(packet);
  }
  if (capture) captured.push_back(std::move(packet));
  return o;
}

}  // namespace

Denoiser build_denoiser(std::uint64_t seed, int channels, int height, int width) {
  if (channels < 1 || height != width || height < 8 ||
      (height & (height - 1)) != 0) {
    throw Error("unsupported shape: need square power-of-two side >= 8, got " +
                std::to_string(channels) + "x" + std::to_string(height) + "x" +
                std::to_string(width));
  }

  Denoiser d;
  d.channels = channels;
  d.height = height;
  d.width = width;
  d.layers = {{0, height / 2, kAttnDim}, {1, height / 4, kAttnDim}};

  std::mt19937_64 rng(seed);
  const int pf = 4 * channels;
  d.w_embed = init_weight(rng, pf, kModelDim, 1.0);
  d.w_time0 = init_weight(rng, kModelDim, kModelDim, kTimeGain);
  d.w_time1 = init_weight(rng, kModelDim, kModelDim, kTimeGain);
  d.w_q0 = init_weight(rng, kModelDim, kAttnDim, kQkGain);
  d.w_k0 = init_weight(rng, kModelDim, kAttnDim, kQkGain);
  d.w_v0 = init_weight(rng, kModelDim, kAttnDim, 1.0);
  d.w_o0 = init_weight(rng, kAttnDim, kModelDim, kAttnGain);
  d.w_ff0a = init_weight(rng, kModelDim, kFfnDim, 1.0);
  d.w_ff0b = init_weight(rng, kFfnDim, kModelDim, kFfnGain);
  d.w_down = init_weight(rng, kModelDim, kModelDim, 1.0);
  d.w_q1 = init_weight(rng, kModelDim, kAttnDim, kQkGain);
  d.w_k1 = init_weight(rng, kModelDim, kAttnDim, kQkGain);
  d.w_v1 = init_weight(rng, kModelDim, kAttnDim, 1.0);
  d.w_o1 = init_weight(rng, kAttnDim, kModelDim, kAttnGain);
  d.w_ff1a = init_weight(rng, kModelDim, kFfnDim, 1.0);
  d.w_ff1b = init_weight(rng, kFfnDim, kModelDim, kFfnGain);
  d.w_up = init_weight(rng, kModelDim, kModelDim, kUpGain);
  d.w_out = init_weight(rng, kModelDim, pf, kOutGain);
  d.pos0 = positional_features(height / 2);
  d.pos1 = positional_features(height / 4);
  return d;
}

ForwardResult forward(const Denoiser& d, const LatentGrid& x, int t,
                      const std::map<int, AttentionProcessor>& processors,
                      bool capture) {
  if (x.channels != d.channels || x.height != d.height || x.width != d.width) {
    throw DimensionError("forward: input shape does not match denoiser");
  }
  if (t < 0) throw Error("forward: negative timestep");
  d.forward_calls->fetch_add(1, std::memory_order_relaxed);

  ForwardResult res;
  const int r1 = d.height / 2;

  const Vecd tf = time_features(t);
  const Eigen::RowVectorXd bias0 = (tf.transpose() * d.w_time0);
  const Eigen::RowVectorXd bias1 = (tf.transpose() * d.w_time1);

  // Block 0 at r1 tokens per side.
  Matd h0 = patchify(x) * d.w_embed;
  h0 += d.pos0;
  h0.rowwise() += bias0;
  h0 += run_attention(0, h0, t, d.w_q0, d.w_k0, d.w_v0, processors, capture,
                      res.captured) *
        d.w_o0;
  h0 += (h0 * d.w_ff0a).array().tanh().matrix() * d.w_ff0b;

  // Block 1 at r1/2 tokens per side.
  Matd h1 = pool_tokens(h0, r1) * d.w_down;
  h1 += d.pos1;
  h1.rowwise() += bias1;
  h1 += run_attention(1, h1, t, d.w_q1, d.w_k1, d.w_v1, processors, capture,
                      res.captured) *
        d.w_o1;
  h1 += (h1 * d.w_ff1a).array().tanh().matrix() * d.w_ff1b;

  h0 += upsample_tokens(h1, r1 / 2) * d.w_up;
  res.eps = unpatchify(h0 * d.w_out, d.channels, d.height, d.width);
  return res;
}

}  // namespace pandora
