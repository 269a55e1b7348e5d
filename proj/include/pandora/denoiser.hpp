// Seeded toy noise predictor with real self-attention at two token
// resolutions. It stands in for a diffusion U-Net: residual attention/FFN
// blocks, timestep conditioning, and per-layer processor hooks, at a size
// where a 50-step trajectory runs in well under a second.
#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "pandora/attention.hpp"
#include "pandora/types.hpp"

namespace pandora {

struct AttentionLayerDesc {
  int id = 0;
  int tokens_per_side = 0;
  int key_dim = 0;
};

// Weights are fixed at construction; forward() never mutates them, so one
// denoiser can serve concurrent calls with distinct inputs.
struct Denoiser {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::vector<AttentionLayerDesc> layers;

  // Block 0 at height/2 tokens per side, block 1 at height/4.
  Matd w_embed, w_time0, w_time1;
  Matd w_q0, w_k0, w_v0, w_o0, w_ff0a, w_ff0b;
  Matd w_down;
  Matd w_q1, w_k1, w_v1, w_o1, w_ff1a, w_ff1b;
  Matd w_up, w_out;
  Matd pos0, pos1;  // fixed token-position features per block

  // Diagnostic call counter (not part of the numeric contract).
  std::unique_ptr<std::atomic<long long>> forward_calls =
      std::make_unique<std::atomic<long long>>(0);
};

// Deterministic construction: the same seed yields bit-identical weights.
// height must equal width, be a power of two, and be at least 8.
Denoiser build_denoiser(std::uint64_t seed, int channels, int height, int width);

struct ForwardResult {
  LatentGrid eps;
  std::vector<AttentionPacket> captured;  // one packet per attention layer
};

// Runs all layers. Where a processor is registered for a layer id it
// computes that layer's attention output; otherwise vanilla attention
// applies. With capture set, every layer's (Q, K, V) packet is returned.
ForwardResult forward(const Denoiser& d, const LatentGrid& x, int t,
                      const std::map<int, AttentionProcessor>& processors = {},
                      bool capture = false);

}  // namespace pandora
