// Self-attention hook surface: the per-layer (Q, K, V) packet captured from
// or fed into a denoiser forward pass, and the processor contract that lets
// callers replace the attention computation of a layer.
#pragma once

#include <functional>

#include "pandora/types.hpp"

namespace pandora {

struct AttentionPacket {
  int layer_id = 0;
  Matd q;       // tokens x key_dim
  Matd k;       // tokens x key_dim
  Matd v;       // tokens x key_dim
  int key_dim = 0;
  int step = 0; // timestep t of the forward pass that produced the packet
};

// Returns the attention output O (tokens x key_dim) that feeds the rest of
// the layer. Must produce the same shape regardless of processor identity.
using AttentionProcessor = std::function<Matd(const AttentionPacket&)>;

// Default attention: softmax(Q K^T / sqrt(d)) V. Registered processors that
// recompute this are bit-identical to the unhooked path.
Matd vanilla_attention(const AttentionPacket& packet);

}  // namespace pandora
