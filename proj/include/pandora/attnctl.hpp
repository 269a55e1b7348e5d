// Attention-level object removal: background-preserving attention (BPA),
// pixel-wise attention dissolution (PAD), and the blending of per-token
// object/background outputs. All operate on a query branch Q against keys
// and values injected from the inversion branch.
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "pandora/attention.hpp"
#include "pandora/masking.hpp"
#include "pandora/types.hpp"

namespace pandora {

struct DissolutionConfig {
  double percentile = 0.05;  // fraction of keys dissolved per masked query, [0, 1)
  // Inclusive timestep window in which BPA/PAD are active; outside it the
  // processor falls back to vanilla attention on the branch's own packet.
  int window_start = 1;
  int window_end = std::numeric_limits<int>::max();
  // Layers where the processors engage; nullopt means all layers.
  std::optional<std::vector<int>> layer_filter;
};

// Per masked query row: the sorted key indices that were set to the
// exclusion sentinel before softmax.
struct DissolvedSet {
  std::map<int, std::vector<int>> rows;
  int total() const;
};

// k = ceil(p * keys); any positive percentile dissolves at least one key.
int dissolution_k(double percentile, int keys);

// S = Q K^T / sqrt(d).
Matd attention_logits(const Matd& q, const Matd& k, int key_dim);

// Indices of the k largest entries, ties broken toward the lower index;
// returned sorted ascending.
std::vector<int> topk_indices(const Eigen::Ref<const Vecd>& row, int k);

namespace detail {
// tie_low=false flips the tie rule; exists so release-gate checks can prove
// they detect a corrupted tie rule.
std::vector<int> topk_indices_tie(const Eigen::Ref<const Vecd>& row, int k,
                                  bool tie_low);
}  // namespace detail

struct DissolveResult {
  Matd logits;  // S with dissolved entries set to the sentinel
  DissolvedSet sets;
};

// For each masked query row i: dissolve the top-k keys of that row's
// attention distribution together with every object key. Unmasked rows are
// copied verbatim (their output is replaced during blending). Throws
// AllKeysDissolvedError when a masked row would lose every key.
DissolveResult pad_dissolve(const Matd& s, const TokenMask& mask,
                            const DissolutionConfig& cfg);

// Attention restricted to background keys for every query row: object-key
// columns are excluded from the softmax entirely.
Matd bpa_attention(const Matd& q, const Matd& k_inj, const Matd& v_inj,
                   const TokenMask& mask, int key_dim);

struct PadResult {
  Matd output;
  DissolvedSet sets;
};

// Dissolved self-attention output: softmax(pad_dissolve(S)) V.
PadResult pad_attention(const Matd& q, const Matd& k_inj, const Matd& v_inj,
                        const TokenMask& mask, const DissolutionConfig& cfg,
                        int key_dim);

// Row-level blend: object tokens take the dissolved output, background
// tokens take the background-preserved output, bit-exactly.
Matd blend_outputs(const Matd& object_out, const Matd& background_out,
                   const TokenMask& mask);

// Full per-layer computation on one injected packet.
PadResult pandora_attention(const AttentionPacket& current,
                            const AttentionPacket& injected,
                            const TokenMask& mask,
                            const DissolutionConfig& cfg);

// Reports (layer_id, dissolved entry count, k) each time dissolution ran.
using DissolutionSink = std::function<void(int, int, int)>;

// Binds the injected packet and token mask of one layer into a processor:
// inside the active window it blends PAD and BPA outputs, outside it
// computes vanilla attention on the current branch's own packet.
AttentionProcessor pandora_processor(const DissolutionConfig& cfg,
                                     AttentionPacket injected, TokenMask mask,
                                     DissolutionSink sink = nullptr);

}  // namespace pandora
