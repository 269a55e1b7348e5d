#include "pandora/attnctl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pandora/errors.hpp"
#include "pandora/ndkernel.hpp"

namespace pandora {

namespace {

void check_percentile(double p) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw Error("percentile must lie in [0, 1), got " + std::to_string(p));
  }
}

bool layer_enabled(const DissolutionConfig& cfg, int layer_id) {
  if (!cfg.layer_filter) return true;
  const auto& f = *cfg.layer_filter;
  return std::find(f.begin(), f.end(), layer_id) != f.end();
}

}  // namespace

Matd vanilla_attention(const AttentionPacket& packet) {
  return matmul(softmax_rows(attention_logits(packet.q, packet.k, packet.key_dim)),
                packet.v);
}

int DissolvedSet::total() const {
  int n = 0;
  for (const auto& [row, indices] : rows) n += int(indices.size());
  return n;
}

int dissolution_k(double percentile, int keys) {
  check_percentile(percentile);
  return int(std::ceil(percentile * keys));
}

Matd attention_logits(const Matd& q, const Matd& k, int key_dim) {
  if (key_dim <= 0 || q.cols() != key_dim || k.cols() != key_dim) {
    throw DimensionError("attention_logits: Q/K key dimension mismatch");
  }
  Matd s = q * k.transpose();
  return scale(s, 1.0 / std::sqrt(double(key_dim)));
}

namespace detail {
std::vector<int> topk_indices_tie(const Eigen::Ref<const Vecd>& row, int k,
                                  bool tie_low) {
  const int n = int(row.size());
  if (k < 0 || k > n) throw Error("topk_indices: k out of range");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                    [&](int a, int b) {
                      if (row[a] != row[b]) return row[a] > row[b];
                      return tie_low ? a < b : a > b;
                    });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}
}  // namespace detail

std::vector<int> topk_indices(const Eigen::Ref<const Vecd>& row, int k) {
  return detail::topk_indices_tie(row, k, true);
}

DissolveResult pad_dissolve(const Matd& s, const TokenMask& mask,
                            const DissolutionConfig& cfg) {
  check_percentile(cfg.percentile);
  const int n = mask.tokens();
  if (s.rows() != n || s.cols() != n) {
    throw DimensionError("pad_dissolve: logits must be square over the token grid");
  }

  DissolveResult res;
  res.logits = s;
  const int k = dissolution_k(cfg.percentile, n);

  for (int i : mask.object_indices) {
    const Vecd weights = softmax_row(s.row(i).transpose());
    const std::vector<int> top = topk_indices(weights, k);

    std::vector<int> dissolved;
    dissolved.reserve(top.size() + mask.object_indices.size());
    std::set_union(top.begin(), top.end(), mask.object_indices.begin(),
                   mask.object_indices.end(), std::back_inserter(dissolved));
    if (int(dissolved.size()) == n) throw AllKeysDissolvedError(i);

    for (int j : dissolved) res.logits(i, j) = kExcluded;
    res.sets.rows.emplace(i, std::move(dissolved));
  }
  return res;
}

Matd bpa_attention(const Matd& q, const Matd& k_inj, const Matd& v_inj,
                   const TokenMask& mask, int key_dim) {
  if (mask.background_indices.empty()) {
    throw NoBackgroundKeysError("bpa_attention: token mask has no background keys");
  }
  if (k_inj.rows() != mask.tokens()) {
    throw DimensionError("bpa_attention: key count does not match token mask");
  }
  Matd logits = attention_logits(q, k_inj, key_dim);
  for (int j : mask.object_indices) {
    logits.col(j).setConstant(kExcluded);
  }
  return matmul(softmax_rows(logits), v_inj);
}

PadResult pad_attention(const Matd& q, const Matd& k_inj, const Matd& v_inj,
                        const TokenMask& mask, const DissolutionConfig& cfg,
                        int key_dim) {
  if (k_inj.rows() != mask.tokens()) {
    throw DimensionError("pad_attention: key count does not match token mask");
  }
  DissolveResult d = pad_dissolve(attention_logits(q, k_inj, key_dim), mask, cfg);
  PadResult res;
  res.output = matmul(softmax_rows(d.logits), v_inj);
  res.sets = std::move(d.sets);
  return res;
}

Matd blend_outputs(const Matd& object_out, const Matd& background_out,
                   const TokenMask& mask) {
  if (object_out.rows() != background_out.rows() ||
      object_out.cols() != background_out.cols() ||
      object_out.rows() != mask.tokens()) {
    throw DimensionError("blend_outputs: shape mismatch");
  }
  Matd out(object_out.rows(), object_out.cols());
  for (int i = 0; i < mask.tokens(); ++i) {
    out.row(i) = mask.is_object(i) ? object_out.row(i) : background_out.row(i);
  }
  return out;
}

PadResult pandora_attention(const AttentionPacket& current,
                            const AttentionPacket& injected,
                            const TokenMask& mask,
                            const DissolutionConfig& cfg) {
  PadResult pad = pad_attention(current.q, injected.k, injected.v, mask, cfg,
                                current.key_dim);
  const Matd sc_bg = bpa_attention(current.q, injected.k, injected.v, mask,
                                   current.key_dim);
  pad.output = blend_outputs(pad.output, sc_bg, mask);
  return pad;
}

AttentionProcessor pandora_processor(const DissolutionConfig& cfg,
                                     AttentionPacket injected, TokenMask mask,
                                     DissolutionSink sink) {
  return [cfg, injected = std::move(injected), mask = std::move(mask),
          sink = std::move(sink)](const AttentionPacket& cur) -> Matd {
    const bool active = cur.step >= cfg.window_start &&
                        cur.step <= cfg.window_end &&
                        layer_enabled(cfg, cur.layer_id);
    if (!active) return vanilla_attention(cur);
    if (cur.layer_id != injected.layer_id) {
      throw Error("no injected packet for layer " + std::to_string(cur.layer_id));
    }
    PadResult r = pandora_attention(cur, injected, mask, cfg);
    if (sink) sink(cur.layer_id, r.sets.total(), dissolution_k(cfg.percentile, mask.tokens()));
    return r.output;
  };
}

}  // namespace pandora
