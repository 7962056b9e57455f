#pragma once

#include "dptr/common.hpp"
#include "dptr/rng.hpp"

#include <vector>

namespace dptr {

enum class MaskKind { causal, cloze, perm };

// (T+1) x (T+1) visibility over decoder positions 0..T (position 0 is [BOS]).
// causal: lower triangle including the diagonal.
// cloze:  everything except self.
// perm:   rank(j) <= rank(i) for a total order that always places [BOS]
//         first; the identity order reproduces the causal mask.
struct AttentionMask {
  BoolMat visibility;
  MaskKind kind = MaskKind::causal;

  int size() const { return static_cast<int>(visibility.rows()); }
};

AttentionMask causal_mask(int t);
AttentionMask cloze_mask(int t);

// order[i] = position occupying rank i; order[0] must be 0.
AttentionMask perm_mask_from_order(const std::vector<int>& order);

// causal/cloze return a single mask. perm returns k masks whose first entry
// is the identity order (== causal) and the rest uniformly sampled
// permutations of positions 1..T.
std::vector<AttentionMask> build_mask(MaskKind kind, int t, int k, Rng& rng);

}  // namespace dptr
