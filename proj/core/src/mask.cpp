#include "dptr/mask.hpp"

#include <numeric>

namespace dptr {

AttentionMask causal_mask(int t) {
  require(t >= 1, "mask needs t >= 1");
  const int n = t + 1;
  AttentionMask m;
  m.kind = MaskKind::causal;
  m.visibility = BoolMat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) m.visibility(i, j) = 1;
  return m;
}

AttentionMask cloze_mask(int t) {
  require(t >= 1, "mask needs t >= 1");
  const int n = t + 1;
  AttentionMask m;
  m.kind = MaskKind::cloze;
  m.visibility = BoolMat::Ones(n, n);
  for (int i = 0; i < n; ++i) m.visibility(i, i) = 0;
  return m;
}

AttentionMask perm_mask_from_order(const std::vector<int>& order) {
  const int n = static_cast<int>(order.size());
  require(n >= 2 && order[0] == 0, "order must start at position 0");
  std::vector<int> rank(static_cast<size_t>(n), -1);
  for (int r = 0; r < n; ++r) {
    const int pos = order[static_cast<size_t>(r)];
    require(pos >= 0 && pos < n && rank[static_cast<size_t>(pos)] == -1, "not a permutation");
    rank[static_cast<size_t>(pos)] = r;
  }
  AttentionMask m;
  m.kind = MaskKind::perm;
  m.visibility = BoolMat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      m.visibility(i, j) = rank[static_cast<size_t>(j)] <= rank[static_cast<size_t>(i)] ? 1 : 0;
  return m;
}

std::vector<AttentionMask> build_mask(MaskKind kind, int t, int k, Rng& rng) {
  require(t >= 1, "mask needs t >= 1");
  switch (kind) {
    case MaskKind::causal:
      return {causal_mask(t)};
    case MaskKind::cloze:
      return {cloze_mask(t)};
    case MaskKind::perm: {
      require(k >= 1, "perm masks need k >= 1");
      std::vector<AttentionMask> masks;
      masks.reserve(static_cast<size_t>(k));
      std::vector<int> order(static_cast<size_t>(t + 1));
      std::iota(order.begin(), order.end(), 0);
      masks.push_back(perm_mask_from_order(order));  // identity == causal
      for (int i = 1; i < k; ++i) {
        std::vector<int> tail(order.begin() + 1, order.end());
        rng.shuffle(tail);
        std::vector<int> o(1, 0);
        o.insert(o.end(), tail.begin(), tail.end());
        masks.push_back(perm_mask_from_order(o));
      }
      return masks;
    }
  }
  fail("unknown mask kind");
}

}  // namespace dptr
