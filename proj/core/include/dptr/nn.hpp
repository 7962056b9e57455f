#pragma once

#include "dptr/autodiff.hpp"
#include "dptr/common.hpp"
#include "dptr/rng.hpp"

#include <string>

namespace dptr {

// Parameter leaf that respects freezing: a frozen leaf still participates in
// the forward pass but records no gradient.
template <typename S>
typename Tape<S>::Ref leaf(Tape<S>& t, int idx, bool frozen) {
  return frozen ? t.frozen_param(idx) : t.param(idx);
}

template <typename S>
struct LinearIdx {
  int w = -1;
  int b = -1;

  void init(ParamStore<S>& ps, const std::string& name, int in, int out, Rng& rng) {
    w = ps.add(name + ".w", xavier<S>(in, out, rng));
    b = ps.add(name + ".b", Matrix<S>::Zero(1, out));
  }

  typename Tape<S>::Ref apply(Tape<S>& t, typename Tape<S>::Ref x, bool frozen) const {
    return t.linear(x, leaf(t, w, frozen), leaf(t, b, frozen));
  }
};

template <typename S>
struct LayerNormIdx {
  int g = -1;
  int b = -1;

  void init(ParamStore<S>& ps, const std::string& name, int d) {
    g = ps.add(name + ".g", Matrix<S>::Ones(1, d));
    b = ps.add(name + ".b", Matrix<S>::Zero(1, d));
  }

  typename Tape<S>::Ref apply(Tape<S>& t, typename Tape<S>::Ref x, bool frozen) const {
    return t.layer_norm(x, leaf(t, g, frozen), leaf(t, b, frozen));
  }
};

// Pre-LN self-attention block: x += O(attn(LN1(x))); x += FFN(LN2(x)).
template <typename S>
struct EncoderBlock {
  LayerNormIdx<S> ln1, ln2;
  LinearIdx<S> q, k, v, o, f1, f2;
  int heads = 4;

  void init(ParamStore<S>& ps, const std::string& prefix, int d, int n_heads, int ffn_mult,
            Rng& rng) {
    heads = n_heads;
    ln1.init(ps, prefix + ".ln1", d);
    q.init(ps, prefix + ".q", d, d, rng);
    k.init(ps, prefix + ".k", d, d, rng);
    v.init(ps, prefix + ".v", d, d, rng);
    o.init(ps, prefix + ".o", d, d, rng);
    ln2.init(ps, prefix + ".ln2", d);
    f1.init(ps, prefix + ".f1", d, d * ffn_mult, rng);
    f2.init(ps, prefix + ".f2", d * ffn_mult, d, rng);
  }

  typename Tape<S>::Ref apply(Tape<S>& t, typename Tape<S>::Ref x, bool frozen) const {
    auto xn = ln1.apply(t, x, frozen);
    auto attn = t.attention(q.apply(t, xn, frozen), k.apply(t, xn, frozen),
                            v.apply(t, xn, frozen), heads, BoolMat{});
    x = t.add(x, o.apply(t, attn, frozen));
    auto fn = ln2.apply(t, x, frozen);
    x = t.add(x, f2.apply(t, t.gelu(f1.apply(t, fn, frozen)), frozen));
    return x;
  }
};

}  // namespace dptr
