#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "gptrans/autodiff.hpp"
#include "gptrans/errors.hpp"
#include "gptrans/tensor.hpp"

namespace gptrans::ops {

namespace detail {

// Odometer over `shape`, handing out the flat offsets into two broadcast operands.
template <class Fn>
void for_each_broadcast(const Shape& shape, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, Fn&& fn) {
  const std::size_t rank = shape.size();
  const std::size_t total = numel(shape);
  if (total == 0) return;
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < total; ++i) {
    fn(i, ia, ib);
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      ia += sa[ax];
      ib += sb[ax];
      if (idx[ax] < shape[ax]) break;
      ia -= sa[ax] * shape[ax];
      ib -= sb[ax] * shape[ax];
      idx[ax] = 0;
    }
  }
}

// C[m,p] += A[m,k] B[k,p]
template <class T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t p, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * p;
    const T* arow = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      const T* brow = b + kk * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,p] += A[m,k] B[p,k]^T
template <class T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t p, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < p; ++j) {
      const T* brow = b + j * k;
      T acc{0};
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      c[i * p + j] += acc;
    }
  }
}

// C[r,s] += A[m,r]^T B[m,s]
template <class T>
void gemm_tn(std::size_t m, std::size_t r, std::size_t s, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * r;
    const T* brow = b + i * s;
    for (std::size_t kk = 0; kk < r; ++kk) {
      const T av = arow[kk];
      T* crow = c + kk * s;
      for (std::size_t j = 0; j < s; ++j) crow[j] += av * brow[j];
    }
  }
}

inline void check_axis(std::size_t axis, std::size_t rank) {
  if (axis >= rank) throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
}

// Splits `shape` around `axis` into outer * n * inner.
inline void split_axis(const Shape& shape, std::size_t axis, std::size_t& outer, std::size_t& n,
                       std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise (broadcasting)
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Shape out = broadcast_shape(a.shape(), b.shape());
  std::vector<T> v(numel(out));
  auto av = a.value();
  auto bv = b.value();
  if (a.shape() == out && b.shape() == out) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
  } else {
    auto sa = broadcast_strides(a.shape(), out.size());
    auto sb = broadcast_strides(b.shape(), out.size());
    detail::for_each_broadcast(out, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      v[i] = av[ia] + bv[ib];
    });
  }
  Node<T>* na = &a.node();
  Node<T>* nb = &b.node();
  return a.tape().record(out, std::move(v), {a, b}, [na, nb](Node<T>& o) {
    const Shape& out = o.shape;
    auto sa = broadcast_strides(na->shape, out.size());
    auto sb = broadcast_strides(nb->shape, out.size());
    if (na->requires_grad) {
      auto ga = na->g();
      if (na->shape == out)
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
      else
        detail::for_each_broadcast(out, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t) { ga[ia] += o.grad[i]; });
    }
    if (nb->requires_grad) {
      auto gb = nb->g();
      if (nb->shape == out)
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[i];
      else
        detail::for_each_broadcast(out, sa, sb, [&](std::size_t i, std::size_t, std::size_t ib) { gb[ib] += o.grad[i]; });
    }
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Shape out = broadcast_shape(a.shape(), b.shape());
  std::vector<T> v(numel(out));
  auto av = a.value();
  auto bv = b.value();
  auto sa = broadcast_strides(a.shape(), out.size());
  auto sb = broadcast_strides(b.shape(), out.size());
  detail::for_each_broadcast(out, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) { v[i] = av[ia] - bv[ib]; });
  Node<T>* na = &a.node();
  Node<T>* nb = &b.node();
  return a.tape().record(out, std::move(v), {a, b}, [na, nb, sa, sb](Node<T>& o) {
    if (na->requires_grad) {
      auto ga = na->g();
      detail::for_each_broadcast(o.shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t) { ga[ia] += o.grad[i]; });
    }
    if (nb->requires_grad) {
      auto gb = nb->g();
      detail::for_each_broadcast(o.shape, sa, sb, [&](std::size_t i, std::size_t, std::size_t ib) { gb[ib] -= o.grad[i]; });
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Shape out = broadcast_shape(a.shape(), b.shape());
  std::vector<T> v(numel(out));
  auto av = a.value();
  auto bv = b.value();
  const bool same = a.shape() == out && b.shape() == out;
  if (same) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
  } else {
    auto sa = broadcast_strides(a.shape(), out.size());
    auto sb = broadcast_strides(b.shape(), out.size());
    detail::for_each_broadcast(out, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      v[i] = av[ia] * bv[ib];
    });
  }
  Node<T>* na = &a.node();
  Node<T>* nb = &b.node();
  return a.tape().record(out, std::move(v), {a, b}, [na, nb, same](Node<T>& o) {
    auto av = na->val();
    auto bv = nb->val();
    if (same) {
      if (na->requires_grad) {
        auto ga = na->g();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * bv[i];
      }
      if (nb->requires_grad) {
        auto gb = nb->g();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[i] * av[i];
      }
      return;
    }
    auto sa = broadcast_strides(na->shape, o.shape.size());
    auto sb = broadcast_strides(nb->shape, o.shape.size());
    if (na->requires_grad) {
      auto ga = na->g();
      detail::for_each_broadcast(o.shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        ga[ia] += o.grad[i] * bv[ib];
      });
    }
    if (nb->requires_grad) {
      auto gb = nb->g();
      detail::for_each_broadcast(o.shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        gb[ib] += o.grad[i] * av[ia];
      });
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T c) {
  auto av = a.value();
  std::vector<T> v(av.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * c;
  Node<T>* na = &a.node();
  return a.tape().record(a.shape(), std::move(v), {a}, [na, c](Node<T>& o) {
    auto ga = na->g();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * c;
  });
}

/// Multiplies by a constant (non-differentiable) tensor, e.g. a mask or dropout keep-mask.
template <class T>
Var<T> mul_const(const Var<T>& a, const Tensor<T>& c) {
  return mul(a, a.tape().constant(c));
}

template <class T>
Var<T> gelu(const Var<T>& x) {
  auto xv = x.value();
  std::vector<T> v(xv.size());
  const T inv_sqrt2 = T{1} / std::sqrt(T{2});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = T{0.5} * xv[i] * (T{1} + std::erf(xv[i] * inv_sqrt2));
  Node<T>* nx = &x.node();
  return x.tape().record(x.shape(), std::move(v), {x}, [nx, inv_sqrt2](Node<T>& o) {
    auto xv = nx->val();
    auto gx = nx->g();
    const T inv_sqrt2pi = T{1} / std::sqrt(T{2} * std::numbers::pi_v<T>);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T z = xv[i];
      const T cdf = T{0.5} * (T{1} + std::erf(z * inv_sqrt2));
      const T pdf = std::exp(T{-0.5} * z * z) * inv_sqrt2pi;
      gx[i] += o.grad[i] * (cdf + z * pdf);
    }
  });
}

/// Replaces entries where mask==0 with `fill`; gradient flows only through kept entries.
template <class T>
Var<T> masked_fill(const Var<T>& x, const MaskTensor& mask, T fill) {
  Shape out = broadcast_shape(x.shape(), mask.shape());
  if (out != x.shape()) throw ShapeError("masked_fill mask must broadcast to input");
  auto xv = x.value();
  std::vector<T> v(xv.size());
  auto sx = broadcast_strides(x.shape(), out.size());
  auto sm = broadcast_strides(mask.shape(), out.size());
  std::vector<std::uint8_t> keep(v.size());
  detail::for_each_broadcast(out, sx, sm, [&](std::size_t i, std::size_t, std::size_t im) {
    keep[i] = mask[im] != 0;
    v[i] = keep[i] ? xv[i] : fill;
  });
  Node<T>* nx = &x.node();
  return x.tape().record(out, std::move(v), {x}, [nx, keep = std::move(keep)](Node<T>& o) {
    auto gx = nx->g();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (keep[i]) gx[i] += o.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  if (numel(shape) != x.size()) throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  auto xv = x.value();
  std::vector<T> v(xv.begin(), xv.end());
  Node<T>* nx = &x.node();
  return x.tape().record(std::move(shape), std::move(v), {x}, [nx](Node<T>& o) {
    auto gx = nx->g();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
  });
}

template <class T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm) {
  const Shape& in = x.shape();
  const std::size_t rank = in.size();
  if (perm.size() != rank) throw ShapeError("permute rank mismatch");
  Shape out(rank);
  std::vector<std::size_t> in_strides(rank);
  {
    std::size_t acc = 1;
    for (std::size_t i = rank; i-- > 0;) {
      in_strides[i] = acc;
      acc *= in[i];
    }
  }
  std::vector<std::size_t> src_strides(rank);  // stride in the input for each output axis
  std::vector<bool> seen(rank, false);
  for (std::size_t i = 0; i < rank; ++i) {
    if (perm[i] >= rank || seen[perm[i]]) throw ShapeError("invalid permutation");
    seen[perm[i]] = true;
    out[i] = in[perm[i]];
    src_strides[i] = in_strides[perm[i]];
  }
  std::vector<std::size_t> zero(rank, 0);
  auto xv = x.value();
  std::vector<T> v(xv.size());
  detail::for_each_broadcast(out, src_strides, zero, [&](std::size_t i, std::size_t is, std::size_t) { v[i] = xv[is]; });
  Node<T>* nx = &x.node();
  return x.tape().record(out, std::move(v), {x}, [nx, src_strides, zero](Node<T>& o) {
    auto gx = nx->g();
    detail::for_each_broadcast(o.shape, src_strides, zero, [&](std::size_t i, std::size_t is, std::size_t) { gx[is] += o.grad[i]; });
  });
}

/// Picks index `index` along `axis`, removing that axis.
template <class T>
Var<T> select(const Var<T>& x, std::size_t axis, std::size_t index) {
  detail::check_axis(axis, x.rank());
  if (index >= x.dim(axis)) throw ShapeError("select index out of range");
  std::size_t outer, n, inner;
  detail::split_axis(x.shape(), axis, outer, n, inner);
  Shape out = x.shape();
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  auto xv = x.value();
  std::vector<T> v(outer * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) v[o * inner + i] = xv[(o * n + index) * inner + i];
  Node<T>* nx = &x.node();
  return x.tape().record(out, std::move(v), {x}, [nx, outer, n, inner, index](Node<T>& o) {
    auto gx = nx->g();
    for (std::size_t a = 0; a < outer; ++a)
      for (std::size_t i = 0; i < inner; ++i) gx[(a * n + index) * inner + i] += o.grad[a * inner + i];
  });
}

/// Slice [start, start+len) along `axis`.
template <class T>
Var<T> narrow(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t len) {
  detail::check_axis(axis, x.rank());
  if (start + len > x.dim(axis)) throw ShapeError("narrow out of range");
  std::size_t outer, n, inner;
  detail::split_axis(x.shape(), axis, outer, n, inner);
  Shape out = x.shape();
  out[axis] = len;
  auto xv = x.value();
  std::vector<T> v(outer * len * inner);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * n + start) * inner), len * inner,
                v.begin() + static_cast<std::ptrdiff_t>(o * len * inner));
  Node<T>* nx = &x.node();
  return x.tape().record(out, std::move(v), {x}, [nx, outer, n, inner, start, len](Node<T>& o) {
    auto gx = nx->g();
    for (std::size_t a = 0; a < outer; ++a)
      for (std::size_t i = 0; i < len * inner; ++i) gx[(a * n + start) * inner + i] += o.grad[a * len * inner + i];
  });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

/// Sum over `axis`, removing it.
template <class T>
Var<T> sum(const Var<T>& x, std::size_t axis) {
  detail::check_axis(axis, x.rank());
  std::size_t outer, n, inner;
  detail::split_axis(x.shape(), axis, outer, n, inner);
  Shape out = x.shape();
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  auto xv = x.value();
  std::vector<T> v(outer * inner, T{0});
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < inner; ++i) v[o * inner + i] += xv[(o * n + j) * inner + i];
  Node<T>* nx = &x.node();
  return x.tape().record(out, std::move(v), {x}, [nx, outer, n, inner](Node<T>& o) {
    auto gx = nx->g();
    for (std::size_t a = 0; a < outer; ++a)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < inner; ++i) gx[(a * n + j) * inner + i] += o.grad[a * inner + i];
  });
}

template <class T>
Var<T> sum_all(const Var<T>& x) {
  auto xv = x.value();
  T s{0};
  for (T e : xv) s += e;
  Node<T>* nx = &x.node();
  return x.tape().record(Shape{}, std::vector<T>{s}, {x}, [nx](Node<T>& o) {
    auto gx = nx->g();
    for (auto& g : gx) g += o.grad[0];
  });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// Batched matrix product a[..., m, k] x b[..., k, p] (or b[..., p, k] when
/// `transpose_b`). Leading extents broadcast.
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_b = false) {
  if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul needs rank >= 2 operands");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as[as.size() - 1];
  const std::size_t bk = transpose_b ? bs[bs.size() - 1] : bs[bs.size() - 2];
  const std::size_t p = transpose_b ? bs[bs.size() - 2] : bs[bs.size() - 1];
  if (k != bk)
    throw ShapeError("matmul inner extents differ: " + shape_str(as) + " x " + shape_str(bs) +
                     (transpose_b ? "^T" : ""));

  Shape lead_a(as.begin(), as.end() - 2);
  Shape lead_b(bs.begin(), bs.end() - 2);

  // Shared 2-D right operand: fold every leading axis of `a` into rows.
  if (lead_b.empty()) {
    const std::size_t rows = numel(lead_a) * m;
    Shape out = lead_a;
    out.push_back(m);
    out.push_back(p);
    std::vector<T> v(rows * p, T{0});
    if (transpose_b)
      detail::gemm_nt(rows, k, p, a.value().data(), b.value().data(), v.data());
    else
      detail::gemm_nn(rows, k, p, a.value().data(), b.value().data(), v.data());
    Node<T>* na = &a.node();
    Node<T>* nb = &b.node();
    return a.tape().record(out, std::move(v), {a, b}, [na, nb, rows, k, p, transpose_b](Node<T>& o) {
      if (na->requires_grad) {
        if (transpose_b)
          detail::gemm_nn(rows, p, k, o.grad.data(), nb->val().data(), na->g().data());
        else
          detail::gemm_nt(rows, p, k, o.grad.data(), nb->val().data(), na->g().data());
      }
      if (nb->requires_grad) {
        if (transpose_b)
          detail::gemm_tn(rows, p, k, o.grad.data(), na->val().data(), nb->g().data());
        else
          detail::gemm_tn(rows, k, p, na->val().data(), o.grad.data(), nb->g().data());
      }
    });
  }

  Shape lead = broadcast_shape(lead_a, lead_b);
  auto sa = broadcast_strides(lead_a, lead.size());
  auto sb = broadcast_strides(lead_b, lead.size());
  const std::size_t a_mat = m * k;
  const std::size_t b_mat = k * p;
  const std::size_t c_mat = m * p;
  Shape out = lead;
  out.push_back(m);
  out.push_back(p);
  std::vector<T> v(numel(out), T{0});
  {
    const T* ap = a.value().data();
    const T* bp = b.value().data();
    detail::for_each_broadcast(lead, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      if (transpose_b)
        detail::gemm_nt(m, k, p, ap + ia * a_mat, bp + ib * b_mat, v.data() + i * c_mat);
      else
        detail::gemm_nn(m, k, p, ap + ia * a_mat, bp + ib * b_mat, v.data() + i * c_mat);
    });
  }
  Node<T>* na = &a.node();
  Node<T>* nb = &b.node();
  return a.tape().record(out, std::move(v), {a, b},
                         [na, nb, lead, sa, sb, m, k, p, a_mat, b_mat, c_mat, transpose_b](Node<T>& o) {
    const T* ap = na->val().data();
    const T* bp = nb->val().data();
    T* ga = na->requires_grad ? na->g().data() : nullptr;
    T* gb = nb->requires_grad ? nb->g().data() : nullptr;
    detail::for_each_broadcast(lead, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      const T* g = o.grad.data() + i * c_mat;
      if (ga) {
        if (transpose_b)
          detail::gemm_nn(m, p, k, g, bp + ib * b_mat, ga + ia * a_mat);
        else
          detail::gemm_nt(m, p, k, g, bp + ib * b_mat, ga + ia * a_mat);
      }
      if (gb) {
        if (transpose_b)
          detail::gemm_tn(m, p, k, g, ap + ia * a_mat, gb + ib * b_mat);
        else
          detail::gemm_tn(m, k, p, ap + ia * a_mat, g, gb + ib * b_mat);
      }
    });
  });
}

/// x W + bias over the last axis.
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  return add(matmul(x, weight), bias);
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Softmax along `axis`. Entries where `mask` is 0 get weight exactly 0; rows
/// with no unmasked entry are all zero. `mask` broadcasts to x (nullptr = none).
template <class T>
Var<T> softmax(const Var<T>& x, std::size_t axis, const MaskTensor* mask = nullptr) {
  detail::check_axis(axis, x.rank());
  std::size_t outer, n, inner;
  detail::split_axis(x.shape(), axis, outer, n, inner);
  auto xv = x.value();
  std::vector<T> y(xv.size(), T{0});

  std::vector<std::uint8_t> keep;
  if (mask) {
    if (broadcast_shape(x.shape(), mask->shape()) != x.shape())
      throw ShapeError("softmax mask " + shape_str(mask->shape()) + " does not broadcast to " + shape_str(x.shape()));
    keep.resize(xv.size());
    auto sm = broadcast_strides(mask->shape(), x.rank());
    std::vector<std::size_t> zero(x.rank(), 0);
    detail::for_each_broadcast(x.shape(), sm, zero, [&](std::size_t i, std::size_t im, std::size_t) {
      keep[i] = (*mask)[im] != 0;
    });
  }

  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      bool any = false;
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t idx = base + j * inner;
        if (!keep.empty() && !keep[idx]) continue;
        any = true;
        mx = std::max(mx, xv[idx]);
      }
      if (!any) continue;
      T denom{0};
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t idx = base + j * inner;
        if (!keep.empty() && !keep[idx]) continue;
        y[idx] = std::exp(xv[idx] - mx);
        denom += y[idx];
      }
      for (std::size_t j = 0; j < n; ++j) y[base + j * inner] /= denom;
    }
  }
  Node<T>* nx = &x.node();
  return x.tape().record(x.shape(), std::move(y), {x}, [nx, outer, n, inner](Node<T>& o) {
    auto gx = nx->g();
    const auto& yv = o.value;
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = a * n * inner + in;
        T dot{0};
        for (std::size_t j = 0; j < n; ++j) dot += o.grad[base + j * inner] * yv[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = base + j * inner;
          gx[idx] += yv[idx] * (o.grad[idx] - dot);
        }
      }
    }
  });
}

/// Layer normalization over the last axis followed by an affine map.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T{1e-5}) {
  const std::size_t d = x.shape().back();
  if (gain.size() != d || bias.size() != d)
    throw ShapeError("layer_norm affine size does not match last extent " + std::to_string(d));
  const std::size_t rows = x.size() / d;
  auto xv = x.value();
  auto gv = gain.value();
  auto bv = bias.value();
  std::vector<T> y(xv.size());
  std::vector<T> xhat(xv.size());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * d;
    T mean{0};
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<T>(d);
    T var{0};
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<T>(d);
    rstd[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      xhat[r * d + i] = (xr[i] - mean) * rstd[r];
      y[r * d + i] = xhat[r * d + i] * gv[i] + bv[i];
    }
  }
  Node<T>* nx = &x.node();
  Node<T>* ng = &gain.node();
  Node<T>* nb = &bias.node();
  return x.tape().record(x.shape(), std::move(y), {x, gain, bias},
                         [nx, ng, nb, d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& o) {
    auto gv = ng->val();
    T* gg = ng->requires_grad ? ng->g().data() : nullptr;
    T* gb = nb->requires_grad ? nb->g().data() : nullptr;
    T* gx = nx->requires_grad ? nx->g().data() : nullptr;
    std::vector<T> dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* go = o.grad.data() + r * d;
      const T* xh = xhat.data() + r * d;
      if (gg)
        for (std::size_t i = 0; i < d; ++i) gg[i] += go[i] * xh[i];
      if (gb)
        for (std::size_t i = 0; i < d; ++i) gb[i] += go[i];
      if (!gx) continue;
      T mean_dxhat{0}, mean_dxhat_xhat{0};
      for (std::size_t i = 0; i < d; ++i) {
        dxhat[i] = go[i] * gv[i];
        mean_dxhat += dxhat[i];
        mean_dxhat_xhat += dxhat[i] * xh[i];
      }
      mean_dxhat /= static_cast<T>(d);
      mean_dxhat_xhat /= static_cast<T>(d);
      for (std::size_t i = 0; i < d; ++i)
        gx[r * d + i] += rstd[r] * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
    }
  });
}

// ---------------------------------------------------------------------------
// Lookup
// ---------------------------------------------------------------------------

/// Row lookup: output shape is ids.shape + [d]. Negative ids produce zero rows.
template <class T>
Var<T> embed(const Var<T>& table, const IdTensor& ids) {
  if (table.rank() != 2) throw ShapeError("embedding table must be rank 2");
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  for (std::int32_t id : ids.data())
    if (id >= 0 && static_cast<std::size_t>(id) >= vocab)
      throw VocabularyError("id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(vocab));
  Shape out = ids.shape();
  out.push_back(d);
  auto tv = table.value();
  std::vector<T> v(ids.size() * d, T{0});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0) continue;
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i]) * static_cast<std::ptrdiff_t>(d), d,
                v.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  Node<T>* nt = &table.node();
  return table.tape().record(out, std::move(v), {table}, [nt, ids, d](Node<T>& o) {
    auto gt = nt->g();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0) continue;
      T* row = gt.data() + static_cast<std::size_t>(ids[i]) * d;
      for (std::size_t c = 0; c < d; ++c) row[c] += o.grad[i * d + c];
    }
  });
}

// ---------------------------------------------------------------------------
// Losses (return sums over unmasked positions; callers normalize)
// ---------------------------------------------------------------------------

/// Σ mask · |pred − target|.
template <class T>
Var<T> abs_error_sum(const Var<T>& pred, const Tensor<T>& target, const MaskTensor& mask) {
  if (pred.size() != target.size() || pred.size() != mask.size())
    throw ShapeError("abs_error_sum size mismatch");
  auto pv = pred.value();
  T s{0};
  for (std::size_t i = 0; i < pv.size(); ++i)
    if (mask[i]) s += std::abs(pv[i] - target[i]);
  Node<T>* np = &pred.node();
  return pred.tape().record(Shape{}, std::vector<T>{s}, {pred}, [np, target, mask](Node<T>& o) {
    auto pv = np->val();
    auto gp = np->g();
    for (std::size_t i = 0; i < gp.size(); ++i) {
      if (!mask[i]) continue;
      const T diff = pv[i] - target[i];
      const T sign = diff > T{0} ? T{1} : (diff < T{0} ? T{-1} : T{0});
      gp[i] += o.grad[0] * sign;
    }
  });
}

/// Σ over unmasked positions of −log softmax(logits)[label]; logits [..., k], labels [...].
template <class T>
Var<T> cross_entropy_sum(const Var<T>& logits, const IdTensor& labels, const MaskTensor& mask) {
  const std::size_t k = logits.shape().back();
  const std::size_t rows = logits.size() / k;
  if (labels.size() != rows || mask.size() != rows) throw ShapeError("cross_entropy_sum size mismatch");
  auto lv = logits.value();
  std::vector<T> prob(lv.size(), T{0});
  T s{0};
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k)
      throw VocabularyError("class label " + std::to_string(labels[r]) + " outside [0," + std::to_string(k) + ")");
    const T* row = lv.data() + r * k;
    T mx = *std::max_element(row, row + k);
    T denom{0};
    for (std::size_t c = 0; c < k; ++c) denom += std::exp(row[c] - mx);
    const T lse = mx + std::log(denom);
    for (std::size_t c = 0; c < k; ++c) prob[r * k + c] = std::exp(row[c] - lse);
    s += lse - row[labels[r]];
  }
  Node<T>* nl = &logits.node();
  return logits.tape().record(Shape{}, std::vector<T>{s}, {logits},
                              [nl, labels, mask, k, rows, prob = std::move(prob)](Node<T>& o) {
    auto gl = nl->g();
    for (std::size_t r = 0; r < rows; ++r) {
      if (!mask[r]) continue;
      for (std::size_t c = 0; c < k; ++c) {
        const T onehot = static_cast<std::size_t>(labels[r]) == c ? T{1} : T{0};
        gl[r * k + c] += o.grad[0] * (prob[r * k + c] - onehot);
      }
    }
  });
}

/// Σ over unmasked positions of the logistic loss of a single logit per position.
template <class T>
Var<T> bce_logits_sum(const Var<T>& logits, const IdTensor& labels, const MaskTensor& mask) {
  if (logits.size() != labels.size() || mask.size() != labels.size()) throw ShapeError("bce_logits_sum size mismatch");
  auto lv = logits.value();
  T s{0};
  for (std::size_t i = 0; i < lv.size(); ++i) {
    if (!mask[i]) continue;
    const T z = lv[i];
    const T y = labels[i] ? T{1} : T{0};
    // log(1 + exp(z)) - y z, stable form
    s += std::max(z, T{0}) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  Node<T>* nl = &logits.node();
  return logits.tape().record(Shape{}, std::vector<T>{s}, {logits}, [nl, labels, mask](Node<T>& o) {
    auto lv = nl->val();
    auto gl = nl->g();
    for (std::size_t i = 0; i < gl.size(); ++i) {
      if (!mask[i]) continue;
      const T sig = T{1} / (T{1} + std::exp(-lv[i]));
      gl[i] += o.grad[0] * (sig - (labels[i] ? T{1} : T{0}));
    }
  });
}

}  // namespace gptrans::ops
