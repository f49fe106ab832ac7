#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "osha/nn/tensor.hpp"

namespace osha::nn {

// Reverse-mode autodiff tape over Mat values. A graph is built per sample,
// evaluated eagerly, and walked backward once. Variables are indices.
class Graph {
 public:
  using Var = int;

  Var input(Mat v, bool needs_grad = false) {
    return push(std::move(v), needs_grad, {});
  }

  const Mat& val(Var v) const { return nodes_[v].val; }
  const Mat& grad(Var v) const { return nodes_[v].grad; }
  Mat& grad(Var v) { return nodes_[v].grad; }

  // ---- elementwise / shape ----

  Var add(Var a, Var b) {
    const Mat &A = val(a), &B = val(b);
    if (!A.same_shape(B)) throw std::invalid_argument("add: shape mismatch");
    Mat out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.a[i] += B.a[i];
    return push(std::move(out), any_grad({a, b}), [this, a, b](const Node& n) {
      axpy(a, 1.0, n.grad);
      axpy(b, 1.0, n.grad);
    });
  }

  Var scale(Var a, double s) {
    Mat out = val(a);
    for (auto& x : out.a) x *= s;
    return push(std::move(out), any_grad({a}), [this, a, s](const Node& n) {
      axpy(a, s, n.grad);
    });
  }

  // broadcast-add a 1xC bias row to every row
  Var add_rowvec(Var a, Var b) {
    const Mat &A = val(a), &B = val(b);
    if (B.r != 1 || B.c != A.c) throw std::invalid_argument("add_rowvec: bad bias");
    Mat out = A;
    for (int i = 0; i < A.r; ++i)
      for (int j = 0; j < A.c; ++j) out.at(i, j) += B.at(0, j);
    return push(std::move(out), any_grad({a, b}), [this, a, b](const Node& n) {
      axpy(a, 1.0, n.grad);
      if (nodes_[b].needs_grad) {
        Mat& gb = nodes_[b].grad;
        for (int i = 0; i < n.grad.r; ++i)
          for (int j = 0; j < n.grad.c; ++j) gb.at(0, j) += n.grad.at(i, j);
      }
    });
  }

  Var transpose(Var a) {
    const Mat& A = val(a);
    Mat out(A.c, A.r);
    for (int i = 0; i < A.r; ++i)
      for (int j = 0; j < A.c; ++j) out.at(j, i) = A.at(i, j);
    return push(std::move(out), any_grad({a}), [this, a](const Node& n) {
      if (!nodes_[a].needs_grad) return;
      Mat& ga = nodes_[a].grad;
      for (int i = 0; i < n.grad.r; ++i)
        for (int j = 0; j < n.grad.c; ++j) ga.at(j, i) += n.grad.at(i, j);
    });
  }

  Var reshape(Var a, int rows, int cols) {
    const Mat& A = val(a);
    if (static_cast<std::size_t>(rows) * cols != A.size())
      throw std::invalid_argument("reshape: size mismatch");
    Mat out(rows, cols);
    out.a = A.a;
    return push(std::move(out), any_grad({a}), [this, a](const Node& n) {
      if (!nodes_[a].needs_grad) return;
      Mat& ga = nodes_[a].grad;
      for (std::size_t i = 0; i < ga.size(); ++i) ga.a[i] += n.grad.a[i];
    });
  }

  Var slice_cols(Var a, int start, int len) {
    const Mat& A = val(a);
    if (start < 0 || start + len > A.c) throw std::out_of_range("slice_cols");
    Mat out(A.r, len);
    for (int i = 0; i < A.r; ++i)
      for (int j = 0; j < len; ++j) out.at(i, j) = A.at(i, start + j);
    return push(std::move(out), any_grad({a}), [this, a, start](const Node& n) {
      if (!nodes_[a].needs_grad) return;
      Mat& ga = nodes_[a].grad;
      for (int i = 0; i < n.grad.r; ++i)
        for (int j = 0; j < n.grad.c; ++j) ga.at(i, start + j) += n.grad.at(i, j);
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    const int rows = val(parts[0]).r;
    int cols = 0;
    for (Var p : parts) {
      if (val(p).r != rows) throw std::invalid_argument("concat_cols: row mismatch");
      cols += val(p).c;
    }
    Mat out(rows, cols);
    int off = 0;
    for (Var p : parts) {
      const Mat& P = val(p);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < P.c; ++j) out.at(i, off + j) = P.at(i, j);
      off += P.c;
    }
    bool ng = false;
    for (Var p : parts) ng |= nodes_[p].needs_grad;
    return push(std::move(out), ng, [this, parts](const Node& n) {
      int off = 0;
      for (Var p : parts) {
        Mat& gp = nodes_[p].grad;
        if (nodes_[p].needs_grad)
          for (int i = 0; i < gp.r; ++i)
            for (int j = 0; j < gp.c; ++j) gp.at(i, j) += n.grad.at(i, off + j);
        off += nodes_[p].val.c;
      }
    });
  }

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    const int cols = val(parts[0]).c;
    int rows = 0;
    for (Var p : parts) {
      if (val(p).c != cols) throw std::invalid_argument("concat_rows: col mismatch");
      rows += val(p).r;
    }
    Mat out(rows, cols);
    int off = 0;
    for (Var p : parts) {
      const Mat& P = val(p);
      std::copy(P.a.begin(), P.a.end(), out.a.begin() + static_cast<std::size_t>(off) * cols);
      off += P.r;
    }
    bool ng = false;
    for (Var p : parts) ng |= nodes_[p].needs_grad;
    return push(std::move(out), ng, [this, parts, cols](const Node& n) {
      int off = 0;
      for (Var p : parts) {
        Mat& gp = nodes_[p].grad;
        if (nodes_[p].needs_grad)
          for (std::size_t i = 0; i < gp.size(); ++i)
            gp.a[i] += n.grad.a[static_cast<std::size_t>(off) * cols + i];
        off += nodes_[p].val.r;
      }
    });
  }

  // ---- linear algebra ----

  Var matmul(Var a, Var b) {
    const Mat &A = val(a), &B = val(b);
    if (A.c != B.r) throw std::invalid_argument("matmul: inner dims differ");
    Mat out(A.r, B.c);
    matmul_into(A, B, out);
    return push(std::move(out), any_grad({a, b}), [this, a, b](const Node& n) {
      if (nodes_[a].needs_grad) matmul_a_bt_acc(n.grad, nodes_[b].val, nodes_[a].grad);
      if (nodes_[b].needs_grad) matmul_at_b_acc(nodes_[a].val, n.grad, nodes_[b].grad);
    });
  }

  // ---- nonlinearities ----

  Var relu(Var a) {
    Mat out = val(a);
    for (auto& x : out.a) x = x > 0.0 ? x : 0.0;
    return push(std::move(out), any_grad({a}), [this, a](const Node& n) {
      if (!nodes_[a].needs_grad) return;
      Mat& ga = nodes_[a].grad;
      const Mat& x = nodes_[a].val;
      for (std::size_t i = 0; i < ga.size(); ++i)
        if (x.a[i] > 0.0) ga.a[i] += n.grad.a[i];
    });
  }

  Var softmax_rows(Var a) {
    Mat out = val(a);
    for (int i = 0; i < out.r; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < out.c; ++j) mx = std::max(mx, out.at(i, j));
      double sum = 0.0;
      for (int j = 0; j < out.c; ++j) sum += (out.at(i, j) = std::exp(out.at(i, j) - mx));
      for (int j = 0; j < out.c; ++j) out.at(i, j) /= sum;
    }
    return push(std::move(out), any_grad({a}), [this, a](const Node& n) {
      if (!nodes_[a].needs_grad) return;
      Mat& ga = nodes_[a].grad;
      const Mat& y = n.val;
      for (int i = 0; i < y.r; ++i) {
        double dot = 0.0;
        for (int j = 0; j < y.c; ++j) dot += n.grad.at(i, j) * y.at(i, j);
        for (int j = 0; j < y.c; ++j)
          ga.at(i, j) += y.at(i, j) * (n.grad.at(i, j) - dot);
      }
    });
  }

  // Per-row layer normalization with learned gain/bias (1xC each).
  Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5) {
    const Mat& X = val(x);
    const Mat &G = val(gamma), &B = val(beta);
    if (G.r != 1 || G.c != X.c || B.r != 1 || B.c != X.c)
      throw std::invalid_argument("layer_norm_rows: bad gain/bias shape");
    Mat out(X.r, X.c);
    Mat xhat(X.r, X.c);
    std::vector<double> inv_sigma(X.r);
    for (int i = 0; i < X.r; ++i) {
      double mu = 0.0;
      for (int j = 0; j < X.c; ++j) mu += X.at(i, j);
      mu /= X.c;
      double var = 0.0;
      for (int j = 0; j < X.c; ++j) {
        const double d = X.at(i, j) - mu;
        var += d * d;
      }
      var /= X.c;
      inv_sigma[i] = 1.0 / std::sqrt(var + eps);
      for (int j = 0; j < X.c; ++j) {
        xhat.at(i, j) = (X.at(i, j) - mu) * inv_sigma[i];
        out.at(i, j) = G.at(0, j) * xhat.at(i, j) + B.at(0, j);
      }
    }
    return push(std::move(out), any_grad({x, gamma, beta}),
                [this, x, gamma, beta, xhat = std::move(xhat),
                 inv_sigma = std::move(inv_sigma)](const Node& n) {
      const Mat& G = nodes_[gamma].val;
      const int C = xhat.c;
      if (nodes_[gamma].needs_grad || nodes_[beta].needs_grad) {
        Mat& gg = nodes_[gamma].grad;
        Mat& gb = nodes_[beta].grad;
        for (int i = 0; i < xhat.r; ++i)
          for (int j = 0; j < C; ++j) {
            if (nodes_[gamma].needs_grad) gg.at(0, j) += n.grad.at(i, j) * xhat.at(i, j);
            if (nodes_[beta].needs_grad) gb.at(0, j) += n.grad.at(i, j);
          }
      }
      if (nodes_[x].needs_grad) {
        Mat& gx = nodes_[x].grad;
        for (int i = 0; i < xhat.r; ++i) {
          double mean_dy = 0.0, mean_dyx = 0.0;
          for (int j = 0; j < C; ++j) {
            const double dy = n.grad.at(i, j) * G.at(0, j);
            mean_dy += dy;
            mean_dyx += dy * xhat.at(i, j);
          }
          mean_dy /= C;
          mean_dyx /= C;
          for (int j = 0; j < C; ++j) {
            const double dy = n.grad.at(i, j) * G.at(0, j);
            gx.at(i, j) += (dy - mean_dy - xhat.at(i, j) * mean_dyx) * inv_sigma[i];
          }
        }
      }
    });
  }

  Var mean_rows(Var a) {
    const Mat& A = val(a);
    Mat out(1, A.c);
    for (int i = 0; i < A.r; ++i)
      for (int j = 0; j < A.c; ++j) out.at(0, j) += A.at(i, j) / A.r;
    return push(std::move(out), any_grad({a}), [this, a](const Node& n) {
      if (!nodes_[a].needs_grad) return;
      Mat& ga = nodes_[a].grad;
      for (int i = 0; i < ga.r; ++i)
        for (int j = 0; j < ga.c; ++j) ga.at(i, j) += n.grad.at(0, j) / ga.r;
    });
  }

  // ---- convolution (3x3 kernel, stride 2, zero pad 1) ----
  // x: (Cin*H) x W stacked channel blocks; w: Cout x (Cin*9); b: 1 x Cout.
  // Lowered to an im2col patch matrix so the contraction runs as a dense
  // matmul; the patch matrix is kept for the backward pass.
  Var conv2d_s2(Var x, Var w, Var b, int cin, int h, int wd, int cout) {
    const Mat& X = val(x);
    const Mat& W = val(w);
    const Mat& B = val(b);
    if (X.r != cin * h || X.c != wd) throw std::invalid_argument("conv2d_s2: bad input");
    if (W.r != cout || W.c != cin * 9) throw std::invalid_argument("conv2d_s2: bad kernel");
    if (B.r != 1 || B.c != cout) throw std::invalid_argument("conv2d_s2: bad bias");
    const int ho = (h + 1) / 2, wo = (wd + 1) / 2;
    const int np = ho * wo, kk = cin * 9;

    auto patches = std::make_shared<Mat>(np, kk);
    Mat& P = *patches;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double* prow = &P.a[static_cast<std::size_t>(oy * wo + ox) * kk];
        for (int ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = 2 * oy + ky - 1;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = 2 * ox + kx - 1;
              prow[ci * 9 + ky * 3 + kx] =
                  (iy >= 0 && iy < h && ix >= 0 && ix < wd) ? X.at(ci * h + iy, ix) : 0.0;
            }
          }
      }

    Mat O(np, cout);
    matmul_a_bt_acc(P, W, O); // O = P * W^T
    Mat out(cout * ho, wo);
    for (int co = 0; co < cout; ++co) {
      const double bias = B.at(0, co);
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox)
          out.at(co * ho + oy, ox) = O.at(oy * wo + ox, co) + bias;
    }
    return push(std::move(out), any_grad({x, w, b}),
                [this, x, w, b, cin, h, wd, cout, ho, wo, np, kk,
                 patches](const Node& n) {
      const Mat& W = nodes_[w].val;
      const bool gx_on = nodes_[x].needs_grad;
      const bool gw_on = nodes_[w].needs_grad;
      const bool gb_on = nodes_[b].needs_grad;

      Mat dO(np, cout);
      for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox)
            dO.at(oy * wo + ox, co) = n.grad.at(co * ho + oy, ox);

      if (gb_on) {
        Mat& GB = nodes_[b].grad;
        for (int i = 0; i < np; ++i)
          for (int co = 0; co < cout; ++co) GB.at(0, co) += dO.at(i, co);
      }
      if (gw_on) matmul_at_b_acc(dO, *patches, nodes_[w].grad); // GW += dO^T * P
      if (gx_on) {
        Mat dP(np, kk);
        matmul_into(dO, W, dP); // dP = dO * W
        Mat& GX = nodes_[x].grad;
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox) {
            const double* prow = &dP.a[static_cast<std::size_t>(oy * wo + ox) * kk];
            for (int ci = 0; ci < cin; ++ci)
              for (int ky = 0; ky < 3; ++ky) {
                const int iy = 2 * oy + ky - 1;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < 3; ++kx) {
                  const int ix = 2 * ox + kx - 1;
                  if (ix >= 0 && ix < wd)
                    GX.at(ci * h + iy, ix) += prow[ci * 9 + ky * 3 + kx];
                }
              }
          }
      }
    });
  }

  // x: (C*H) x W -> 1 x C channel means
  Var global_avg_pool(Var x, int c, int h, int wd) {
    const Mat& X = val(x);
    if (X.r != c * h || X.c != wd) throw std::invalid_argument("global_avg_pool");
    Mat out(1, c);
    const double inv = 1.0 / (static_cast<double>(h) * wd);
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < wd; ++j) acc += X.at(ch * h + i, j);
      out.at(0, ch) = acc * inv;
    }
    return push(std::move(out), any_grad({x}), [this, x, c, h, wd, inv](const Node& n) {
      if (!nodes_[x].needs_grad) return;
      Mat& gx = nodes_[x].grad;
      for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < wd; ++j) gx.at(ch * h + i, j) += n.grad.at(0, ch) * inv;
    });
  }

  // ---- losses (all produce 1x1 scalars) ----

  Var cross_entropy_logits(Var logits, int target) {
    const Mat& L = val(logits);
    if (L.r != 1) throw std::invalid_argument("cross_entropy_logits: need a row");
    if (target < 0 || target >= L.c) throw std::out_of_range("cross_entropy target");
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < L.c; ++j) mx = std::max(mx, L.at(0, j));
    double sum = 0.0;
    for (int j = 0; j < L.c; ++j) sum += std::exp(L.at(0, j) - mx);
    const double lse = mx + std::log(sum);
    Mat out(1, 1);
    out.at(0, 0) = lse - L.at(0, target);
    return push(std::move(out), any_grad({logits}),
                [this, logits, target, lse](const Node& n) {
      if (!nodes_[logits].needs_grad) return;
      const Mat& L = nodes_[logits].val;
      Mat& g = nodes_[logits].grad;
      const double up = n.grad.at(0, 0);
      for (int j = 0; j < L.c; ++j)
        g.at(0, j) += up * (std::exp(L.at(0, j) - lse) - (j == target ? 1.0 : 0.0));
    });
  }

  // mean over all elements of (pred - target)^2
  Var mse(Var pred, const Mat& target) {
    const Mat& P = val(pred);
    if (!P.same_shape(target)) throw std::invalid_argument("mse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
      const double d = P.a[i] - target.a[i];
      acc += d * d;
    }
    Mat out(1, 1);
    out.at(0, 0) = acc / static_cast<double>(P.size());
    return push(std::move(out), any_grad({pred}), [this, pred, target](const Node& n) {
      if (!nodes_[pred].needs_grad) return;
      const Mat& P = nodes_[pred].val;
      Mat& g = nodes_[pred].grad;
      const double up = 2.0 * n.grad.at(0, 0) / static_cast<double>(P.size());
      for (std::size_t i = 0; i < P.size(); ++i) g.a[i] += up * (P.a[i] - target.a[i]);
    });
  }

  // (1/R) sum_i w_i * ||pred_i - target_i||^2 over rows
  Var weighted_row_sqnorm(Var pred, const Mat& target, const std::vector<double>& w) {
    const Mat& P = val(pred);
    if (!P.same_shape(target) || static_cast<int>(w.size()) != P.r)
      throw std::invalid_argument("weighted_row_sqnorm: shape mismatch");
    double acc = 0.0;
    for (int i = 0; i < P.r; ++i)
      for (int j = 0; j < P.c; ++j) {
        const double d = P.at(i, j) - target.at(i, j);
        acc += w[i] * d * d;
      }
    Mat out(1, 1);
    out.at(0, 0) = acc / P.r;
    return push(std::move(out), any_grad({pred}),
                [this, pred, target, w](const Node& n) {
      if (!nodes_[pred].needs_grad) return;
      const Mat& P = nodes_[pred].val;
      Mat& g = nodes_[pred].grad;
      const double up = 2.0 * n.grad.at(0, 0) / P.r;
      for (int i = 0; i < P.r; ++i)
        for (int j = 0; j < P.c; ++j)
          g.at(i, j) += up * w[i] * (P.at(i, j) - target.at(i, j));
    });
  }

  // sum over masked entries of (pred - target)^2, normalized by the number of
  // unmasked entries; zero (with zero gradient) when the mask is empty.
  Var masked_mse(Var pred, const Mat& target, const Mat& mask) {
    const Mat& P = val(pred);
    if (!P.same_shape(target) || !P.same_shape(mask))
      throw std::invalid_argument("masked_mse: shape mismatch");
    double acc = 0.0, cnt = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i)
      if (mask.a[i] != 0.0) {
        const double d = P.a[i] - target.a[i];
        acc += d * d;
        cnt += 1.0;
      }
    Mat out(1, 1);
    out.at(0, 0) = cnt > 0.0 ? acc / cnt : 0.0;
    return push(std::move(out), any_grad({pred}),
                [this, pred, target, mask, cnt](const Node& n) {
      if (!nodes_[pred].needs_grad || cnt == 0.0) return;
      const Mat& P = nodes_[pred].val;
      Mat& g = nodes_[pred].grad;
      const double up = 2.0 * n.grad.at(0, 0) / cnt;
      for (std::size_t i = 0; i < P.size(); ++i)
        if (mask.a[i] != 0.0) g.a[i] += up * (P.a[i] - target.a[i]);
    });
  }

  // 1x(S*(S-1)/2) upper triangle -> SxS symmetric matrix with zero diagonal
  Var triu_to_sym(Var u, int s) {
    const Mat& U = val(u);
    if (U.r != 1 || U.c != s * (s - 1) / 2)
      throw std::invalid_argument("triu_to_sym: bad input");
    Mat out(s, s);
    int k = 0;
    for (int i = 0; i < s; ++i)
      for (int j = i + 1; j < s; ++j, ++k) out.at(i, j) = out.at(j, i) = U.at(0, k);
    return push(std::move(out), any_grad({u}), [this, u, s](const Node& n) {
      if (!nodes_[u].needs_grad) return;
      Mat& g = nodes_[u].grad;
      int k = 0;
      for (int i = 0; i < s; ++i)
        for (int j = i + 1; j < s; ++j, ++k)
          g.at(0, k) += n.grad.at(i, j) + n.grad.at(j, i);
    });
  }

  Var add_scalars(const std::vector<Var>& vars) {
    Mat out(1, 1);
    bool ng = false;
    for (Var v : vars) {
      const Mat& V = val(v);
      if (V.r != 1 || V.c != 1) throw std::invalid_argument("add_scalars: non-scalar");
      out.at(0, 0) += V.at(0, 0);
      ng |= nodes_[v].needs_grad;
    }
    return push(std::move(out), ng, [this, vars](const Node& n) {
      for (Var v : vars) axpy(v, 1.0, n.grad);
    });
  }

  // ---- backward ----

  void backward(Var loss) {
    const Mat& L = val(loss);
    if (L.r != 1 || L.c != 1) throw std::invalid_argument("backward: loss not scalar");
    nodes_[loss].grad.at(0, 0) = 1.0;
    for (int i = loss; i >= 0; --i)
      if (nodes_[i].back && nodes_[i].needs_grad) nodes_[i].back(nodes_[i]);
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;
    Mat grad;
    bool needs_grad = false;
    std::function<void(const Node&)> back;
  };

  std::vector<Node> nodes_;

  bool any_grad(std::initializer_list<Var> vs) const {
    for (Var v : vs)
      if (nodes_[v].needs_grad) return true;
    return false;
  }

  void axpy(Var dst, double s, const Mat& g) {
    if (!nodes_[dst].needs_grad) return;
    Mat& d = nodes_[dst].grad;
    for (std::size_t i = 0; i < d.size(); ++i) d.a[i] += s * g.a[i];
  }

  Var push(Mat v, bool needs_grad, std::function<void(const Node&)> back) {
    Node n;
    n.grad = Mat(v.r, v.c);
    n.val = std::move(v);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }
};

} // namespace osha::nn
