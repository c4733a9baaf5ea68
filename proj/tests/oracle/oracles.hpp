#pragma once

// Plain-loop reimplementations used as test oracles. They share no code with
// the library beyond reading weight values.

#include <cmath>
#include <vector>

#include "hce/enc/encoder.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline Vec matvec(const hce::ad::Tensor& m, const Vec& x) {
  Vec out(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out[r] += m(r, c) * x[c];
  }
  return out;
}

struct Cell {
  Vec i, fl, fr, o, ct, c, h;
};

/// One binary treeLSTM cell, gate by gate and scalar by scalar.
inline Cell treelstm_node(const hce::enc::TreeLstmParams& p, const Vec& xn, const Vec& xl, const Vec& xr,
                          const Vec& hl, const Vec& hr, const Vec& cl, const Vec& cr) {
  using hce::enc::Gate;
  using hce::enc::Part;
  const std::size_t H = p.hidden;
  auto pre = [&](Gate g) {
    Vec a(H, 0.0);
    const Vec t1 = matvec(p.block(g, Part::kUl), hl);
    const Vec t2 = matvec(p.block(g, Part::kUr), hr);
    const Vec t3 = matvec(p.block(g, Part::kV), xn);
    const Vec t4 = matvec(p.block(g, Part::kVl), xl);
    const Vec t5 = matvec(p.block(g, Part::kVr), xr);
    for (std::size_t k = 0; k < H; ++k) {
      a[k] = t1[k] + t2[k] + t3[k] + t4[k] + t5[k];
      if (p.b) a[k] += p.b->value[static_cast<std::size_t>(g) * H + k];
    }
    return a;
  };
  Cell s;
  const Vec pi = pre(Gate::kInput), pfl = pre(Gate::kForgetLeft), pfr = pre(Gate::kForgetRight),
            po = pre(Gate::kOutput), pc = pre(Gate::kCandidate);
  for (std::size_t k = 0; k < H; ++k) {
    s.i.push_back(sig(pi[k]));
    s.fl.push_back(sig(pfl[k]));
    s.fr.push_back(sig(pfr[k]));
    s.o.push_back(sig(po[k]));
    s.ct.push_back(std::tanh(pc[k]));
    s.c.push_back(s.i[k] * s.ct[k] + s.fl[k] * cl[k] + s.fr[k] * cr[k]);
    s.h.push_back(s.o[k] * std::tanh(s.c[k]));
  }
  return s;
}

/// Single-direction LSTM over a sequence of input vectors; returns h_T.
inline Vec lstm(const hce::enc::LstmParams& p, const std::vector<Vec>& xs) {
  const std::size_t H = p.hidden, D = p.input_dim;
  const auto& W = p.W->value;
  Vec h(H, 0.0), c(H, 0.0);
  for (const Vec& x : xs) {
    Vec a(4 * H, 0.0);
    for (std::size_t r = 0; r < 4 * H; ++r) {
      for (std::size_t k = 0; k < D; ++k) a[r] += W(r, k) * x[k];
      for (std::size_t k = 0; k < H; ++k) a[r] += W(r, D + k) * h[k];
      if (p.b) a[r] += p.b->value[r];
    }
    for (std::size_t k = 0; k < H; ++k) {
      const double i = sig(a[k]), f = sig(a[H + k]), o = sig(a[2 * H + k]), g = std::tanh(a[3 * H + k]);
      c[k] = f * c[k] + i * g;
      h[k] = o * std::tanh(c[k]);
    }
  }
  return h;
}

/// Direct sliding-window convolution, max-pool and projection.
inline Vec cnn(hce::enc::CnnEncoder& e, std::vector<Vec> xs) {
  const auto& cfg = e.config();
  const std::size_t D = cfg.input_dim, F = cfg.cnn_filters, Wmax = cfg.cnn_max_width;
  while (xs.size() < Wmax) xs.push_back(Vec(D, 0.0));
  Vec pooled;
  for (std::size_t w = 1; w <= Wmax; ++w) {
    const auto& K = e.kernel(w).value;
    for (std::size_t f = 0; f < F; ++f) {
      double best = -INFINITY;
      for (std::size_t t = 0; t + w <= xs.size(); ++t) {
        double acc = cfg.bias ? e.kernel_bias(w).value[f] : 0.0;
        for (std::size_t dt = 0; dt < w; ++dt) {
          for (std::size_t d = 0; d < D; ++d) acc += K(f, dt * D + d) * xs[t + dt][d];
        }
        best = std::max(best, acc);
      }
      pooled.push_back(best);
    }
  }
  Vec out = matvec(e.fc().value, pooled);
  if (cfg.bias) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += e.fc_bias().value[k];
  }
  return out;
}

inline Vec softmax(const Vec& z) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  Vec out;
  double s = 0;
  for (double v : z) s += std::exp(v - mx);
  for (double v : z) out.push_back(std::exp(v - mx) / s);
  return out;
}

inline Vec row(const hce::ad::Tensor& t, std::size_t r) {
  auto s = t.row(r);
  return Vec(s.begin(), s.end());
}

inline double max_diff(const Vec& a, const Vec& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace oracle

#include "hce/pron/head.hpp"

namespace oracle {

/// Chained head evaluated with loops; returns distributions indexed by unit.
inline std::array<Vec, 3> pron_head(const hce::pron::PronHead& head, const Vec& h) {
  std::array<Vec, 3> probs;
  Vec feed = h;
  for (hce::pron::Unit u : hce::pron::chain(head.order())) {
    Vec z = matvec(head.weight(u).value, feed);
    if (const auto* b = head.bias(u)) {
      for (std::size_t k = 0; k < z.size(); ++k) z[k] += b->value[k];
    }
    const Vec p = softmax(z);
    probs[static_cast<int>(u)] = p;
    feed.insert(feed.end(), p.begin(), p.end());
  }
  return probs;
}

}  // namespace oracle
