// Independent reference implementations used to freeze expected test values.
// Everything here is deliberately naive (plain loops, no shared code with the
// library) so the two paths cannot fail in the same way.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Grid = std::vector<std::vector<double>>;

inline Grid zeros(std::size_t r, std::size_t c) {
  return Grid(r, std::vector<double>(c, 0.0));
}

// Triple-loop matrix product.
inline Grid matmul(const Grid& a, const Grid& b) {
  const std::size_t m = a.size(), k = a[0].size(), n = b[0].size();
  Grid c = zeros(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t t = 0; t < k; ++t) c[i][j] += a[i][t] * b[t][j];
  return c;
}

// Direct exp-normalize softmax in extended precision.
inline std::vector<double> softmax(const std::vector<double>& x) {
  std::vector<long double> e(x.size());
  long double s = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = expl(static_cast<long double>(x[i]));
    s += e[i];
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = static_cast<double>(e[i] / s);
  return out;
}

// -log softmax(x)[target] via extended-precision log-sum-exp.
inline double cross_entropy(const std::vector<double>& x, int target) {
  long double m = x[0];
  for (double v : x) m = std::max<long double>(m, v);
  long double s = 0.0L;
  for (double v : x) s += expl(static_cast<long double>(v) - m);
  const long double lse = m + logl(s);
  return static_cast<double>(lse - static_cast<long double>(x[target]));
}

// Scaled dot-product attention over explicitly concatenated keys/values.
// q: [T x dh], kcat/vcat: [(P+T) x dh]; visible[i][j] gates key j for query i.
inline Grid attention_concat(const Grid& q, const Grid& kcat, const Grid& vcat,
                             const std::vector<std::vector<bool>>& visible) {
  const std::size_t T = q.size(), S = kcat.size(), dh = q[0].size();
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  Grid out = zeros(T, vcat[0].size());
  for (std::size_t i = 0; i < T; ++i) {
    std::vector<double> scores(S, 0.0);
    double mx = -1e300;
    for (std::size_t j = 0; j < S; ++j) {
      if (!visible[i][j]) continue;
      double s = 0;
      for (std::size_t t = 0; t < dh; ++t) s += q[i][t] * kcat[j][t];
      scores[j] = s * inv;
      mx = std::max(mx, scores[j]);
    }
    double denom = 0;
    std::vector<double> w(S, 0.0);
    for (std::size_t j = 0; j < S; ++j) {
      if (!visible[i][j]) continue;
      w[j] = std::exp(scores[j] - mx);
      denom += w[j];
    }
    for (std::size_t j = 0; j < S; ++j) {
      if (w[j] == 0.0) continue;
      const double p = w[j] / denom;
      for (std::size_t t = 0; t < vcat[0].size(); ++t)
        out[i][t] += p * vcat[j][t];
    }
  }
  return out;
}

inline std::vector<double> rms_norm(const std::vector<double>& x,
                                    const std::vector<double>& gain,
                                    double eps = 1e-6) {
  double ms = 0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  const double s = 1.0 / std::sqrt(ms + eps);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * gain[i] * s;
  return y;
}

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

// Pre-norm decoder layer with causal self-attention and a SiLU MLP, matching
// the documented backbone wiring but computed with raw loops.
struct LayerOracleWeights {
  Grid wq, wk, wv, wo;       // [d x d]
  std::vector<double> g1, g2;  // norm gains
  Grid w1, w2;               // [d x h], [h x d]
};

inline Grid vanilla_layer(const Grid& x, const LayerOracleWeights& w,
                          std::size_t n_heads) {
  const std::size_t T = x.size(), d = x[0].size(), dh = d / n_heads;
  Grid normed(T);
  for (std::size_t i = 0; i < T; ++i) normed[i] = rms_norm(x[i], w.g1);
  const Grid q = matmul(normed, w.wq), k = matmul(normed, w.wk),
             v = matmul(normed, w.wv);
  Grid heads = zeros(T, d);
  std::vector<std::vector<bool>> vis(T, std::vector<bool>(T, false));
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j <= i; ++j) vis[i][j] = true;
  for (std::size_t h = 0; h < n_heads; ++h) {
    Grid qh = zeros(T, dh), kh = zeros(T, dh), vh = zeros(T, dh);
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t t = 0; t < dh; ++t) {
        qh[i][t] = q[i][h * dh + t];
        kh[i][t] = k[i][h * dh + t];
        vh[i][t] = v[i][h * dh + t];
      }
    const Grid oh = attention_concat(qh, kh, vh, vis);
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t t = 0; t < dh; ++t) heads[i][h * dh + t] = oh[i][t];
  }
  const Grid attn = matmul(heads, w.wo);
  Grid mid = zeros(T, d);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < d; ++j) mid[i][j] = x[i][j] + attn[i][j];

  Grid out = mid;
  Grid fin(T);
  for (std::size_t i = 0; i < T; ++i) fin[i] = rms_norm(mid[i], w.g2);
  Grid hid = matmul(fin, w.w1);
  for (auto& row : hid)
    for (double& v2 : row) v2 = silu(v2);
  const Grid ff = matmul(hid, w.w2);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i][j] += ff[i][j];
  return out;
}

// Mean-pool rows then cosine.
inline double pooled_cosine(const Grid& a, const Grid& b) {
  std::vector<long double> pa(a[0].size(), 0.0L), pb(b[0].size(), 0.0L);
  for (const auto& r : a)
    for (std::size_t j = 0; j < r.size(); ++j) pa[j] += r[j];
  for (const auto& r : b)
    for (std::size_t j = 0; j < r.size(); ++j) pb[j] += r[j];
  for (auto& v : pa) v /= static_cast<long double>(a.size());
  for (auto& v : pb) v /= static_cast<long double>(b.size());
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t j = 0; j < pa.size(); ++j) {
    dot += pa[j] * pb[j];
    na += pa[j] * pa[j];
    nb += pb[j] * pb[j];
  }
  return static_cast<double>(dot / (sqrtl(na) * sqrtl(nb)));
}

// Brute-force negative-guided contrastive loss (log form).
inline double question_neg_loss(const std::vector<double>& s_pos,
                                const std::vector<double>& s_neg,
                                double tau) {
  const std::size_t B = s_pos.size();
  long double denom = 0.0L;
  for (std::size_t j = 0; j < B; ++j)
    denom += expl(static_cast<long double>(s_pos[j] / tau)) +
             expl(static_cast<long double>(s_neg[j] / tau));
  long double total = 0.0L;
  for (std::size_t i = 0; i < B; ++i)
    total += -logl(expl(static_cast<long double>(s_pos[i] / tau)) / denom);
  return static_cast<double>(total / static_cast<long double>(B));
}

// Brute-force video distillation contrastive loss.
inline double video_con_loss(const std::vector<double>& sims, double tau) {
  const std::size_t B = sims.size();
  long double denom = 0.0L;
  for (double s : sims) denom += expl(static_cast<long double>(s / tau));
  long double total = 0.0L;
  for (double s : sims)
    total += -logl(expl(static_cast<long double>(s / tau)) / denom);
  return static_cast<double>(total / static_cast<long double>(B));
}

}  // namespace oracle
