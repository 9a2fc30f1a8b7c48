#include "colpro/model.hpp"

#include <cmath>

#include "colpro/digest.hpp"
#include "colpro/errors.hpp"

namespace colpro {

void ModelConfig::validate() const {
  if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
  if (d_model < 1 || n_heads < 1) throw ConfigError("bad model width");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (codebook_size < 2) throw ConfigError("codebook_size must be >= 2");
  if (feat_dim < 1) throw ConfigError("feat_dim must be >= 1");
  if (max_seq_len < 4) throw ConfigError("max_seq_len must be >= 4");
  if (prompt_len < 0) throw ConfigError("prompt_len must be >= 0");
  if (g_end < 0 || g_end > e_end || e_end > n_layers)
    throw ConfigError("prompt layer ranges must satisfy 0 <= g_end <= e_end "
                      "<= n_layers, got g_end=" +
                      std::to_string(g_end) + " e_end=" +
                      std::to_string(e_end) + " n_layers=" +
                      std::to_string(n_layers));
  if (ffn_mult < 1) throw ConfigError("ffn_mult must be >= 1");
}

ModelConfig ModelConfig::for_vocab(const Vocab& vocab) {
  ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.markers.question = vocab.question_marker();
  cfg.markers.video = vocab.video_marker();
  cfg.markers.choices = vocab.choices_marker();
  cfg.markers.answer = vocab.answer_marker();
  cfg.markers.negatives = vocab.negatives_marker();
  cfg.markers.separator = vocab.separator();
  return cfg;
}

namespace {

Tensor gaussian_tensor(const Shape& shape, Rng& rng, Real stddev) {
  Tensor t = Tensor::zeros(shape);
  for (Index i = 0; i < t.rows(); ++i)
    for (Index j = 0; j < t.cols(); ++j)
      t.mutable_value()(i, j) = rng.normal(0.0, stddev);
  return t;
}

Mat sinusoidal_positional(int max_len, int d) {
  Mat pe(max_len, d);
  for (int p = 0; p < max_len; ++p)
    for (int j = 0; j < d; ++j) {
      const double angle =
          p / std::pow(10000.0, 2.0 * (j / 2) / static_cast<double>(d));
      pe(p, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

}  // namespace

Backbone Backbone::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  Backbone b;
  // fan-in scaling: at toy widths anything smaller lets the positional table
  // drown the content signal and every position looks alike
  const Real proj = 1.0 / std::sqrt(static_cast<Real>(cfg.d_model));
  b.token_embedding =
      gaussian_tensor({cfg.vocab_size, cfg.d_model}, rng, 1.0);
  b.frame_projection = gaussian_tensor(
      {cfg.feat_dim, cfg.d_model}, rng,
      1.0 / std::sqrt(static_cast<Real>(cfg.feat_dim)));
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerWeights w;
    w.wq = gaussian_tensor({cfg.d_model, cfg.d_model}, rng, proj);
    w.wk = gaussian_tensor({cfg.d_model, cfg.d_model}, rng, proj);
    w.wv = gaussian_tensor({cfg.d_model, cfg.d_model}, rng, proj);
    w.wo = gaussian_tensor({cfg.d_model, cfg.d_model}, rng, proj);
    w.attn_norm_gain = Tensor::full({1, cfg.d_model}, 1.0);
    w.ffn_norm_gain = Tensor::full({1, cfg.d_model}, 1.0);
    w.ffn_w1 =
        gaussian_tensor({cfg.d_model, cfg.ffn_mult * cfg.d_model}, rng, proj);
    w.ffn_w2 = gaussian_tensor(
        {cfg.ffn_mult * cfg.d_model, cfg.d_model}, rng,
        1.0 / std::sqrt(static_cast<Real>(cfg.ffn_mult * cfg.d_model)));
    b.layers.push_back(std::move(w));
  }
  b.final_norm_gain = Tensor::full({1, cfg.d_model}, 1.0);
  b.lm_head = gaussian_tensor({cfg.d_model, cfg.vocab_size}, rng, proj);
  b.positional = sinusoidal_positional(cfg.max_seq_len, cfg.d_model);
  return b;
}

std::vector<std::pair<std::string, Tensor>> Backbone::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("backbone.token_embedding", token_embedding);
  out.emplace_back("backbone.frame_projection", frame_projection);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "backbone.layer" + std::to_string(l) + ".";
    out.emplace_back(p + "wq", layers[l].wq);
    out.emplace_back(p + "wk", layers[l].wk);
    out.emplace_back(p + "wv", layers[l].wv);
    out.emplace_back(p + "wo", layers[l].wo);
    out.emplace_back(p + "attn_norm_gain", layers[l].attn_norm_gain);
    out.emplace_back(p + "ffn_norm_gain", layers[l].ffn_norm_gain);
    out.emplace_back(p + "ffn_w1", layers[l].ffn_w1);
    out.emplace_back(p + "ffn_w2", layers[l].ffn_w2);
  }
  out.emplace_back("backbone.final_norm_gain", final_norm_gain);
  out.emplace_back("backbone.lm_head", lm_head);
  return out;
}

void Backbone::set_trainable(bool trainable) {
  for (auto& [name, t] : named_params()) t.set_requires_grad(trainable);
}

std::uint64_t Backbone::digest() const {
  Digest d;
  d.update(token_embedding.value());
  d.update(frame_projection.value());
  for (const LayerWeights& w : layers) {
    d.update(w.wq.value());
    d.update(w.wk.value());
    d.update(w.wv.value());
    d.update(w.wo.value());
    d.update(w.attn_norm_gain.value());
    d.update(w.ffn_norm_gain.value());
    d.update(w.ffn_w1.value());
    d.update(w.ffn_w2.value());
  }
  d.update(final_norm_gain.value());
  d.update(lm_head.value());
  return d.value();
}

PromptSet PromptSet::init(const ModelConfig& cfg, Rng& rng) {
  PromptSet p;
  p.g_end = cfg.g_end;
  p.e_end = cfg.e_end;
  p.prompt_len = cfg.prompt_len;
  p.d_model = cfg.d_model;
  if (cfg.prompt_len == 0) return p;
  for (int l = 0; l < cfg.e_end; ++l) {
    // small uniform noise: zero init would make early attention mass on
    // prompts symmetric-degenerate
    Tensor k = Tensor::zeros({cfg.prompt_len, cfg.d_model});
    Tensor v = Tensor::zeros({cfg.prompt_len, cfg.d_model});
    for (Index i = 0; i < k.rows(); ++i)
      for (Index j = 0; j < k.cols(); ++j) {
        k.mutable_value()(i, j) = rng.uniform(-0.01, 0.01);
        v.mutable_value()(i, j) = rng.uniform(-0.01, 0.01);
      }
    k.set_requires_grad(true);
    v.set_requires_grad(true);
    p.key_prompts.push_back(std::move(k));
    p.value_prompts.push_back(std::move(v));
  }
  return p;
}

std::vector<std::pair<std::string, Tensor>> PromptSet::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t l = 0; l < key_prompts.size(); ++l) {
    const char* kind = is_g_layer(static_cast<int>(l)) ? "g" : "e";
    out.emplace_back("prompt." + std::string(kind) + ".layer" +
                         std::to_string(l) + ".key",
                     key_prompts[l]);
    out.emplace_back("prompt." + std::string(kind) + ".layer" +
                         std::to_string(l) + ".value",
                     value_prompts[l]);
  }
  return out;
}

PromptSet PromptSet::with_g_detached() const {
  PromptSet p = *this;
  for (int l = 0; l < g_end && l < static_cast<int>(p.key_prompts.size());
       ++l) {
    p.key_prompts[static_cast<std::size_t>(l)] =
        key_prompts[static_cast<std::size_t>(l)].detached();
    p.value_prompts[static_cast<std::size_t>(l)] =
        value_prompts[static_cast<std::size_t>(l)].detached();
  }
  return p;
}

Heads Heads::init(const ModelConfig& cfg) {
  // Zero init: an untrained head is exactly the uniform head, so candidate
  // scoring starts at chance and the first optimizer step breaks symmetry
  // through the feature side of the outer product.
  Heads h;
  const int in = 2 * cfg.d_model;
  h.answer_w = Tensor::zeros({in, cfg.vocab_size});
  h.answer_b = Tensor::zeros({1, cfg.vocab_size});
  h.question_w = Tensor::zeros({in, cfg.vocab_size});
  h.question_b = Tensor::zeros({1, cfg.vocab_size});
  h.video_w = Tensor::zeros({in, cfg.codebook_size});
  h.video_b = Tensor::zeros({1, cfg.codebook_size});
  for (auto& [name, t] : h.named_params()) t.set_requires_grad(true);
  return h;
}

std::vector<std::pair<std::string, Tensor>> Heads::named_params() const {
  return {
      {"head.answer.w", answer_w},     {"head.answer.b", answer_b},
      {"head.question.w", question_w}, {"head.question.b", question_b},
      {"head.video.w", video_w},       {"head.video.b", video_b},
  };
}

Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  Rng rng(seed);
  Rng brng = rng.fork(0xBACB01ULL);
  m.backbone = Backbone::init(cfg, brng);
  m.heads = Heads::init(cfg);
  return m;
}

MultimodalSequence to_sequence(const Sample& sample) {
  MultimodalSequence seq;
  seq.question_tokens = sample.question.tokens;
  seq.frame_features = sample.episode.features;
  seq.frame_codebook_ids = sample.episode.frame_ids;
  seq.choice_blocks = sample.choices;
  seq.answer_tokens = sample.answer_tokens;
  for (const NegativeQuestion& n : sample.negatives)
    seq.negative_question_blocks.push_back(n.tokens);
  return seq;
}

namespace {

struct SequenceBuilder {
  SerializedSequence s;

  void push_token(int id) {
    s.token_ids.push_back(id);
    s.frame_slots.push_back(-1);
  }

  void push_tokens(const std::vector<int>& ids) {
    for (int id : ids) push_token(id);
  }

  Span push_segment(const std::vector<int>& ids) {
    Span span;
    span.begin = static_cast<int>(s.token_ids.size());
    push_tokens(ids);
    span.end = static_cast<int>(s.token_ids.size());
    return span;
  }

  Span push_frames(int n) {
    Span span;
    span.begin = static_cast<int>(s.token_ids.size());
    for (int i = 0; i < n; ++i) {
      s.token_ids.push_back(-1);
      s.frame_slots.push_back(i);
    }
    span.end = static_cast<int>(s.token_ids.size());
    return span;
  }

  Span push_blocks(const std::vector<std::vector<int>>& blocks, int sep) {
    Span span;
    span.begin = static_cast<int>(s.token_ids.size());
    for (const auto& b : blocks) {
      push_tokens(b);
      push_token(sep);
    }
    span.end = static_cast<int>(s.token_ids.size());
    return span;
  }
};

SerializedSequence serialize_impl(const MultimodalSequence& seq,
                                  SegmentOrder order, const ModelConfig& cfg,
                                  const std::vector<int>& answer) {
  SequenceBuilder b;
  const auto& mk = cfg.markers;
  const int n_frames = static_cast<int>(seq.frame_features.rows());
  switch (order) {
    case SegmentOrder::kAnswer:
      b.push_token(mk.question);
      b.s.question = b.push_segment(seq.question_tokens);
      b.push_token(mk.video);
      b.s.video = b.push_frames(n_frames);
      b.push_token(mk.choices);
      b.s.choices = b.push_blocks(seq.choice_blocks, mk.separator);
      b.push_token(mk.answer);
      b.s.answer = b.push_segment(answer);
      break;
    case SegmentOrder::kQuestion:
      b.push_token(mk.video);
      b.s.video = b.push_frames(n_frames);
      b.push_token(mk.choices);
      b.s.choices = b.push_blocks(seq.choice_blocks, mk.separator);
      if (!seq.negative_question_blocks.empty()) {
        b.push_token(mk.negatives);
        b.s.negatives =
            b.push_blocks(seq.negative_question_blocks, mk.separator);
      }
      b.push_token(mk.question);
      b.s.question = b.push_segment(seq.question_tokens);
      break;
    case SegmentOrder::kVideo:
      b.push_token(mk.question);
      b.s.question = b.push_segment(seq.question_tokens);
      b.push_token(mk.choices);
      b.s.choices = b.push_blocks(seq.choice_blocks, mk.separator);
      b.push_token(mk.video);
      b.s.video = b.push_frames(n_frames);
      break;
  }
  if (b.s.length() > cfg.max_seq_len)
    throw DimensionError("serialized sequence length " +
                         std::to_string(b.s.length()) + " exceeds max_seq_len " +
                         std::to_string(cfg.max_seq_len));
  return b.s;
}

}  // namespace

SerializedSequence serialize_sequence(const MultimodalSequence& seq,
                                      SegmentOrder order,
                                      const ModelConfig& cfg) {
  return serialize_impl(seq, order, cfg, seq.answer_tokens);
}

SerializedSequence serialize_with_answer(const MultimodalSequence& seq,
                                         const std::vector<int>& answer,
                                         const ModelConfig& cfg) {
  return serialize_impl(seq, SegmentOrder::kAnswer, cfg, answer);
}

Tensor make_causal_mask(int seq_len, int prompt_len) {
  // Finite large negative: exp underflows to exactly zero after the softmax
  // max-subtraction, so future positions carry literally no weight.
  constexpr Real kMasked = -1e9;
  Mat m = Mat::Zero(seq_len, prompt_len + seq_len);
  for (int i = 0; i < seq_len; ++i)
    for (int j = i + 1; j < seq_len; ++j) m(i, prompt_len + j) = kMasked;
  return Tensor::from_matrix(std::move(m));
}

Tensor prompted_attention(const Tensor& h_q, const Tensor& h_k,
                          const Tensor& h_v, const Tensor& p_k,
                          const Tensor& p_v, const Tensor& mask,
                          Mat* attn_probe) {
  const bool prompted = p_k.defined() && p_k.rows() > 0;
  if (prompted && (p_k.cols() != h_k.cols() || p_v.cols() != h_v.cols()))
    throw DimensionError("prompt head width " + p_k.shape_str() +
                         " does not match keys " + h_k.shape_str());
  const Tensor keys = prompted ? concat_rows(p_k, h_k) : h_k;
  const Tensor values = prompted ? concat_rows(p_v, h_v) : h_v;
  const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(h_q.cols()));
  Tensor scores = scale(matmul(h_q, transpose(keys)), inv_sqrt);
  scores = add(scores, mask);
  const Tensor weights = softmax_rows(scores);
  if (attn_probe != nullptr) *attn_probe = weights.value();
  return matmul(weights, values);
}

Tensor multihead_prompted(const Tensor& h, const LayerWeights& w, int n_heads,
                          const Tensor& p_k, const Tensor& p_v,
                          const Tensor& mask,
                          std::vector<Mat>* attn_probe) {
  const Index d = h.cols();
  if (d % n_heads != 0)
    throw DimensionError("width " + std::to_string(d) +
                         " does not split into " + std::to_string(n_heads) +
                         " heads");
  const Index dh = d / n_heads;
  const Tensor q = matmul(h, w.wq);
  const Tensor k = matmul(h, w.wk);
  const Tensor v = matmul(h, w.wv);
  const bool prompted = p_k.defined() && p_k.rows() > 0;
  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(n_heads));
  for (int hd = 0; hd < n_heads; ++hd) {
    const Index c0 = hd * dh;
    const Tensor qh = slice_cols(q, c0, dh);
    const Tensor kh = slice_cols(k, c0, dh);
    const Tensor vh = slice_cols(v, c0, dh);
    Tensor pkh, pvh;
    if (prompted) {
      pkh = slice_cols(p_k, c0, dh);
      pvh = slice_cols(p_v, c0, dh);
    }
    Mat probe;
    heads.push_back(prompted_attention(qh, kh, vh, pkh, pvh, mask,
                                       attn_probe ? &probe : nullptr));
    if (attn_probe) attn_probe->push_back(std::move(probe));
  }
  return matmul(concat_cols(heads), w.wo);
}

Tensor fused_heads_attention(const Tensor& q, const Tensor& k,
                             const Tensor& v, const Tensor& p_k,
                             const Tensor& p_v, int n_heads,
                             const Tensor& mask,
                             std::vector<Mat>* attn_probe) {
  const Index T = q.rows(), d = q.cols();
  if (d % n_heads != 0)
    throw DimensionError("width does not split into heads");
  const Index dh = d / n_heads;
  const bool prompted = p_k.defined() && p_k.rows() > 0;
  const Index np = prompted ? p_k.rows() : 0;
  if (prompted && (p_k.cols() != d || p_v.cols() != d))
    throw DimensionError("prompt width " + p_k.shape_str() +
                         " does not match projections");
  if (mask.rows() != T || mask.cols() != np + T)
    throw DimensionError("mask shape " + mask.shape_str() +
                         " does not cover prompts plus sequence");
  const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(dh));

  // per-head softmax weights, saved for the backward sweep
  auto weights = std::make_shared<std::vector<Mat>>();
  weights->reserve(static_cast<std::size_t>(n_heads));
  Tensor out = Tensor::zeros({T, d});
  Mat& o = out.mutable_value();
  Mat scores(T, np + T);
  for (int h = 0; h < n_heads; ++h) {
    const Index c0 = h * dh;
    if (prompted) {
      scores.leftCols(np).noalias() =
          q.value().middleCols(c0, dh) *
          p_k.value().middleCols(c0, dh).transpose();
      scores.rightCols(T).noalias() = q.value().middleCols(c0, dh) *
                                      k.value().middleCols(c0, dh).transpose();
    } else {
      scores.noalias() = q.value().middleCols(c0, dh) *
                         k.value().middleCols(c0, dh).transpose();
    }
    scores = inv_sqrt * scores + mask.value();
    Mat w(T, np + T);
    for (Index i = 0; i < T; ++i) {
      const Real m = scores.row(i).maxCoeff();
      w.row(i) = (scores.row(i).array() - m).exp();
      w.row(i) /= w.row(i).sum();
    }
    if (prompted) {
      o.middleCols(c0, dh).noalias() =
          w.leftCols(np) * p_v.value().middleCols(c0, dh);
      o.middleCols(c0, dh).noalias() +=
          w.rightCols(T) * v.value().middleCols(c0, dh);
    } else {
      o.middleCols(c0, dh).noalias() = w * v.value().middleCols(c0, dh);
    }
    if (attn_probe) attn_probe->push_back(w);
    weights->push_back(std::move(w));
  }

  if (should_record({&q, &k, &v, &p_k, &p_v})) {
    out.set_requires_grad(true);
    Tensor qc = q, kc = k, vc = v, pkc = p_k, pvc = p_v, oc = out;
    Tape::active()->record([qc, kc, vc, pkc, pvc, oc, weights, n_heads, np,
                            inv_sqrt]() mutable {
      const Index T = qc.rows(), d = qc.cols();
      const Index dh = d / n_heads;
      const bool prompted = np > 0;
      const Mat& go = oc.grad();
      for (int h = 0; h < n_heads; ++h) {
        const Index c0 = h * dh;
        const Mat& w = (*weights)[static_cast<std::size_t>(h)];
        // dW = dOut V'^T ; dV' = W^T dOut
        Mat dw(T, np + T);
        if (prompted) {
          dw.leftCols(np).noalias() =
              go.middleCols(c0, dh) *
              pvc.value().middleCols(c0, dh).transpose();
          dw.rightCols(T).noalias() = go.middleCols(c0, dh) *
                                      vc.value().middleCols(c0, dh).transpose();
        } else {
          dw.noalias() =
              go.middleCols(c0, dh) * vc.value().middleCols(c0, dh).transpose();
        }
        // softmax backward: dS = W o (dW - rowsum(dW o W))
        Mat ds(T, np + T);
        for (Index i = 0; i < T; ++i) {
          const Real dot = dw.row(i).dot(w.row(i));
          ds.row(i) =
              w.row(i).cwiseProduct((dw.row(i).array() - dot).matrix());
        }
        ds *= inv_sqrt;
        if (qc.requires_grad()) {
          if (prompted) {
            qc.grad_buffer().middleCols(c0, dh).noalias() +=
                ds.leftCols(np) * pkc.value().middleCols(c0, dh);
            qc.grad_buffer().middleCols(c0, dh).noalias() +=
                ds.rightCols(T) * kc.value().middleCols(c0, dh);
          } else {
            qc.grad_buffer().middleCols(c0, dh).noalias() +=
                ds * kc.value().middleCols(c0, dh);
          }
        }
        if (kc.requires_grad())
          kc.grad_buffer().middleCols(c0, dh).noalias() +=
              (prompted ? ds.rightCols(T) : ds).transpose() *
              qc.value().middleCols(c0, dh);
        if (prompted && pkc.requires_grad())
          pkc.grad_buffer().middleCols(c0, dh).noalias() +=
              ds.leftCols(np).transpose() * qc.value().middleCols(c0, dh);
        if (vc.requires_grad())
          vc.grad_buffer().middleCols(c0, dh).noalias() +=
              (prompted ? w.rightCols(T) : w).transpose() *
              go.middleCols(c0, dh);
        if (prompted && pvc.requires_grad())
          pvc.grad_buffer().middleCols(c0, dh).noalias() +=
              w.leftCols(np).transpose() * go.middleCols(c0, dh);
      }
    });
  }
  return out;
}

namespace {

Tensor transformer_layer(const Model& model, const PromptSet& prompts,
                         int layer, const Tensor& x, const Tensor& mask,
                         std::vector<Mat>* attn_probe) {
  const LayerWeights& w =
      model.backbone.layers[static_cast<std::size_t>(layer)];
  const Tensor normed = rms_norm_rows(x, w.attn_norm_gain);
  Tensor pk, pv;
  if (model.cfg.layer_prompted(layer) && !prompts.empty()) {
    pk = prompts.key_prompts[static_cast<std::size_t>(layer)];
    pv = prompts.value_prompts[static_cast<std::size_t>(layer)];
  }
  const Tensor q = matmul(normed, w.wq);
  const Tensor k = matmul(normed, w.wk);
  const Tensor v = matmul(normed, w.wv);
  const Tensor heads = fused_heads_attention(q, k, v, pk, pv,
                                             model.cfg.n_heads, mask,
                                             attn_probe);
  const Tensor attn = matmul(heads, w.wo);
  const Tensor mid = add(x, attn);
  const Tensor ffn_in = rms_norm_rows(mid, w.ffn_norm_gain);
  const Tensor ffn = matmul(silu(matmul(ffn_in, w.ffn_w1)), w.ffn_w2);
  return add(mid, ffn);
}

Tensor embed_sequence(const Model& model, const SerializedSequence& s,
                      const Mat& frame_features) {
  // contiguous runs of tokens vs frames become gather/projection blocks
  std::vector<Tensor> blocks;
  const int n = s.length();
  int i = 0;
  while (i < n) {
    if (s.token_ids[static_cast<std::size_t>(i)] >= 0) {
      std::vector<int> ids;
      while (i < n && s.token_ids[static_cast<std::size_t>(i)] >= 0)
        ids.push_back(s.token_ids[static_cast<std::size_t>(i++)]);
      blocks.push_back(select_rows(model.backbone.token_embedding, ids));
    } else {
      const int first = s.frame_slots[static_cast<std::size_t>(i)];
      int count = 0;
      while (i < n && s.token_ids[static_cast<std::size_t>(i)] < 0) {
        ++count;
        ++i;
      }
      const Tensor feats =
          Tensor::from_matrix(frame_features.middleRows(first, count));
      blocks.push_back(matmul(feats, model.backbone.frame_projection));
    }
  }
  Tensor x = blocks.size() == 1 ? blocks[0] : concat_rows(blocks);
  const Tensor pe =
      Tensor::from_matrix(model.backbone.positional.topRows(n));
  return add(x, pe);
}

}  // namespace

Tensor pool_e_prompt(const PromptSet& prompts) {
  if (prompts.e_end <= prompts.g_end)
    throw ConfigError("pool_e_prompt: configuration has no expert layers");
  if (prompts.empty())
    throw ConfigError("pool_e_prompt: prompt length is zero");
  const std::size_t last = static_cast<std::size_t>(prompts.e_end - 1);
  return mean_rows(
      concat_rows(prompts.key_prompts[last], prompts.value_prompts[last]));
}

static ForwardOutput forward_layout(const Model& model,
                                    const PromptSet& prompts,
                                    const SerializedSequence& s,
                                    const Mat& frame_features,
                                    ForwardProbe* probe) {
  const int T = s.length();
  const int np = (!prompts.empty()) ? prompts.prompt_len : 0;
  const Tensor mask_prompted = make_causal_mask(T, np);
  const Tensor mask_bare = np > 0 ? make_causal_mask(T, 0) : mask_prompted;

  Tensor x = embed_sequence(model, s, frame_features);
  for (int l = 0; l < model.cfg.n_layers; ++l) {
    const bool use_prompts = model.cfg.layer_prompted(l) && !prompts.empty();
    std::vector<Mat> layer_probe;
    x = transformer_layer(model, prompts, l, x,
                          use_prompts ? mask_prompted : mask_bare,
                          probe ? &layer_probe : nullptr);
    if (probe) probe->attention.push_back(std::move(layer_probe));
  }
  ForwardOutput out;
  out.features = rms_norm_rows(x, model.backbone.final_norm_gain);
  out.layout = s;
  out.pooled_e = model.cfg.has_e_layers() && !prompts.empty()
                     ? pool_e_prompt(prompts)
                     : Tensor::zeros({model.cfg.d_model});
  return out;
}

ForwardOutput forward(const Model& model, const PromptSet& prompts,
                      const MultimodalSequence& seq, SegmentOrder order,
                      ForwardProbe* probe) {
  const SerializedSequence s = serialize_sequence(seq, order, model.cfg);
  return forward_layout(model, prompts, s, seq.frame_features, probe);
}

ForwardOutput forward_with_answer(const Model& model, const PromptSet& prompts,
                                  const MultimodalSequence& seq,
                                  const std::vector<int>& answer,
                                  ForwardProbe* probe) {
  const SerializedSequence s = serialize_with_answer(seq, answer, model.cfg);
  return forward_layout(model, prompts, s, seq.frame_features, probe);
}

Tensor project_head(const Model& model, const Tensor& feature_rows,
                    const Tensor& pooled_e, HeadKind head) {
  const Tensor cat = concat_cols(
      {feature_rows, repeat_rows(pooled_e, feature_rows.rows())});
  switch (head) {
    case HeadKind::kAnswer:
      return add_row_broadcast(matmul(cat, model.heads.answer_w),
                               model.heads.answer_b);
    case HeadKind::kQuestion:
      return add_row_broadcast(matmul(cat, model.heads.question_w),
                               model.heads.question_b);
    case HeadKind::kVideo:
      return add_row_broadcast(matmul(cat, model.heads.video_w),
                               model.heads.video_b);
  }
  throw ContractError("unknown projection head");
}

std::int64_t count_trainable_params(const ModelConfig& cfg) {
  const std::int64_t prompt_params = static_cast<std::int64_t>(
      cfg.prompted_layers()) * 2 * cfg.prompt_len * cfg.d_model;
  const std::int64_t head_params =
      2 * (static_cast<std::int64_t>(2 * cfg.d_model) * cfg.vocab_size +
           cfg.vocab_size) +
      static_cast<std::int64_t>(2 * cfg.d_model) * cfg.codebook_size +
      cfg.codebook_size;
  return prompt_params + head_params;
}

}  // namespace colpro
