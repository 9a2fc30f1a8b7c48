#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "colpro/ops.hpp"
#include "colpro/rng.hpp"
#include "colpro/task_suite.hpp"
#include "colpro/tensor.hpp"
#include "colpro/vocab.hpp"

namespace colpro {

/// Geometry of the miniature decoder. Prompt placement follows half-open
/// ranges: layers [0, g_end) carry general prompts, [g_end, e_end) carry
/// expert prompts, [e_end, n_layers) run bare. g_end == 0 disables general
/// prompts, e_end == g_end disables expert prompts, and both degenerate
/// configurations must still run.
struct ModelConfig {
  int n_layers = 8;
  int d_model = 64;
  int n_heads = 4;
  int vocab_size = 0;
  int codebook_size = 32;
  int feat_dim = 32;
  int max_seq_len = 128;
  int prompt_len = 10;  // key/value prompt rows per prompted layer
  int g_end = 2;
  int e_end = 5;
  int ffn_mult = 4;

  struct Markers {
    int question = -1, video = -1, choices = -1, answer = -1, negatives = -1,
        separator = -1;
  } markers;

  void validate() const;
  int head_dim() const { return d_model / n_heads; }
  int prompted_layers() const { return e_end; }
  bool has_e_layers() const { return e_end > g_end; }
  bool layer_prompted(int layer) const {
    return prompt_len > 0 && layer < e_end;
  }

  static ModelConfig for_vocab(const Vocab& vocab);
};

struct LayerWeights {
  Tensor wq, wk, wv, wo;  // d x d
  Tensor attn_norm_gain, ffn_norm_gain;  // 1 x d
  Tensor ffn_w1, ffn_w2;  // d x (mult*d), (mult*d) x d
};

/// The frozen decoder trunk. Produced once by the self-supervised warmup and
/// digest-locked before any sequential training; prompts and heads are the
/// only parameters that move afterwards.
struct Backbone {
  Tensor token_embedding;   // vocab x d
  Tensor frame_projection;  // feat_dim x d
  std::vector<LayerWeights> layers;
  Tensor final_norm_gain;   // 1 x d
  Tensor lm_head;           // d x vocab, used only by the warmup objective
  Mat positional;           // max_seq_len x d sinusoidal table (not a param)

  static Backbone init(const ModelConfig& cfg, Rng& rng);
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  void set_trainable(bool trainable);
  std::uint64_t digest() const;
};

/// Trainable key/value prompt matrices per prompted layer.
struct PromptSet {
  int g_end = 0, e_end = 0, prompt_len = 0, d_model = 0;
  std::vector<Tensor> key_prompts;    // one (N_p x d) per layer < e_end
  std::vector<Tensor> value_prompts;

  static PromptSet init(const ModelConfig& cfg, Rng& rng);
  bool is_g_layer(int layer) const { return layer < g_end; }
  bool empty() const { return key_prompts.empty() || prompt_len == 0; }
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  /// Same expert prompts, general prompts replaced by constant copies, so a
  /// backward pass through the result reaches E-parameters only.
  PromptSet with_g_detached() const;
};

enum class HeadKind { kAnswer, kQuestion, kVideo };

/// Projection heads shared by the three objectives: each consumes
/// [feature ; pooled expert prompt] (width 2d).
struct Heads {
  Tensor answer_w, answer_b;      // 2d x vocab, 1 x vocab
  Tensor question_w, question_b;  // 2d x vocab
  Tensor video_w, video_b;        // 2d x codebook

  static Heads init(const ModelConfig& cfg);
  std::vector<std::pair<std::string, Tensor>> named_params() const;
};

struct Model {
  ModelConfig cfg;
  Backbone backbone;
  Heads heads;
};

Model build_model(const ModelConfig& cfg, std::uint64_t seed);

/// One training/evaluation item in model terms.
struct MultimodalSequence {
  std::vector<int> question_tokens;
  Mat frame_features;                // N_v x feat_dim
  std::vector<int> frame_codebook_ids;
  std::vector<std::vector<int>> choice_blocks;
  std::vector<int> answer_tokens;
  std::vector<std::vector<int>> negative_question_blocks;
};

MultimodalSequence to_sequence(const Sample& sample);

/// Loss-specific segment orders; each objective conditions on a different
/// context, which one causal ordering cannot provide.
enum class SegmentOrder { kAnswer, kQuestion, kVideo };

struct Span {
  int begin = -1, end = -1;  // [begin, end)
  int size() const { return end - begin; }
  bool present() const { return begin >= 0; }
};

/// Token/frame layout of one serialized pass. Frame positions have
/// token_ids[p] == -1 and frame_slots[p] set; the segment spans cover exactly
/// the real question/video/answer positions.
struct SerializedSequence {
  std::vector<int> token_ids;
  std::vector<int> frame_slots;
  Span question, video, answer, choices, negatives;
  int length() const { return static_cast<int>(token_ids.size()); }
};

SerializedSequence serialize_sequence(const MultimodalSequence& seq,
                                      SegmentOrder order,
                                      const ModelConfig& cfg);
/// Answer-order serialization with a candidate answer substituted (Eq.-style
/// multiple-choice scoring).
SerializedSequence serialize_with_answer(const MultimodalSequence& seq,
                                         const std::vector<int>& answer,
                                         const ModelConfig& cfg);

/// Additive attention mask: row = query position (T real positions), column =
/// prompt rows then real positions. Prompts visible to every query; real
/// positions causal.
Tensor make_causal_mask(int seq_len, int prompt_len);

/// Scaled dot-product attention over [prompts ; real keys/values] for one
/// head. Prompt tensors may be undefined or zero-row for the vanilla case.
/// attn_probe, when set, receives the post-softmax weights (values only).
Tensor prompted_attention(const Tensor& h_q, const Tensor& h_k,
                          const Tensor& h_v, const Tensor& p_k,
                          const Tensor& p_v, const Tensor& mask,
                          Mat* attn_probe = nullptr);

/// Multi-head prompted attention: projects h, runs every head, concatenates
/// and applies the output projection.
Tensor multihead_prompted(const Tensor& h, const LayerWeights& w, int n_heads,
                          const Tensor& p_k, const Tensor& p_v,
                          const Tensor& mask,
                          std::vector<Mat>* attn_probe = nullptr);

/// Numerically identical to running prompted_attention per head and
/// concatenating, but as one taped node with a hand-written backward; the
/// layer stack uses this, the composed ops remain the cross-checking route.
Tensor fused_heads_attention(const Tensor& q, const Tensor& k,
                             const Tensor& v, const Tensor& p_k,
                             const Tensor& p_v, int n_heads,
                             const Tensor& mask,
                             std::vector<Mat>* attn_probe = nullptr);

struct ForwardOutput {
  Tensor features;  // T x d, final-normed
  SerializedSequence layout;
  Tensor pooled_e;  // width-d pooled expert prompt (zero when no E layers)
};

struct ForwardProbe {
  // per layer, per head post-softmax attention weights
  std::vector<std::vector<Mat>> attention;
};

ForwardOutput forward(const Model& model, const PromptSet& prompts,
                      const MultimodalSequence& seq, SegmentOrder order,
                      ForwardProbe* probe = nullptr);
/// Answer-order forward with a substituted candidate answer (the Eq.-11
/// style multiple-choice scoring path).
ForwardOutput forward_with_answer(const Model& model, const PromptSet& prompts,
                                  const MultimodalSequence& seq,
                                  const std::vector<int>& answer,
                                  ForwardProbe* probe = nullptr);

/// Mean over the key and value prompt rows of the last expert layer.
Tensor pool_e_prompt(const PromptSet& prompts);

/// Per-position logits: concatenates each feature row with the pooled expert
/// prompt and applies the head's affine map. Softmax is the consumer's job.
Tensor project_head(const Model& model, const Tensor& feature_rows,
                    const Tensor& pooled_e, HeadKind head);

/// Prompt parameters (2 * N_p * d per prompted layer) plus head parameters.
std::int64_t count_trainable_params(const ModelConfig& cfg);

}  // namespace colpro
