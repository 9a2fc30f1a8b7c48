#pragma once

#include <vector>

#include "colpro/model.hpp"
#include "colpro/tensor.hpp"

namespace colpro {

struct LossConfig {
  Real tau = 1.0;
  Real lambda_a = 1.0, lambda_q = 1.0, lambda_v = 1.0;
  bool use_q_gen = true;
  bool use_q_neg = true;
  bool use_v_dyn = true;
  bool use_v_con = true;
  /// Log-form negative-guided loss by default; the bounded ratio variant is
  /// kept behind this switch for fidelity experiments.
  bool q_neg_log_form = true;

  void validate() const;
};

struct LossBreakdown {
  double l_a = 0, l_q_gen = 0, l_q_neg = 0, l_v_dyn = 0, l_v_con = 0,
         total = 0;
};

/// Cosine of the mean-pooled rows of two token-feature matrices. Returns a
/// constant 0 (with a stderr warning) when either pooled vector is
/// numerically zero.
Tensor pooled_cosine_sim(const Tensor& a, const Tensor& b);

/// Teacher-forced answer cross entropy, mean per answer position. Requires an
/// answer-order forward.
Tensor loss_kap(const Model& model, const ForwardOutput& fo,
                const std::vector<int>& target_answer);

/// Autoregressive cross entropy over the positive question tokens only; the
/// negative block is context, never a target.
Tensor loss_question_gen(const Model& model, const ForwardOutput& fo,
                         const std::vector<int>& question_tokens,
                         bool expect_negatives);

/// Negative-guided contrastive term: pulls the pooled expert prompt toward
/// positive question features against positives+negatives of the batch.
Tensor loss_question_neg(const Tensor& pooled_e,
                         const std::vector<Tensor>& positive_features,
                         const std::vector<Tensor>& negative_features,
                         Real tau, bool log_form = true);

/// Next-frame codebook prediction, mean over frames 2..N_v; the first frame
/// is context only.
Tensor loss_video_dyn(const Model& model, const ForwardOutput& fo,
                      const std::vector<int>& frame_codebook_ids);

/// Batch-contrastive distillation of video features into the expert prompt.
Tensor loss_video_con(const Tensor& pooled_e,
                      const std::vector<Tensor>& video_features, Real tau);

/// Per-sample ingredients gathered by the per-loss forward passes.
struct SampleLossInputs {
  Tensor answer_loss;
  Tensor question_gen_loss;
  Tensor video_dyn_loss;
  Tensor question_pos_features;  // X_q rows from the question-order pass
  Tensor question_neg_features;  // negative-block rows from the same pass
  Tensor video_features;         // projected input frames (constant)
};

struct TotalLoss {
  LossBreakdown values;
  Tensor total;
};

/// Weighted combiner. Disabled terms are omitted entirely (no residual
/// gradient); enabled terms missing their inputs are a contract error.
TotalLoss total_loss(const std::vector<SampleLossInputs>& batch,
                     const Tensor& pooled_e, const LossConfig& cfg);

/// Runs the per-loss forward passes for one sample. The answer pass sees live
/// general prompts; the question/video passes see them detached, so general
/// prompts learn from the answer objective only while expert prompts learn
/// from everything.
SampleLossInputs compute_sample_losses(const Model& model,
                                       const PromptSet& prompts,
                                       const MultimodalSequence& seq,
                                       const LossConfig& cfg);

}  // namespace colpro
