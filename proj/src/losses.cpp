#include "colpro/losses.hpp"

#include <cmath>
#include <iostream>

#include "colpro/errors.hpp"
#include "colpro/ops.hpp"

namespace colpro {

void LossConfig::validate() const {
  if (!(tau > 0)) throw ConfigError("temperature must be positive");
  if (lambda_a < 0 || lambda_q < 0 || lambda_v < 0)
    throw ConfigError("loss weights must be nonnegative");
}

Tensor pooled_cosine_sim(const Tensor& a, const Tensor& b) {
  if (a.rows() == 0 || b.rows() == 0)
    throw ContractError("pooled_cosine_sim of an empty feature matrix");
  if (a.cols() != b.cols())
    throw DimensionError("pooled_cosine_sim width mismatch: " + a.shape_str() +
                         " vs " + b.shape_str());
  const Tensor pa = mean_rows(a);
  const Tensor pb = mean_rows(b);
  if (pa.value().norm() < 1e-12 || pb.value().norm() < 1e-12) {
    std::cerr << "[colpro] warning: degenerate pooled vector in cosine "
                 "similarity, returning 0\n";
    return Tensor::scalar(0.0);
  }
  return cosine_sim(pa, pb);
}

namespace {

// Prediction rows for a trailing segment: the position before each target
// token (segment marker first, then the tokens themselves, teacher-forced).
std::vector<int> prediction_rows(const Span& segment) {
  std::vector<int> rows;
  for (int p = segment.begin - 1; p < segment.end - 1; ++p) rows.push_back(p);
  return rows;
}

Tensor segment_cross_entropy(const Model& model, const ForwardOutput& fo,
                             const Span& segment,
                             const std::vector<int>& targets, HeadKind head) {
  const Tensor rows = select_rows(fo.features, prediction_rows(segment));
  const Tensor logits = project_head(model, rows, fo.pooled_e, head);
  return cross_entropy_rows(logits, targets);
}

}  // namespace

Tensor loss_kap(const Model& model, const ForwardOutput& fo,
                const std::vector<int>& target_answer) {
  if (target_answer.empty())
    throw ContractError("loss_kap: empty target answer");
  if (!fo.layout.answer.present() ||
      fo.layout.answer.size() != static_cast<int>(target_answer.size()))
    throw ContractError(
        "loss_kap: forward output lacks a matching answer segment (wrong "
        "segment order?)");
  return segment_cross_entropy(model, fo, fo.layout.answer, target_answer,
                               HeadKind::kAnswer);
}

Tensor loss_question_gen(const Model& model, const ForwardOutput& fo,
                         const std::vector<int>& question_tokens,
                         bool expect_negatives) {
  if (question_tokens.empty())
    throw ContractError("loss_question_gen: empty question");
  if (expect_negatives && !fo.layout.negatives.present())
    throw ContractError(
        "loss_question_gen: negative-question block missing from the "
        "forward context while the negative term is enabled");
  if (!fo.layout.question.present() ||
      fo.layout.question.size() != static_cast<int>(question_tokens.size()))
    throw ContractError("loss_question_gen: question segment mismatch");
  return segment_cross_entropy(model, fo, fo.layout.question, question_tokens,
                               HeadKind::kQuestion);
}

Tensor loss_video_dyn(const Model& model, const ForwardOutput& fo,
                      const std::vector<int>& frame_codebook_ids) {
  const int nv = static_cast<int>(frame_codebook_ids.size());
  if (nv < 2)
    throw ContractError("loss_video_dyn: needs at least two frames, got " +
                        std::to_string(nv));
  if (!fo.layout.video.present() || fo.layout.video.size() != nv)
    throw ContractError("loss_video_dyn: video segment mismatch");
  // frame n predicts the codebook id of frame n+1; frame 0 is context only
  std::vector<int> rows;
  std::vector<int> targets;
  for (int n = 0; n < nv - 1; ++n) {
    rows.push_back(fo.layout.video.begin + n);
    targets.push_back(frame_codebook_ids[static_cast<std::size_t>(n + 1)]);
  }
  const Tensor feat = select_rows(fo.features, rows);
  const Tensor logits =
      project_head(model, feat, fo.pooled_e, HeadKind::kVideo);
  return cross_entropy_rows(logits, targets);
}

namespace {

std::vector<Tensor> similarity_scores(const Tensor& pooled_e,
                                      const std::vector<Tensor>& features,
                                      Real inv_tau) {
  std::vector<Tensor> sims;
  sims.reserve(features.size());
  const Tensor pe = pooled_e;  // 1 x d vector as a one-row matrix
  for (const Tensor& f : features)
    sims.push_back(scale(pooled_cosine_sim(pe, f), inv_tau));
  return sims;
}

}  // namespace

Tensor loss_question_neg(const Tensor& pooled_e,
                         const std::vector<Tensor>& positive_features,
                         const std::vector<Tensor>& negative_features,
                         Real tau, bool log_form) {
  if (!(tau > 0)) throw ConfigError("loss_question_neg: tau must be > 0");
  if (positive_features.empty() ||
      positive_features.size() != negative_features.size())
    throw ContractError(
        "loss_question_neg: need one positive and one negative block per "
        "batch sample");
  const Real inv_tau = 1.0 / tau;
  const std::vector<Tensor> s_pos =
      similarity_scores(pooled_e, positive_features, inv_tau);
  const std::vector<Tensor> s_neg =
      similarity_scores(pooled_e, negative_features, inv_tau);

  std::vector<Tensor> all = s_pos;
  all.insert(all.end(), s_neg.begin(), s_neg.end());
  const Tensor stacked = stack_scalars(all);

  if (log_form) {
    const Tensor lse = logsumexp(stacked);
    std::vector<Tensor> per_sample;
    per_sample.reserve(s_pos.size());
    for (const Tensor& sp : s_pos) per_sample.push_back(sub(lse, sp));
    return mean_all(stack_scalars(per_sample));
  }
  // ratio form as printed: the positive share of the two-sided partition
  // function, negated into minimization form
  const Tensor shares = softmax_rows(stacked);
  const Tensor pos_shares =
      slice_cols(shares, 0, static_cast<Index>(s_pos.size()));
  return scale(mean_all(pos_shares), -1.0);
}

Tensor loss_video_con(const Tensor& pooled_e,
                      const std::vector<Tensor>& video_features, Real tau) {
  if (!(tau > 0)) throw ConfigError("loss_video_con: tau must be > 0");
  if (video_features.empty())
    throw ContractError("loss_video_con: empty batch");
  const Real inv_tau = 1.0 / tau;
  const std::vector<Tensor> sims =
      similarity_scores(pooled_e, video_features, inv_tau);
  const Tensor stacked = stack_scalars(sims);
  const Tensor lse = logsumexp(stacked);
  std::vector<Tensor> per_sample;
  per_sample.reserve(sims.size());
  for (const Tensor& s : sims) per_sample.push_back(sub(lse, s));
  return mean_all(stack_scalars(per_sample));
}

TotalLoss total_loss(const std::vector<SampleLossInputs>& batch,
                     const Tensor& pooled_e, const LossConfig& cfg) {
  cfg.validate();
  if (batch.empty()) throw ContractError("total_loss: empty batch");

  auto batch_mean = [&](Tensor SampleLossInputs::*member,
                        const char* what) {
    std::vector<Tensor> terms;
    for (const SampleLossInputs& s : batch) {
      if (!(s.*member).defined())
        throw ContractError(std::string("total_loss: enabled term '") + what +
                            "' is missing its per-sample input");
      terms.push_back(s.*member);
    }
    return mean_all(stack_scalars(terms));
  };

  TotalLoss out;
  std::vector<Tensor> weighted;

  const Tensor l_a = batch_mean(&SampleLossInputs::answer_loss, "answer");
  out.values.l_a = l_a.scalar_value();
  weighted.push_back(scale(l_a, cfg.lambda_a));

  if (cfg.use_q_gen) {
    const Tensor l = batch_mean(&SampleLossInputs::question_gen_loss,
                                "question_gen");
    out.values.l_q_gen = l.scalar_value();
    weighted.push_back(scale(l, cfg.lambda_q));
  }
  if (cfg.use_q_neg) {
    std::vector<Tensor> pos, neg;
    for (const SampleLossInputs& s : batch) {
      if (!s.question_pos_features.defined() ||
          !s.question_neg_features.defined())
        throw ContractError(
            "total_loss: negative-question term enabled but question "
            "features are missing");
      pos.push_back(s.question_pos_features);
      neg.push_back(s.question_neg_features);
    }
    const Tensor l =
        loss_question_neg(pooled_e, pos, neg, cfg.tau, cfg.q_neg_log_form);
    out.values.l_q_neg = l.scalar_value();
    weighted.push_back(scale(l, cfg.lambda_q));
  }
  if (cfg.use_v_dyn) {
    const Tensor l = batch_mean(&SampleLossInputs::video_dyn_loss,
                                "video_dyn");
    out.values.l_v_dyn = l.scalar_value();
    weighted.push_back(scale(l, cfg.lambda_v));
  }
  if (cfg.use_v_con) {
    std::vector<Tensor> vids;
    for (const SampleLossInputs& s : batch) {
      if (!s.video_features.defined())
        throw ContractError(
            "total_loss: video-contrastive term enabled but video features "
            "are missing");
      vids.push_back(s.video_features);
    }
    const Tensor l = loss_video_con(pooled_e, vids, cfg.tau);
    out.values.l_v_con = l.scalar_value();
    weighted.push_back(scale(l, cfg.lambda_v));
  }

  Tensor total = weighted.front();
  for (std::size_t i = 1; i < weighted.size(); ++i)
    total = add(total, weighted[i]);
  out.total = total;
  out.values.total = total.scalar_value();
  return out;
}

SampleLossInputs compute_sample_losses(const Model& model,
                                       const PromptSet& prompts,
                                       const MultimodalSequence& seq,
                                       const LossConfig& cfg) {
  cfg.validate();
  SampleLossInputs out;

  // Answer objective: general and expert prompts both live.
  const ForwardOutput fo_a =
      forward(model, prompts, seq, SegmentOrder::kAnswer);
  out.answer_loss = loss_kap(model, fo_a, seq.answer_tokens);

  // Question objectives run with general prompts detached: they train the
  // expert prompts (and the question head) only.
  if (cfg.use_q_gen || cfg.use_q_neg) {
    const PromptSet routed = prompts.with_g_detached();
    const ForwardOutput fo_q =
        forward(model, routed, seq, SegmentOrder::kQuestion);
    if (cfg.use_q_gen)
      out.question_gen_loss = loss_question_gen(
          model, fo_q, seq.question_tokens, cfg.use_q_neg);
    if (cfg.use_q_neg) {
      if (!fo_q.layout.negatives.present())
        throw ContractError(
            "negative-question term enabled but the sample has no negative "
            "questions");
      out.question_pos_features =
          slice_rows(fo_q.features, fo_q.layout.question.begin,
                     fo_q.layout.question.size());
      out.question_neg_features =
          slice_rows(fo_q.features, fo_q.layout.negatives.begin,
                     fo_q.layout.negatives.size());
    }
  }

  if (cfg.use_v_dyn) {
    const PromptSet routed = prompts.with_g_detached();
    const ForwardOutput fo_v =
        forward(model, routed, seq, SegmentOrder::kVideo);
    out.video_dyn_loss =
        loss_video_dyn(model, fo_v, seq.frame_codebook_ids);
  }
  if (cfg.use_v_con) {
    // distillation target: the projected input frames, a constant
    out.video_features = matmul(Tensor::from_matrix(seq.frame_features),
                                model.backbone.frame_projection.detached());
  }
  return out;
}

}  // namespace colpro
