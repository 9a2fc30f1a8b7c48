#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "colpro/losses.hpp"
#include "colpro/metrics.hpp"
#include "colpro/model.hpp"
#include "colpro/optimizer.hpp"
#include "colpro/task_suite.hpp"

namespace colpro {

struct TrainConfig {
  int epochs = 5;
  int batch_size = 8;
  int grad_accum_steps = 1;
  AdamWConfig optimizer;  // lr 0.05 / wd 0.15, the low end of the documented
                          // search ranges; betas (0.9, 0.95)

  int pretrain_samples = 512;
  int pretrain_epochs = 3;
  int pretrain_batch = 8;
  /// Extra weight on answer-segment targets in the warmup objective; answer
  /// tokens are a sliver of the stream and carry all the grounding.
  Real pretrain_answer_weight = 4.0;
  AdamWConfig pretrain_optimizer{1e-3, 0.9, 0.95, 1e-8, 0.01};

  std::uint64_t seed = 7;
  LossConfig loss;
  ModelConfig model;

  void validate() const;
};

/// Canonical text of a training configuration; its digest identifies runs.
std::string canonical_train_config(const TrainConfig& cfg);

/// Instrumented access to suite data. Every sample fetched during a run lands
/// in the log with its split, which is what the rehearsal-free audit checks.
class DataProvider {
 public:
  explicit DataProvider(const Suite& suite) : suite_(suite) {}

  void begin_stage(int stage_index, int task_id);

  const Sample& train_sample(int task_id, int index);
  const Sample& eval_sample(int task_id, int index);
  int train_size(int task_id) const;
  int eval_size(int task_id) const;
  const Suite& suite() const { return suite_; }

  struct StageAccess {
    int stage = -1;
    int task_id = -1;
    std::set<int> train_task_ids;            // tasks touched via train split
    std::set<int> train_sample_ids;          // which train samples
    std::size_t train_sample_count = 0;      // == train_sample_ids.size()
    std::size_t train_accesses = 0;
    std::size_t eval_accesses = 0;
  };
  const std::vector<StageAccess>& access_log() const { return stages_; }

  /// Throws AuditError unless every stage's train accesses cover exactly its
  /// own task's train set and nothing else.
  void audit_rehearsal_free() const;

 private:
  const Suite& suite_;
  std::vector<StageAccess> stages_;
};

struct StageLog {
  std::vector<LossBreakdown> per_epoch;  // mean per-batch breakdown
  double seconds = 0;
};

struct RunReport {
  std::uint64_t suite_digest = 0;
  std::uint64_t config_digest = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> task_order;
  AccuracyMatrix matrix;
  double avg_acc_value = 0;
  double avg_fog_value = 0;
  std::vector<std::vector<LossBreakdown>> loss_curves;  // [stage][epoch]
  std::int64_t trainable_params = 0;
  std::uint64_t backbone_digest_before = 0;
  std::uint64_t backbone_digest_after = 0;
  std::vector<DataProvider::StageAccess> audit;
  bool audit_ok = false;
  std::vector<double> stage_seconds;  // diagnostics; excluded from the
                                      // canonical report text
};

struct PretrainLog {
  std::vector<double> per_epoch_loss;
};

/// Builds a fresh model and runs the self-supervised next-token warmup over
/// an out-of-task corpus drawn from the suite's generator, then freezes it.
Backbone pretrain_backbone(const Suite& suite, const TrainConfig& cfg,
                           PretrainLog* log = nullptr);

/// Candidate score: sum of per-token log-probabilities of the candidate's
/// tokens under the answer-order forward and the answer head.
double score_candidate(const Model& model, const PromptSet& prompts,
                       const MultimodalSequence& seq,
                       const std::vector<int>& candidate);
std::vector<double> candidate_scores(const Model& model,
                                     const PromptSet& prompts,
                                     const MultimodalSequence& seq);
/// Argmax candidate, ties resolved toward the lower index.
int predict_answer(const Model& model, const PromptSet& prompts,
                   const MultimodalSequence& seq);

/// Accuracy over a task's evaluation (or train) split via the provider.
double evaluate(const Model& model, const PromptSet& prompts,
                DataProvider& data, int task_id, bool train_split = false);

/// Trains prompts and heads on one task for cfg.epochs epochs; epochs == 0 is
/// a bitwise no-op. Only the given task's train split is ever requested.
StageLog train_task(Model& model, PromptSet& prompts, DataProvider& data,
                    int task_id, const TrainConfig& cfg, AdamW& opt,
                    Rng& stage_rng);

/// Full sequential run over the given learning order. When `pretrained` is
/// null the backbone warmup runs internally; either way the backbone digest
/// must be identical before and after, and the rehearsal-free audit must
/// pass, else AuditError.
RunReport train_sequence(const Suite& suite,
                         const std::vector<std::string>& order,
                         const TrainConfig& cfg,
                         const Backbone* pretrained = nullptr);

}  // namespace colpro
