#include "colpro/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "colpro/digest.hpp"
#include "colpro/errors.hpp"
#include "colpro/ops.hpp"
#include "colpro/textio.hpp"

namespace colpro {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (grad_accum_steps < 1) throw ConfigError("grad_accum_steps must be >= 1");
  if (pretrain_samples < 1 || pretrain_epochs < 0 || pretrain_batch < 1)
    throw ConfigError("bad warmup settings");
  loss.validate();
  model.validate();
}

std::string canonical_train_config(const TrainConfig& c) {
  std::ostringstream os;
  os << "epochs=" << c.epochs << " batch=" << c.batch_size
     << " accum=" << c.grad_accum_steps << " lr=" << fmt_real(c.optimizer.lr)
     << " b1=" << fmt_real(c.optimizer.beta1)
     << " b2=" << fmt_real(c.optimizer.beta2)
     << " eps=" << fmt_real(c.optimizer.eps)
     << " wd=" << fmt_real(c.optimizer.weight_decay)
     << " pt_n=" << c.pretrain_samples << " pt_e=" << c.pretrain_epochs
     << " pt_b=" << c.pretrain_batch
     << " pt_aw=" << fmt_real(c.pretrain_answer_weight)
     << " pt_lr=" << fmt_real(c.pretrain_optimizer.lr)
     << " pt_wd=" << fmt_real(c.pretrain_optimizer.weight_decay)
     << " seed=" << c.seed << " tau=" << fmt_real(c.loss.tau)
     << " la=" << fmt_real(c.loss.lambda_a)
     << " lq=" << fmt_real(c.loss.lambda_q)
     << " lv=" << fmt_real(c.loss.lambda_v) << " qg=" << c.loss.use_q_gen
     << " qn=" << c.loss.use_q_neg << " vd=" << c.loss.use_v_dyn
     << " vc=" << c.loss.use_v_con << " qlog=" << c.loss.q_neg_log_form
     << " L=" << c.model.n_layers << " d=" << c.model.d_model
     << " m=" << c.model.n_heads << " V=" << c.model.vocab_size
     << " K=" << c.model.codebook_size << " F=" << c.model.feat_dim
     << " T=" << c.model.max_seq_len << " Np=" << c.model.prompt_len
     << " g=" << c.model.g_end << " e=" << c.model.e_end
     << " ffn=" << c.model.ffn_mult;
  return os.str();
}

void DataProvider::begin_stage(int stage_index, int task_id) {
  StageAccess s;
  s.stage = stage_index;
  s.task_id = task_id;
  stages_.push_back(std::move(s));
}

namespace {

const Task& task_by_id(const Suite& suite, int task_id) {
  for (const Task& t : suite.tasks)
    if (t.id == task_id) return t;
  throw ContractError("unknown task id " + std::to_string(task_id));
}

}  // namespace

const Sample& DataProvider::train_sample(int task_id, int index) {
  if (stages_.empty())
    throw ContractError("train data requested outside any training stage");
  const Task& t = task_by_id(suite_, task_id);
  const Sample& s = t.train.at(static_cast<std::size_t>(index));
  StageAccess& st = stages_.back();
  st.train_task_ids.insert(task_id);
  st.train_sample_ids.insert(s.sample_id);
  st.train_sample_count = st.train_sample_ids.size();
  ++st.train_accesses;
  return s;
}

const Sample& DataProvider::eval_sample(int task_id, int index) {
  const Task& t = task_by_id(suite_, task_id);
  if (!stages_.empty()) ++stages_.back().eval_accesses;
  return t.eval.at(static_cast<std::size_t>(index));
}

int DataProvider::train_size(int task_id) const {
  return static_cast<int>(task_by_id(suite_, task_id).train.size());
}

int DataProvider::eval_size(int task_id) const {
  return static_cast<int>(task_by_id(suite_, task_id).eval.size());
}

void DataProvider::audit_rehearsal_free() const {
  for (const StageAccess& st : stages_) {
    for (int tid : st.train_task_ids)
      if (tid != st.task_id)
        throw AuditError("stage " + std::to_string(st.stage) +
                         " trained on task " + std::to_string(tid) +
                         " while task " + std::to_string(st.task_id) +
                         " was current");
    if (st.train_accesses > 0) {
      // exact-set check: each stage must touch its own task's train set, all
      // of it and nothing else
      const Task& t = task_by_id(suite_, st.task_id);
      std::set<int> expected;
      for (const Sample& s : t.train) expected.insert(s.sample_id);
      if (st.train_sample_ids != expected)
        throw AuditError("stage " + std::to_string(st.stage) +
                         " did not cover exactly its task's train set");
    }
  }
}

Backbone pretrain_backbone(const Suite& suite, const TrainConfig& cfg,
                           PretrainLog* log) {
  cfg.validate();
  if (cfg.model.vocab_size != suite.vocab.size())
    throw ConfigError("model vocab_size does not match the suite vocabulary");

  Rng root(cfg.seed);
  Rng model_rng = root.fork(0x11);
  Model model = build_model(cfg.model, model_rng.next_u64());

  // Warmup corpus: fresh generator draws, ids far outside any task range.
  const auto& types = question_types(suite.config.family);
  std::vector<MultimodalSequence> corpus;
  Rng corpus_rng = root.fork(0x12);
  for (int i = 0; i < cfg.pretrain_samples; ++i) {
    const std::string& type = types[static_cast<std::size_t>(i) %
                                    types.size()];
    Sample s = generate_extra_sample(
        suite.config, suite.codebook, suite.vocab, type, /*task_id=*/-1,
        /*sample_id=*/90000000 + i, corpus_rng.fork(static_cast<std::uint64_t>(i)));
    corpus.push_back(to_sequence(s));
  }

  model.backbone.set_trainable(true);
  AdamW opt(model.backbone.named_params(), cfg.pretrain_optimizer);
  const PromptSet no_prompts;  // warmup runs the vanilla path

  Rng shuffle_rng = root.fork(0x13);
  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    std::vector<int> idx(corpus.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    Rng erng = shuffle_rng.fork(static_cast<std::uint64_t>(epoch));
    erng.shuffle(idx);
    double epoch_loss = 0;
    int epoch_batches = 0;
    for (std::size_t at = 0; at < idx.size();
         at += static_cast<std::size_t>(cfg.pretrain_batch)) {
      const std::size_t end =
          std::min(idx.size(), at + static_cast<std::size_t>(cfg.pretrain_batch));
      Tape tape;
      std::vector<Tensor> losses;
      for (std::size_t i = at; i < end; ++i) {
        const MultimodalSequence& seq =
            corpus[static_cast<std::size_t>(idx[i])];
        const ForwardOutput fo =
            forward(model, no_prompts, seq, SegmentOrder::kAnswer);
        // next-token objective over real-token targets, answer span upweighted
        std::vector<int> rows, targets, ans_rows, ans_targets;
        for (int p = 0; p + 1 < fo.layout.length(); ++p) {
          const int next = fo.layout.token_ids[static_cast<std::size_t>(p + 1)];
          if (next < 0) continue;
          rows.push_back(p);
          targets.push_back(next);
          if (p + 1 >= fo.layout.answer.begin && p + 1 < fo.layout.answer.end) {
            ans_rows.push_back(p);
            ans_targets.push_back(next);
          }
        }
        const Tensor logits =
            matmul(select_rows(fo.features, rows), model.backbone.lm_head);
        Tensor loss = cross_entropy_rows(logits, targets);
        if (cfg.pretrain_answer_weight > 0 && !ans_rows.empty()) {
          const Tensor ans_logits = matmul(select_rows(fo.features, ans_rows),
                                           model.backbone.lm_head);
          loss = add(loss, scale(cross_entropy_rows(ans_logits, ans_targets),
                                 cfg.pretrain_answer_weight));
        }
        losses.push_back(loss);
      }
      const Tensor batch_loss = mean_all(stack_scalars(losses));
      epoch_loss += batch_loss.scalar_value();
      ++epoch_batches;
      opt.zero_grad();
      tape.backward(batch_loss);
      opt.step();
    }
    if (log && epoch_batches > 0)
      log->per_epoch_loss.push_back(epoch_loss / epoch_batches);
  }

  model.backbone.set_trainable(false);
  return model.backbone;
}

double score_candidate(const Model& model, const PromptSet& prompts,
                       const MultimodalSequence& seq,
                       const std::vector<int>& candidate) {
  NoGradGuard guard;
  const ForwardOutput fo =
      forward_with_answer(model, prompts, seq, candidate);
  std::vector<int> rows;
  for (int p = fo.layout.answer.begin - 1; p < fo.layout.answer.end - 1; ++p)
    rows.push_back(p);
  const Tensor logits = project_head(model, select_rows(fo.features, rows),
                                     fo.pooled_e, HeadKind::kAnswer);
  const Tensor lsm = log_softmax_rows(logits);
  double score = 0;
  for (std::size_t i = 0; i < candidate.size(); ++i)
    score += lsm.value()(static_cast<Index>(i), candidate[i]);
  return score;
}

std::vector<double> candidate_scores(const Model& model,
                                     const PromptSet& prompts,
                                     const MultimodalSequence& seq) {
  std::vector<double> scores;
  scores.reserve(seq.choice_blocks.size());
  for (const auto& cand : seq.choice_blocks)
    scores.push_back(score_candidate(model, prompts, seq, cand));
  return scores;
}

int predict_answer(const Model& model, const PromptSet& prompts,
                   const MultimodalSequence& seq) {
  const std::vector<double> scores = candidate_scores(model, prompts, seq);
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[static_cast<std::size_t>(best)])
      best = static_cast<int>(i);
  return best;
}

double evaluate(const Model& model, const PromptSet& prompts,
                DataProvider& data, int task_id, bool train_split) {
  const int n =
      train_split ? data.train_size(task_id) : data.eval_size(task_id);
  if (n == 0) throw ContractError("evaluate: empty split");
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const Sample& s = train_split ? data.train_sample(task_id, i)
                                  : data.eval_sample(task_id, i);
    const MultimodalSequence seq = to_sequence(s);
    if (predict_answer(model, prompts, seq) == s.correct_choice) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

StageLog train_task(Model& model, PromptSet& prompts, DataProvider& data,
                    int task_id, const TrainConfig& cfg, AdamW& opt,
                    Rng& stage_rng) {
  StageLog log;
  const auto t0 = std::chrono::steady_clock::now();
  const int n = data.train_size(task_id);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    Rng erng = stage_rng.fork(static_cast<std::uint64_t>(epoch));
    erng.shuffle(idx);

    LossBreakdown epoch_mean;
    int batches = 0;
    int pending_micro = 0;

    opt.zero_grad();
    for (std::size_t at = 0; at < idx.size();
         at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(idx.size(), at + static_cast<std::size_t>(cfg.batch_size));
      Tape tape;
      std::vector<SampleLossInputs> batch;
      for (std::size_t i = at; i < end; ++i) {
        const Sample& s = data.train_sample(task_id, idx[i]);
        batch.push_back(
            compute_sample_losses(model, prompts, to_sequence(s), cfg.loss));
      }
      const Tensor pooled = model.cfg.has_e_layers() && !prompts.empty()
                                ? pool_e_prompt(prompts)
                                : Tensor::zeros({model.cfg.d_model});
      const TotalLoss total = total_loss(batch, pooled, cfg.loss);
      // gradient accumulation averages micro-batch losses before one step
      tape.backward(
          scale(total.total, 1.0 / static_cast<Real>(cfg.grad_accum_steps)));
      ++pending_micro;
      if (pending_micro == cfg.grad_accum_steps) {
        opt.step();
        opt.zero_grad();
        pending_micro = 0;
      }

      epoch_mean.l_a += total.values.l_a;
      epoch_mean.l_q_gen += total.values.l_q_gen;
      epoch_mean.l_q_neg += total.values.l_q_neg;
      epoch_mean.l_v_dyn += total.values.l_v_dyn;
      epoch_mean.l_v_con += total.values.l_v_con;
      epoch_mean.total += total.values.total;
      ++batches;
    }
    if (pending_micro > 0) {
      opt.step();
      opt.zero_grad();
    }
    if (batches > 0) {
      const double inv = 1.0 / batches;
      epoch_mean.l_a *= inv;
      epoch_mean.l_q_gen *= inv;
      epoch_mean.l_q_neg *= inv;
      epoch_mean.l_v_dyn *= inv;
      epoch_mean.l_v_con *= inv;
      epoch_mean.total *= inv;
    }
    log.per_epoch.push_back(epoch_mean);
  }

  log.seconds = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return log;
}

RunReport train_sequence(const Suite& suite,
                         const std::vector<std::string>& order,
                         const TrainConfig& cfg, const Backbone* pretrained) {
  cfg.validate();
  // order: distinct task types from this suite (a full permutation for the
  // documented protocol; shorter streams are valid for T < |tasks| studies)
  {
    if (order.empty()) throw ConfigError("empty learning order");
    std::vector<std::string> sorted_order = order;
    std::sort(sorted_order.begin(), sorted_order.end());
    if (std::adjacent_find(sorted_order.begin(), sorted_order.end()) !=
        sorted_order.end())
      throw ConfigError("learning order repeats a task type");
    for (const std::string& t : order) suite.task_by_type(t);
  }

  RunReport report;
  report.suite_digest = suite.digest();
  report.config_digest = digest_of(canonical_train_config(cfg));
  report.seed = cfg.seed;
  report.task_order = order;
  report.trainable_params = count_trainable_params(cfg.model);

  Rng root(cfg.seed);
  Model model;
  model.cfg = cfg.model;
  model.backbone = pretrained ? *pretrained : pretrain_backbone(suite, cfg);
  model.heads = Heads::init(cfg.model);
  report.backbone_digest_before = model.backbone.digest();

  Rng prompt_rng = root.fork(0x22);
  PromptSet prompts = PromptSet::init(cfg.model, prompt_rng);

  std::vector<std::pair<std::string, Tensor>> params = prompts.named_params();
  for (auto& named : model.heads.named_params()) params.push_back(named);
  AdamW opt(params, cfg.optimizer);

  DataProvider data(suite);
  for (std::size_t stage = 0; stage < order.size(); ++stage) {
    const Task& task = suite.task_by_type(order[stage]);
    data.begin_stage(static_cast<int>(stage), task.id);

    Rng stage_rng = root.fork(0x100 + stage);
    const StageLog log =
        train_task(model, prompts, data, task.id, cfg, opt, stage_rng);
    report.loss_curves.push_back(log.per_epoch);
    report.stage_seconds.push_back(log.seconds);

    std::vector<double> row;
    for (std::size_t j = 0; j <= stage; ++j) {
      const Task& seen = suite.task_by_type(order[j]);
      row.push_back(evaluate(model, prompts, data, seen.id));
    }
    report.matrix.rows.push_back(std::move(row));
  }

  data.audit_rehearsal_free();
  report.audit = data.access_log();
  report.audit_ok = true;

  report.backbone_digest_after = model.backbone.digest();
  if (report.backbone_digest_after != report.backbone_digest_before)
    throw AuditError("backbone digest changed during sequential training");

  report.avg_acc_value = avg_acc(report.matrix);
  report.avg_fog_value = avg_fog(report.matrix);
  return report;
}

}  // namespace colpro
