#include <cmath>
#include <cstdio>
#include <vector>

#include "colpro/checkpoint.hpp"
#include "colpro/errors.hpp"
#include "colpro/model.hpp"
#include "colpro/ops.hpp"
#include "colpro/suite_io.hpp"
#include "colpro/textio.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace colpro;
using testutil::max_abs_diff;
using testutil::random_tensor;
using testutil::to_grid;

namespace {

SuiteConfig tiny_suite_config() {
  SuiteConfig cfg;
  cfg.train_per_task = 4;
  cfg.eval_per_task = 2;
  return cfg;
}

ModelConfig tiny_model_config(const Vocab& vocab) {
  ModelConfig cfg = ModelConfig::for_vocab(vocab);
  cfg.n_layers = 2;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.prompt_len = 3;
  cfg.g_end = 1;
  cfg.e_end = 2;
  cfg.ffn_mult = 2;
  return cfg;
}

std::vector<std::vector<bool>> visibility(int seq_len, int prompt_len) {
  std::vector<std::vector<bool>> vis(
      static_cast<std::size_t>(seq_len),
      std::vector<bool>(static_cast<std::size_t>(prompt_len + seq_len),
                        false));
  for (int i = 0; i < seq_len; ++i) {
    for (int p = 0; p < prompt_len; ++p) vis[i][p] = true;
    for (int j = 0; j <= i; ++j) vis[i][prompt_len + j] = true;
  }
  return vis;
}

oracle::Grid concat_grids(const oracle::Grid& a, const oracle::Grid& b) {
  oracle::Grid out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

TEST_CASE("empty-prompt attention reduces to vanilla causal attention") {
  Rng rng(5);
  const int T = 6, dh = 4;
  Tensor q = random_tensor({T, dh}, rng), k = random_tensor({T, dh}, rng),
         v = random_tensor({T, dh}, rng);
  const Tensor out = prompted_attention(q, k, v, Tensor(), Tensor(),
                                        make_causal_mask(T, 0));
  const auto expect = oracle::attention_concat(to_grid(q), to_grid(k),
                                               to_grid(v), visibility(T, 0));
  CHECK(max_abs_diff(out.value(), expect) < 1e-12);
}

TEST_CASE("single query attending to itself returns the value row") {
  Rng rng(6);
  Tensor q = random_tensor({1, 4}, rng);
  Tensor v = random_tensor({1, 4}, rng);
  const Tensor out =
      prompted_attention(q, q, v, Tensor(), Tensor(), make_causal_mask(1, 0));
  CHECK(max_abs_diff(out.value(), v.value()) < 1e-15);
}

TEST_CASE("prompted attention equals the explicit-concatenation oracle") {
  Rng rng(7);
  for (int rep = 0; rep < 25; ++rep) {
    const int T = rng.uniform_int(1, 12), np = rng.uniform_int(1, 6),
              dh = rng.uniform_int(2, 8);
    Tensor q = random_tensor({T, dh}, rng), k = random_tensor({T, dh}, rng),
           v = random_tensor({T, dh}, rng);
    Tensor pk = random_tensor({np, dh}, rng),
           pv = random_tensor({np, dh}, rng);
    const Tensor out =
        prompted_attention(q, k, v, pk, pv, make_causal_mask(T, np));
    const auto expect = oracle::attention_concat(
        to_grid(q), concat_grids(to_grid(pk), to_grid(k)),
        concat_grids(to_grid(pv), to_grid(v)), visibility(T, np));
    CHECK(max_abs_diff(out.value(), expect) < 1e-10);
  }
}

TEST_CASE("prompted attention rejects head-width mismatch") {
  Tensor q = Tensor::zeros({3, 4}), pk = Tensor::full({2, 6}, 0.1);
  CHECK_THROWS_AS(prompted_attention(q, q, q, pk, pk, make_causal_mask(3, 2)),
                  DimensionError);
}

TEST_CASE("single-head multihead equals prompted_attention with projections") {
  Rng rng(8);
  const int T = 5, d = 6, np = 2;
  LayerWeights w;
  w.wq = random_tensor({d, d}, rng);
  w.wk = random_tensor({d, d}, rng);
  w.wv = random_tensor({d, d}, rng);
  w.wo = random_tensor({d, d}, rng);
  Tensor h = random_tensor({T, d}, rng);
  Tensor pk = random_tensor({np, d}, rng), pv = random_tensor({np, d}, rng);
  const Tensor mask = make_causal_mask(T, np);
  const Tensor got = multihead_prompted(h, w, 1, pk, pv, mask);
  const Tensor expect = matmul(
      prompted_attention(matmul(h, w.wq), matmul(h, w.wk), matmul(h, w.wv),
                         pk, pv, mask),
      w.wo);
  CHECK(max_abs_diff(got.value(), expect.value()) < 1e-12);
}

TEST_CASE("zero prompts leak bounded attention mass onto zero values") {
  Rng rng(9);
  const int T = 6, d = 8, np = 3;
  LayerWeights w;
  w.wq = random_tensor({d, d}, rng);
  w.wk = random_tensor({d, d}, rng);
  w.wv = random_tensor({d, d}, rng);
  w.wo = random_tensor({d, d}, rng);
  Tensor h = random_tensor({T, d}, rng);
  const Tensor vanilla = multihead_prompted(h, w, 2, Tensor(), Tensor(),
                                            make_causal_mask(T, 0));
  const Tensor zeroed =
      multihead_prompted(h, w, 2, Tensor::zeros({np, d}),
                         Tensor::zeros({np, d}), make_causal_mask(T, np));
  const double diff = max_abs_diff(vanilla.value(), zeroed.value());
  CHECK(diff > 0.0);  // mass does move onto the prompt rows
  // bounded: rows shrink toward zero-value prompts, no blow-up
  const double scale = vanilla.value().cwiseAbs().maxCoeff();
  CHECK(diff <= 2.0 * std::max(1.0, scale));
}

TEST_CASE("multihead matches the concatenation oracle head by head") {
  Rng rng(10);
  const int T = 5, d = 8, m = 2, dh = d / m, np = 3;
  LayerWeights w;
  w.wq = random_tensor({d, d}, rng);
  w.wk = random_tensor({d, d}, rng);
  w.wv = random_tensor({d, d}, rng);
  w.wo = random_tensor({d, d}, rng);
  Tensor h = random_tensor({T, d}, rng);
  Tensor pk = random_tensor({np, d}, rng), pv = random_tensor({np, d}, rng);
  const Tensor got =
      multihead_prompted(h, w, m, pk, pv, make_causal_mask(T, np));

  const auto q = oracle::matmul(to_grid(h), to_grid(w.wq));
  const auto k = oracle::matmul(to_grid(h), to_grid(w.wk));
  const auto v = oracle::matmul(to_grid(h), to_grid(w.wv));
  oracle::Grid heads = oracle::zeros(T, d);
  for (int hd = 0; hd < m; ++hd) {
    oracle::Grid qh = oracle::zeros(T, dh), kh = oracle::zeros(T, dh),
                 vh = oracle::zeros(T, dh), pkh = oracle::zeros(np, dh),
                 pvh = oracle::zeros(np, dh);
    for (int i = 0; i < T; ++i)
      for (int t = 0; t < dh; ++t) {
        qh[i][t] = q[i][hd * dh + t];
        kh[i][t] = k[i][hd * dh + t];
        vh[i][t] = v[i][hd * dh + t];
      }
    for (int i = 0; i < np; ++i)
      for (int t = 0; t < dh; ++t) {
        pkh[i][t] = pk.value()(i, hd * dh + t);
        pvh[i][t] = pv.value()(i, hd * dh + t);
      }
    const auto oh = oracle::attention_concat(qh, concat_grids(pkh, kh),
                                             concat_grids(pvh, vh),
                                             visibility(T, np));
    for (int i = 0; i < T; ++i)
      for (int t = 0; t < dh; ++t) heads[i][hd * dh + t] = oh[i][t];
  }
  const auto expect = oracle::matmul(heads, to_grid(w.wo));
  CHECK(max_abs_diff(got.value(), expect) < 1e-10);
}

TEST_CASE("forward is deterministic and order-sensitive") {
  const Suite suite = build_suite(tiny_suite_config(), 42);
  const ModelConfig cfg = tiny_model_config(suite.vocab);
  const Model model = build_model(cfg, 1);
  Rng prng(2);
  const PromptSet prompts = PromptSet::init(cfg, prng);
  const MultimodalSequence seq = to_sequence(suite.tasks[0].train[0]);

  const ForwardOutput a = forward(model, prompts, seq, SegmentOrder::kAnswer);
  const ForwardOutput b = forward(model, prompts, seq, SegmentOrder::kAnswer);
  CHECK(a.features.value() == b.features.value());  // bitwise

  // question-first vs question-last: causal masking makes the same question
  // tokens see different context, so their features must move
  const ForwardOutput c =
      forward(model, prompts, seq, SegmentOrder::kQuestion);
  const Mat qa = a.features.value().middleRows(a.layout.question.begin,
                                               a.layout.question.size());
  const Mat qc = c.features.value().middleRows(c.layout.question.begin,
                                               c.layout.question.size());
  CHECK(max_abs_diff(qa, qc) > 1e-9);
}

TEST_CASE("promptless single-layer forward matches a hand-built oracle") {
  const Suite suite = build_suite(tiny_suite_config(), 43);
  ModelConfig cfg = tiny_model_config(suite.vocab);
  cfg.n_layers = 1;
  cfg.prompt_len = 0;
  cfg.g_end = 0;
  cfg.e_end = 0;
  const Model model = build_model(cfg, 3);
  Rng prng(4);
  const PromptSet prompts = PromptSet::init(cfg, prng);
  const MultimodalSequence seq = to_sequence(suite.tasks[1].train[1]);
  const ForwardOutput out = forward(model, prompts, seq, SegmentOrder::kAnswer);

  // embedding by hand: token rows from the table, frame rows through the
  // projection, plus the positional table
  const SerializedSequence s =
      serialize_sequence(seq, SegmentOrder::kAnswer, cfg);
  const int T = s.length(), d = cfg.d_model;
  oracle::Grid x0 = oracle::zeros(T, d);
  for (int p = 0; p < T; ++p) {
    if (s.token_ids[static_cast<std::size_t>(p)] >= 0) {
      for (int j = 0; j < d; ++j)
        x0[p][j] = model.backbone.token_embedding.value()(
            s.token_ids[static_cast<std::size_t>(p)], j);
    } else {
      const int slot = s.frame_slots[static_cast<std::size_t>(p)];
      for (int j = 0; j < d; ++j) {
        double acc = 0;
        for (int f = 0; f < cfg.feat_dim; ++f)
          acc += seq.frame_features(slot, f) *
                 model.backbone.frame_projection.value()(f, j);
        x0[p][j] = acc;
      }
    }
    for (int j = 0; j < d; ++j) x0[p][j] += model.backbone.positional(p, j);
  }

  oracle::LayerOracleWeights lw;
  const LayerWeights& w0 = model.backbone.layers[0];
  lw.wq = to_grid(w0.wq);
  lw.wk = to_grid(w0.wk);
  lw.wv = to_grid(w0.wv);
  lw.wo = to_grid(w0.wo);
  lw.w1 = to_grid(w0.ffn_w1);
  lw.w2 = to_grid(w0.ffn_w2);
  lw.g1.assign(static_cast<std::size_t>(d), 1.0);
  lw.g2.assign(static_cast<std::size_t>(d), 1.0);
  for (int j = 0; j < d; ++j) {
    lw.g1[static_cast<std::size_t>(j)] = w0.attn_norm_gain.value()(0, j);
    lw.g2[static_cast<std::size_t>(j)] = w0.ffn_norm_gain.value()(0, j);
  }
  oracle::Grid y = oracle::vanilla_layer(x0, lw, 2);
  for (int p = 0; p < T; ++p) {
    std::vector<double> gain(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j)
      gain[static_cast<std::size_t>(j)] =
          model.backbone.final_norm_gain.value()(0, j);
    y[static_cast<std::size_t>(p)] =
        oracle::rms_norm(y[static_cast<std::size_t>(p)], gain);
  }
  CHECK(max_abs_diff(out.features.value(), y) < 1e-10);
}

TEST_CASE("project_head zero, selector, and oracle cases") {
  const Vocab vocab = Vocab::standard();
  ModelConfig cfg = tiny_model_config(vocab);
  Model model = build_model(cfg, 5);
  const int d = cfg.d_model;

  Rng rng(11);
  Tensor features = random_tensor({4, d}, rng);
  Tensor pooled = random_tensor({d}, rng);

  SUBCASE("zero inputs and zero head give zero logits") {
    for (auto& [name, t] : model.heads.named_params())
      t.mutable_value().setZero();
    const Tensor logits = project_head(model, Tensor::zeros({4, d}),
                                       Tensor::zeros({d}), HeadKind::kAnswer);
    CHECK(logits.value().cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("selector head reproduces the first feature coordinate") {
    model.heads.answer_w.mutable_value().setZero();
    model.heads.answer_b.mutable_value().setZero();
    for (Index j = 0; j < model.heads.answer_w.cols(); ++j)
      model.heads.answer_w.mutable_value()(0, j) = 1.0;
    const Tensor logits =
        project_head(model, features, pooled, HeadKind::kAnswer);
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < logits.cols(); ++j)
        CHECK(logits.value()(i, j) == doctest::Approx(features.value()(i, 0)));
  }

  SUBCASE("random case matches explicit concat-then-matmul oracle") {
    Rng hrng(21);
    testutil::randomize_heads(model, hrng);
    const Tensor logits =
        project_head(model, features, pooled, HeadKind::kVideo);
    oracle::Grid cat = oracle::zeros(4, 2 * d);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < d; ++j) {
        cat[i][j] = features.value()(i, j);
        cat[i][d + j] = pooled.value()(0, j);
      }
    auto expect = oracle::matmul(cat, to_grid(model.heads.video_w));
    for (int i = 0; i < 4; ++i)
      for (Index j = 0; j < logits.cols(); ++j)
        expect[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
            model.heads.video_b.value()(0, j);
    CHECK(max_abs_diff(logits.value(), expect) < 1e-12);
  }
}

TEST_CASE("pool_e_prompt averages the last expert layer") {
  const Vocab vocab = Vocab::standard();
  ModelConfig cfg = tiny_model_config(vocab);
  Rng rng(12);
  PromptSet prompts = PromptSet::init(cfg, rng);

  SUBCASE("constant rows return that vector") {
    Tensor u = random_tensor({cfg.d_model}, rng);
    for (Index i = 0; i < cfg.prompt_len; ++i) {
      prompts.key_prompts.back().mutable_value().row(i) = u.value().row(0);
      prompts.value_prompts.back().mutable_value().row(i) = u.value().row(0);
    }
    CHECK(max_abs_diff(pool_e_prompt(prompts).value(), Mat(u.value())) <
          1e-12);
  }

  SUBCASE("antisymmetric rows cancel") {
    REQUIRE(cfg.prompt_len >= 2);
    Tensor u = random_tensor({cfg.d_model}, rng);
    Mat& km = prompts.key_prompts.back().mutable_value();
    Mat& vm = prompts.value_prompts.back().mutable_value();
    for (Index i = 0; i < cfg.prompt_len; ++i) {
      const double sign = i % 2 == 0 ? 1.0 : -1.0;
      km.row(i) = sign * u.value().row(0);
      vm.row(i) = -sign * u.value().row(0);
    }
    if (cfg.prompt_len % 2 != 0) {
      km.row(cfg.prompt_len - 1).setZero();
      vm.row(cfg.prompt_len - 1).setZero();
    }
    CHECK(pool_e_prompt(prompts).value().cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("random prompts match a direct mean oracle") {
    const Tensor pooled = pool_e_prompt(prompts);
    std::vector<double> mean(static_cast<std::size_t>(cfg.d_model), 0.0);
    const Mat& km = prompts.key_prompts.back().value();
    const Mat& vm = prompts.value_prompts.back().value();
    for (Index i = 0; i < cfg.prompt_len; ++i)
      for (int j = 0; j < cfg.d_model; ++j)
        mean[static_cast<std::size_t>(j)] += km(i, j) + vm(i, j);
    for (auto& v : mean) v /= 2.0 * cfg.prompt_len;
    for (int j = 0; j < cfg.d_model; ++j)
      CHECK(std::abs(pooled.value()(0, j) - mean[static_cast<std::size_t>(j)]) <
            1e-12);
  }

  SUBCASE("no expert layers is a configuration error") {
    ModelConfig degenerate = cfg;
    degenerate.e_end = degenerate.g_end;
    Rng r2(1);
    PromptSet p2 = PromptSet::init(degenerate, r2);
    CHECK_THROWS_AS(pool_e_prompt(p2), ConfigError);
  }
}

TEST_CASE("trainable parameter count") {
  const Vocab vocab = Vocab::standard();
  ModelConfig cfg = ModelConfig::for_vocab(vocab);

  SUBCASE("prompt-free config counts heads only") {
    cfg.prompt_len = 0;
    const std::int64_t heads_only =
        2 * (2 * 64 * cfg.vocab_size + cfg.vocab_size) +
        2 * 64 * cfg.codebook_size + cfg.codebook_size;
    CHECK(count_trainable_params(cfg) == heads_only);
  }

  SUBCASE("six prompted layers of length 10 at width 64 add 7680") {
    ModelConfig with = cfg;
    with.prompt_len = 10;
    with.g_end = 3;
    with.e_end = 6;
    ModelConfig without = with;
    without.prompt_len = 0;
    CHECK(count_trainable_params(with) - count_trainable_params(without) ==
          7680);
  }

  SUBCASE("doubling prompt length doubles the prompt term") {
    ModelConfig base = cfg;
    base.prompt_len = 7;
    ModelConfig doubled = cfg;
    doubled.prompt_len = 14;
    ModelConfig none = cfg;
    none.prompt_len = 0;
    CHECK(count_trainable_params(doubled) - count_trainable_params(none) ==
          2 * (count_trainable_params(base) - count_trainable_params(none)));
  }

  SUBCASE("matches the live parameter tensors") {
    cfg.n_layers = 3;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.prompt_len = 2;
    cfg.g_end = 1;
    cfg.e_end = 2;
    const Model model = build_model(cfg, 9);
    Rng rng(10);
    const PromptSet prompts = PromptSet::init(cfg, rng);
    std::int64_t live = 0;
    for (const auto& [name, t] : prompts.named_params()) live += t.numel();
    for (const auto& [name, t] : model.heads.named_params()) live += t.numel();
    CHECK(live == count_trainable_params(cfg));
  }
}

TEST_CASE("causality: later answer tokens cannot move earlier logits") {
  const Suite suite = build_suite(tiny_suite_config(), 44);
  const ModelConfig cfg = tiny_model_config(suite.vocab);
  const Model model = build_model(cfg, 6);
  Rng prng(7);
  const PromptSet prompts = PromptSet::init(cfg, prng);
  MultimodalSequence seq = to_sequence(suite.tasks[2].train[0]);

  std::vector<int> answer = {1, 2, 3};
  const ForwardOutput a = forward_with_answer(model, prompts, seq, answer);
  std::vector<int> perturbed = {1, 2, 9};
  const ForwardOutput b = forward_with_answer(model, prompts, seq, perturbed);

  // prediction rows for tokens 1..3 are (marker, a1, a2); none sees a3
  const int begin = a.layout.answer.begin;
  for (int rowpos = begin - 1; rowpos < begin + 2; ++rowpos) {
    const Mat fa = a.features.value().row(rowpos);
    const Mat fb = b.features.value().row(rowpos);
    CHECK(max_abs_diff(fa, fb) == 0.0);  // bitwise: masked weights are 0
  }
  // while the perturbed position itself does change
  CHECK(max_abs_diff(Mat(a.features.value().row(begin + 2)),
                     Mat(b.features.value().row(begin + 2))) > 0.0);
}

TEST_CASE("prompts actually receive attention mass") {
  const Suite suite = build_suite(tiny_suite_config(), 45);
  const ModelConfig cfg = tiny_model_config(suite.vocab);
  const Model model = build_model(cfg, 8);
  Rng prng(9);
  const PromptSet prompts = PromptSet::init(cfg, prng);
  const MultimodalSequence seq = to_sequence(suite.tasks[0].train[1]);

  ForwardProbe probe;
  forward(model, prompts, seq, SegmentOrder::kAnswer, &probe);
  REQUIRE(probe.attention.size() == 2);
  double prompt_mass = 0;
  for (int l = 0; l < cfg.e_end; ++l)
    for (const Mat& w : probe.attention[static_cast<std::size_t>(l)])
      prompt_mass =
          std::max(prompt_mass,
                   w.leftCols(cfg.prompt_len).maxCoeff());
  CHECK(prompt_mass > 1e-6);
}

TEST_CASE("checkpoint round trip preserves everything") {
  const Suite suite = build_suite(tiny_suite_config(), 46);
  ModelConfig cfg = tiny_model_config(suite.vocab);
  Model model = build_model(cfg, 10);
  model.backbone.set_trainable(false);
  Rng prng(11);
  const PromptSet prompts = PromptSet::init(cfg, prng);

  const std::string path = "ckpt_roundtrip.bin";
  save_checkpoint(path, model, prompts);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.model.backbone.digest() == model.backbone.digest());
  CHECK(back.model.cfg.vocab_size == cfg.vocab_size);
  CHECK(max_abs_diff(back.prompts.key_prompts[0].value(),
                     Mat(prompts.key_prompts[0].value())) == 0.0);
  CHECK(max_abs_diff(back.model.heads.answer_w.value(),
                     Mat(model.heads.answer_w.value())) == 0.0);

  // the forward path agrees bitwise after reload
  const MultimodalSequence seq = to_sequence(suite.tasks[0].eval[0]);
  const ForwardOutput a = forward(model, prompts, seq, SegmentOrder::kAnswer);
  const ForwardOutput b =
      forward(back.model, back.prompts, seq, SegmentOrder::kAnswer);
  CHECK(a.features.value() == b.features.value());

  write_text_file("ckpt_bogus.bin", "not a checkpoint at all");
  CHECK_THROWS_AS(load_checkpoint("ckpt_bogus.bin"), IoError);
  std::remove(path.c_str());
  std::remove("ckpt_bogus.bin");
}

TEST_CASE("sequence length guard") {
  const Suite suite = build_suite(tiny_suite_config(), 47);
  ModelConfig cfg = tiny_model_config(suite.vocab);
  cfg.max_seq_len = 8;
  const MultimodalSequence seq = to_sequence(suite.tasks[0].train[0]);
  CHECK_THROWS_AS(serialize_sequence(seq, SegmentOrder::kAnswer, cfg),
                  DimensionError);
}

TEST_CASE("config validation rejects bad prompt ranges") {
  const Vocab vocab = Vocab::standard();
  ModelConfig cfg = ModelConfig::for_vocab(vocab);
  cfg.g_end = 5;
  cfg.e_end = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.g_end = 2;
  cfg.e_end = 9;  // > n_layers
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.e_end = 5;
  cfg.d_model = 63;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
