#include "colpro/config_file.hpp"

#include <sstream>

#include "colpro/errors.hpp"
#include "colpro/suite_io.hpp"
#include "colpro/textio.hpp"

namespace colpro {

ExperimentConfig default_experiment_config() { return ExperimentConfig{}; }

void ExperimentConfig::bind_to_suite(const Suite& suite_ref) {
  suite = suite_ref.config;
  const ModelConfig geometry = train.model;  // keep user-chosen geometry
  train.model = ModelConfig::for_vocab(suite_ref.vocab);
  train.model.n_layers = geometry.n_layers;
  train.model.d_model = geometry.d_model;
  train.model.n_heads = geometry.n_heads;
  train.model.max_seq_len = geometry.max_seq_len;
  train.model.prompt_len = geometry.prompt_len;
  train.model.g_end = geometry.g_end;
  train.model.e_end = geometry.e_end;
  train.model.ffn_mult = geometry.ffn_mult;
  train.model.codebook_size = suite_ref.config.codebook_size;
  train.model.feat_dim = suite_ref.config.feat_dim;
  train.model.validate();
  if (!order.empty()) {
    // fail early on unknown type names
    for (const std::string& t : order) suite_ref.task_by_type(t);
  }
}

namespace {

std::vector<std::string> parse_csv_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v + ",") {
    if (c == ',') {
      const std::string t = trim(cur);
      if (!t.empty()) out.push_back(t);
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

}  // namespace

void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                        const std::string& value) {
  auto as_int = [&](int lo) {
    const long long v = parse_int(value);
    if (v < lo)
      throw ConfigError("config key '" + key + "' must be >= " +
                        std::to_string(lo));
    return static_cast<int>(v);
  };
  auto as_real = [&]() { return parse_real(value); };
  auto as_bool = [&]() { return parse_bool(value); };

  if (key == "seed") cfg.train.seed = parse_uint(value);
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "order") cfg.order = parse_csv_list(value);
  else if (key == "sweep.axis") {
    if (value != "prompt-len" && value != "layers")
      throw ConfigError("sweep.axis must be 'prompt-len' or 'layers'");
    cfg.sweep_axis = value;
  } else if (key == "study.seeds") {
    cfg.study_seeds.clear();
    for (const std::string& s : parse_csv_list(value))
      cfg.study_seeds.push_back(parse_uint(s));
  }
  // suite
  else if (key == "suite.path") cfg.suite_path = value;
  else if (key == "suite.family") cfg.suite.family = value;
  else if (key == "suite.train_per_task") cfg.suite.train_per_task = as_int(1);
  else if (key == "suite.eval_per_task") cfg.suite.eval_per_task = as_int(1);
  else if (key == "suite.num_frames") cfg.suite.num_frames = as_int(2);
  else if (key == "suite.feat_dim") cfg.suite.feat_dim = as_int(2);
  else if (key == "suite.codebook_size") cfg.suite.codebook_size = as_int(4);
  else if (key == "suite.noise_sigma") cfg.suite.noise_sigma = as_real();
  else if (key == "suite.transition_noise")
    cfg.suite.transition_noise = as_real();
  else if (key == "suite.negatives_per_sample")
    cfg.suite.negatives_per_sample = as_int(1);
  // model geometry
  else if (key == "model.n_layers") cfg.train.model.n_layers = as_int(1);
  else if (key == "model.d_model") cfg.train.model.d_model = as_int(2);
  else if (key == "model.n_heads") cfg.train.model.n_heads = as_int(1);
  else if (key == "model.max_seq_len") cfg.train.model.max_seq_len = as_int(4);
  else if (key == "model.prompt_len") cfg.train.model.prompt_len = as_int(0);
  else if (key == "model.g_end") cfg.train.model.g_end = as_int(0);
  else if (key == "model.e_end") cfg.train.model.e_end = as_int(0);
  else if (key == "model.ffn_mult") cfg.train.model.ffn_mult = as_int(1);
  // warmup
  else if (key == "pretrain.samples") cfg.train.pretrain_samples = as_int(1);
  else if (key == "pretrain.epochs") cfg.train.pretrain_epochs = as_int(0);
  else if (key == "pretrain.batch") cfg.train.pretrain_batch = as_int(1);
  else if (key == "pretrain.answer_weight")
    cfg.train.pretrain_answer_weight = as_real();
  else if (key == "pretrain.lr") cfg.train.pretrain_optimizer.lr = as_real();
  else if (key == "pretrain.weight_decay")
    cfg.train.pretrain_optimizer.weight_decay = as_real();
  // training
  else if (key == "train.epochs") cfg.train.epochs = as_int(0);
  else if (key == "train.batch") cfg.train.batch_size = as_int(1);
  else if (key == "train.grad_accum") cfg.train.grad_accum_steps = as_int(1);
  else if (key == "train.lr") cfg.train.optimizer.lr = as_real();
  else if (key == "train.weight_decay")
    cfg.train.optimizer.weight_decay = as_real();
  else if (key == "train.beta1") cfg.train.optimizer.beta1 = as_real();
  else if (key == "train.beta2") cfg.train.optimizer.beta2 = as_real();
  else if (key == "train.eps") cfg.train.optimizer.eps = as_real();
  // losses
  else if (key == "loss.tau") cfg.train.loss.tau = as_real();
  else if (key == "loss.lambda_a") cfg.train.loss.lambda_a = as_real();
  else if (key == "loss.lambda_q") cfg.train.loss.lambda_q = as_real();
  else if (key == "loss.lambda_v") cfg.train.loss.lambda_v = as_real();
  else if (key == "loss.use_q_gen") cfg.train.loss.use_q_gen = as_bool();
  else if (key == "loss.use_q_neg") cfg.train.loss.use_q_neg = as_bool();
  else if (key == "loss.use_v_dyn") cfg.train.loss.use_v_dyn = as_bool();
  else if (key == "loss.use_v_con") cfg.train.loss.use_v_con = as_bool();
  else if (key == "loss.q_neg_log_form")
    cfg.train.loss.q_neg_log_form = as_bool();
  else
    throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg = default_experiment_config();
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::string key, value;
    if (!split_kv(line, key, value))
      throw ConfigError("config line " + std::to_string(lineno) +
                        " is not 'key = value': '" + line + "'");
    try {
      apply_config_entry(cfg, key, value);
    } catch (const IoError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " +
                        e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  return parse_config_text(read_text_file(path));
}

std::vector<std::pair<std::string, std::string>> config_key_defaults() {
  return {
      {"seed", "7"},
      {"out_dir", "out"},
      {"order", "<family default, e.g. TP,CW,DC,TC,DL,DO,TN,CH>"},
      {"sweep.axis", "prompt-len"},
      {"study.seeds", "1,2,3,4,5"},
      {"suite.path", "<empty: generate in memory>"},
      {"suite.family", "next"},
      {"suite.train_per_task", "500"},
      {"suite.eval_per_task", "200"},
      {"suite.num_frames", "10"},
      {"suite.feat_dim", "32"},
      {"suite.codebook_size", "32"},
      {"suite.noise_sigma", "0.05"},
      {"suite.transition_noise", "0.2"},
      {"suite.negatives_per_sample", "2"},
      {"model.n_layers", "8"},
      {"model.d_model", "64"},
      {"model.n_heads", "4"},
      {"model.max_seq_len", "128"},
      {"model.prompt_len", "10"},
      {"model.g_end", "2"},
      {"model.e_end", "5"},
      {"model.ffn_mult", "4"},
      {"pretrain.samples", "512"},
      {"pretrain.epochs", "3"},
      {"pretrain.batch", "8"},
      {"pretrain.answer_weight", "4"},
      {"pretrain.lr", "0.001"},
      {"pretrain.weight_decay", "0.01"},
      {"train.epochs", "5"},
      {"train.batch", "8"},
      {"train.grad_accum", "1"},
      {"train.lr", "0.05"},
      {"train.weight_decay", "0.15"},
      {"train.beta1", "0.9"},
      {"train.beta2", "0.95"},
      {"train.eps", "1e-8"},
      {"loss.tau", "1"},
      {"loss.lambda_a", "1"},
      {"loss.lambda_q", "1"},
      {"loss.lambda_v", "1"},
      {"loss.use_q_gen", "true"},
      {"loss.use_q_neg", "true"},
      {"loss.use_v_dyn", "true"},
      {"loss.use_v_con", "true"},
      {"loss.q_neg_log_form", "true"},
  };
}

}  // namespace colpro
