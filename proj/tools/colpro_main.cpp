// colpro: a desk-scale continual-learning laboratory for prompted
// transformers over a synthetic multimodal VideoQA task stream.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "colpro/checkpoint.hpp"
#include "colpro/config_file.hpp"
#include "colpro/digest.hpp"
#include "colpro/errors.hpp"
#include "colpro/gradcheck.hpp"
#include "colpro/harness.hpp"
#include "colpro/report_io.hpp"
#include "colpro/studies.hpp"
#include "colpro/suite_io.hpp"
#include "colpro/textio.hpp"

namespace {

using namespace colpro;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

ExperimentConfig resolve_config(const CommonFlags& flags) {
  ExperimentConfig cfg = default_experiment_config();
  if (const char* env = std::getenv("COLPRO_OUT_DIR"))
    cfg.out_dir = env;
  if (!flags.config_path.empty()) {
    ExperimentConfig from_file = load_config_file(flags.config_path);
    if (const char* env = std::getenv("COLPRO_OUT_DIR"))
      if (from_file.out_dir == "out") from_file.out_dir = env;
    cfg = from_file;
  }
  if (flags.seed_set) cfg.train.seed = flags.seed;
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  return cfg;
}

Suite obtain_suite(const ExperimentConfig& cfg) {
  if (!cfg.suite_path.empty()) return load_suite(cfg.suite_path);
  return build_suite(cfg.suite, cfg.train.seed);
}

std::vector<std::string> resolve_order(const ExperimentConfig& cfg,
                                       const Suite& suite) {
  if (!cfg.order.empty()) return cfg.order;
  return question_types(suite.config.family);
}

void print_stage_timings(const RunReport& report) {
  std::cerr << "stage seconds:";
  for (double s : report.stage_seconds) std::cerr << " " << fmt_real(s);
  std::cerr << "\n";
}

int cmd_run(const CommonFlags& flags) {
  ExperimentConfig cfg = resolve_config(flags);
  const Suite suite = obtain_suite(cfg);
  cfg.bind_to_suite(suite);
  const RunReport report =
      train_sequence(suite, resolve_order(cfg, suite), cfg.train);
  const ReportPaths paths = emit_report(report, cfg.out_dir, "run");
  std::cout << summary_line(report) << "\n";
  std::cerr << "report: " << paths.report << "\n";
  print_stage_timings(report);
  return kExitOk;
}

int cmd_ablate(const CommonFlags& flags, const std::string& which,
               bool directional) {
  ExperimentConfig cfg = resolve_config(flags);
  const Suite suite = obtain_suite(cfg);
  cfg.bind_to_suite(suite);
  const auto order = resolve_order(cfg, suite);

  if (which == "strategy" || which == "both") {
    const StudyTable t = ablate_strategies(suite, order, cfg.train);
    std::cout << serialize_study(t);
    std::cerr << "table: " << emit_study(t, cfg.out_dir, "ablate_strategy")
              << "\n";
  }
  if (which == "objective" || which == "both") {
    const StudyTable t = ablate_objectives(suite, order, cfg.train);
    std::cout << serialize_study(t);
    std::cerr << "table: " << emit_study(t, cfg.out_dir, "ablate_objective")
              << "\n";
  }
  if (directional) {
    const DirectionalComparison d =
        compare_full_vs_baseline(suite, order, cfg.train, cfg.study_seeds);
    std::ostringstream os;
    os << "directional comparison over " << d.seeds.size() << " seeds\n";
    for (std::size_t i = 0; i < d.seeds.size(); ++i)
      os << "seed " << d.seeds[i] << ": fog_full=" << fmt_real(d.fog_full[i])
         << " fog_baseline=" << fmt_real(d.fog_baseline[i]) << "\n";
    os << "mean_fog_full=" << fmt_real(d.mean_fog_full)
       << " mean_fog_baseline=" << fmt_real(d.mean_fog_baseline)
       << " trend_holds=" << (d.trend_holds ? "true" : "false") << "\n";
    std::cout << os.str();
    write_text_file(cfg.out_dir + "/ablate_directional.txt", os.str());
  }
  return kExitOk;
}

int cmd_sweep(const CommonFlags& flags, const std::string& axis_flag) {
  ExperimentConfig cfg = resolve_config(flags);
  if (!axis_flag.empty()) {
    if (axis_flag != "prompt-len" && axis_flag != "layers")
      throw ConfigError("sweep --axis must be 'prompt-len' or 'layers'");
    cfg.sweep_axis = axis_flag;
  }
  const Suite suite = obtain_suite(cfg);
  cfg.bind_to_suite(suite);
  const auto order = resolve_order(cfg, suite);
  const StudyTable t =
      cfg.sweep_axis == "prompt-len"
          ? sweep_prompt_len(suite, order, cfg.train)
          : sweep_layers(suite, order, cfg.train);
  std::cout << serialize_study(t);
  const std::string stem =
      cfg.sweep_axis == "prompt-len" ? "sweep_prompt_len" : "sweep_layers";
  std::cerr << "table: " << emit_study(t, cfg.out_dir, stem) << "\n";
  return kExitOk;
}

int cmd_order_search(const CommonFlags& flags, const std::string& orders_path) {
  ExperimentConfig cfg = resolve_config(flags);
  const Suite suite = obtain_suite(cfg);
  cfg.bind_to_suite(suite);

  std::vector<std::vector<std::string>> candidates;
  if (!orders_path.empty()) {
    std::istringstream is(read_text_file(orders_path));
    std::string line;
    while (std::getline(is, line)) {
      line = trim(line);
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string> order;
      std::string cur;
      for (char c : line + ",") {
        if (c == ',') {
          const std::string t = trim(cur);
          if (!t.empty()) order.push_back(t);
          cur.clear();
        } else {
          cur += c;
        }
      }
      candidates.push_back(std::move(order));
    }
  } else if (suite.config.family == "next") {
    candidates = bundled_candidate_orders();
  } else {
    // rotations of the documented order
    const auto base = question_types(suite.config.family);
    for (std::size_t r = 0; r < base.size(); ++r) {
      std::vector<std::string> rot;
      for (std::size_t i = 0; i < base.size(); ++i)
        rot.push_back(base[(i + r) % base.size()]);
      candidates.push_back(std::move(rot));
    }
  }

  const StudyTable t = order_search(suite, candidates, cfg.train);
  std::cout << serialize_study(t);
  std::cerr << "table: " << emit_study(t, cfg.out_dir, "order_search")
            << "\n";
  return kExitOk;
}

int cmd_gradcheck(const CommonFlags& flags) {
  ExperimentConfig cfg = resolve_config(flags);
  // compact geometry for the finite-difference pass
  cfg.suite.train_per_task = 2;
  cfg.suite.eval_per_task = 1;
  cfg.train.model.n_layers = 2;
  cfg.train.model.d_model = 16;
  cfg.train.model.n_heads = 2;
  cfg.train.model.prompt_len = 3;
  cfg.train.model.g_end = 1;
  cfg.train.model.e_end = 2;
  cfg.train.model.ffn_mult = 2;

  const Suite suite = build_suite(cfg.suite, cfg.train.seed);
  cfg.bind_to_suite(suite);

  Model model = build_model(cfg.train.model, cfg.train.seed);
  model.backbone.set_trainable(false);
  Rng prng(cfg.train.seed + 1);
  PromptSet prompts = PromptSet::init(cfg.train.model, prng);

  std::vector<MultimodalSequence> batch_seqs = {
      to_sequence(suite.tasks[0].train[0]),
      to_sequence(suite.tasks[1].train[0])};
  const LossConfig& loss_cfg = cfg.train.loss;
  auto f = [&]() {
    std::vector<SampleLossInputs> batch;
    for (const auto& s : batch_seqs)
      batch.push_back(compute_sample_losses(model, prompts, s, loss_cfg));
    return total_loss(batch, pool_e_prompt(prompts), loss_cfg).total;
  };
  std::vector<Tensor> params;
  for (auto& [name, t] : prompts.named_params()) params.push_back(t);
  for (auto& [name, t] : model.heads.named_params()) params.push_back(t);

  GradCheckOptions opts;
  opts.epsilon = 1e-5;
  opts.tolerance = 1e-4;
  opts.sample_coords = 200;
  opts.required_fraction = 0.95;
  opts.seed = cfg.train.seed;
  const GradCheckReport report = check_gradients(f, params, opts);
  std::cout << "gradcheck: coords=" << report.coords.size()
            << " max_rel_err=" << fmt_real(report.max_rel_err)
            << " mean_rel_err=" << fmt_real(report.mean_rel_err)
            << " pass_fraction=" << fmt_real(report.pass_fraction)
            << " passed=" << (report.passed ? "true" : "false") << "\n";
  if (!report.passed) {
    std::cerr << "gradient check failed\n";
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_gen_data(const CommonFlags& flags, const std::string& name) {
  ExperimentConfig cfg = resolve_config(flags);
  const Suite suite = build_suite(cfg.suite, cfg.train.seed);
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + cfg.out_dir + "'");
  const std::string path = cfg.out_dir + "/" + name;
  save_suite(suite, path);
  std::cout << "suite: " << path
            << " digest=" << digest_to_hex(suite.digest()) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "colpro: continual prompt tuning on a synthetic VideoQA stream"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string ablate_which = "both";
  bool ablate_directional = false;
  std::string sweep_axis;
  std::string orders_path;
  std::string suite_name = "suite.txt";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config_path,
                    "flat key=value config file");
    sub->add_option("--out", flags.out_dir, "output directory");
    sub->add_option("--seed", flags.seed, "run seed (overrides the config)")
        ->each([&](const std::string&) { flags.seed_set = true; });
  };

  CLI::App* run = app.add_subcommand("run", "one full sequential run");
  add_common(run);
  CLI::App* ablate =
      app.add_subcommand("ablate", "objective ablation grids");
  add_common(ablate);
  ablate->add_option("--table", ablate_which,
                     "strategy | objective | both (default both)")
      ->check(CLI::IsMember({"strategy", "objective", "both"}));
  ablate->add_flag("--directional", ablate_directional,
                   "also run the multi-seed full-vs-baseline comparison");
  CLI::App* sweep = app.add_subcommand("sweep", "hyperparameter sweeps");
  add_common(sweep);
  sweep->add_option("--axis", sweep_axis, "prompt-len | layers");
  CLI::App* osearch = app.add_subcommand(
      "order-search", "rank learning orders by forgetting");
  add_common(osearch);
  osearch->add_option("--orders", orders_path,
                      "file of comma-separated type orders, one per line");
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference check of the full objective");
  add_common(gradcheck);
  CLI::App* gendata =
      app.add_subcommand("gen-data", "generate and save a task suite");
  add_common(gendata);
  gendata->add_option("--name", suite_name, "suite file name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return colpro::kExitUsage;
  }

  try {
    if (run->parsed()) return cmd_run(flags);
    if (ablate->parsed())
      return cmd_ablate(flags, ablate_which, ablate_directional);
    if (sweep->parsed()) return cmd_sweep(flags, sweep_axis);
    if (osearch->parsed()) return cmd_order_search(flags, orders_path);
    if (gradcheck->parsed()) return cmd_gradcheck(flags);
    if (gendata->parsed()) return cmd_gen_data(flags, suite_name);
    std::cerr << "no subcommand given\n";
    return colpro::kExitUsage;
  } catch (const colpro::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return colpro::kExitConfig;
  } catch (const colpro::AuditError& e) {
    std::cerr << "audit failure: " << e.what() << "\n";
    return colpro::kExitAudit;
  } catch (const colpro::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return colpro::kExitNumeric;
  } catch (const colpro::OracleError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return colpro::kExitNumeric;
  } catch (const colpro::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return colpro::kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
