#include "colpro/studies.hpp"

#include <algorithm>
#include <iostream>

#include "colpro/errors.hpp"
#include "colpro/textio.hpp"

namespace colpro {

namespace {

std::string metric(double v) { return fmt_real(v); }

std::string onoff(bool b) { return b ? "on" : "off"; }

StudyRow make_row(std::string label,
                  std::vector<std::pair<std::string, std::string>> cells,
                  RunReport report) {
  StudyRow row;
  row.label = std::move(label);
  row.cells = std::move(cells);
  row.cells.emplace_back("avg_acc", metric(report.avg_acc_value));
  row.cells.emplace_back("avg_fog", metric(report.avg_fog_value));
  row.report = std::move(report);
  return row;
}

}  // namespace

StudyTable ablate_strategies(const Suite& suite,
                             const std::vector<std::string>& order,
                             const TrainConfig& cfg) {
  const Backbone backbone = pretrain_backbone(suite, cfg);
  StudyTable table;
  table.kind = "strategy-ablation";
  table.columns = {"l_a", "l_q", "l_v", "avg_acc", "avg_fog"};
  const bool grid[4][2] = {{false, false}, {true, false}, {false, true},
                           {true, true}};
  for (const auto& [use_q, use_v] : grid) {
    TrainConfig cell = cfg;
    cell.loss.use_q_gen = use_q;
    cell.loss.use_q_neg = use_q;
    cell.loss.use_v_dyn = use_v;
    cell.loss.use_v_con = use_v;
    RunReport report = train_sequence(suite, order, cell, &backbone);
    table.rows.push_back(make_row(
        "a=on q=" + onoff(use_q) + " v=" + onoff(use_v),
        {{"l_a", "on"}, {"l_q", onoff(use_q)}, {"l_v", onoff(use_v)}},
        std::move(report)));
  }
  return table;
}

StudyTable ablate_objectives(const Suite& suite,
                             const std::vector<std::string>& order,
                             const TrainConfig& cfg) {
  const Backbone backbone = pretrain_backbone(suite, cfg);
  StudyTable table;
  table.kind = "objective-ablation";
  table.columns = {"l_q_neg", "l_v_dyn", "l_v_con", "avg_acc", "avg_fog"};
  const bool grid[5][3] = {{false, false, false},
                           {true, false, false},
                           {true, true, false},
                           {true, false, true},
                           {true, true, true}};
  for (const auto& [neg, dyn, con] : grid) {
    TrainConfig cell = cfg;
    cell.loss.use_q_gen = true;
    cell.loss.use_q_neg = neg;
    cell.loss.use_v_dyn = dyn;
    cell.loss.use_v_con = con;
    RunReport report = train_sequence(suite, order, cell, &backbone);
    table.rows.push_back(make_row(
        "neg=" + onoff(neg) + " dyn=" + onoff(dyn) + " con=" + onoff(con),
        {{"l_q_neg", onoff(neg)},
         {"l_v_dyn", onoff(dyn)},
         {"l_v_con", onoff(con)}},
        std::move(report)));
  }
  return table;
}

StudyTable sweep_prompt_len(const Suite& suite,
                            const std::vector<std::string>& order,
                            const TrainConfig& cfg,
                            const std::vector<int>& lengths) {
  if (lengths.empty()) throw ConfigError("prompt-length sweep: empty axis");
  const Backbone backbone = pretrain_backbone(suite, cfg);
  StudyTable table;
  table.kind = "prompt-length-sweep";
  table.columns = {"prompt_len", "avg_acc", "avg_fog"};
  for (int len : lengths) {
    TrainConfig cell = cfg;
    cell.model.prompt_len = len;
    cell.model.validate();
    RunReport report = train_sequence(suite, order, cell, &backbone);
    table.rows.push_back(make_row("len=" + std::to_string(len),
                                  {{"prompt_len", std::to_string(len)}},
                                  std::move(report)));
  }
  return table;
}

StudyTable sweep_layers(const Suite& suite,
                        const std::vector<std::string>& order,
                        const TrainConfig& cfg,
                        std::vector<std::pair<int, int>> grid) {
  if (grid.empty()) {
    // shape mirrors the documented placement study: move the boundary around
    // the defaults and include both degenerate cells
    const int g = cfg.model.g_end, e = cfg.model.e_end,
              n = cfg.model.n_layers;
    const std::pair<int, int> candidates[] = {
        {0, e},          {std::max(0, g - 1), e},
        {g, e},          {std::min(e, g + 1), e},
        {g, std::max(g, e - 1)}, {g, std::min(n, e + 1)},
        {e, e}};
    for (const auto& c : candidates)
      if (std::find(grid.begin(), grid.end(), c) == grid.end())
        grid.push_back(c);
  }
  const Backbone backbone = pretrain_backbone(suite, cfg);
  StudyTable table;
  table.kind = "layer-placement-sweep";
  table.columns = {"g_end", "e_end", "avg_acc", "avg_fog"};
  for (const auto& [g, e] : grid) {
    TrainConfig cell = cfg;
    cell.model.g_end = g;
    cell.model.e_end = e;
    cell.model.validate();  // invalid (g, e) pairs are a config error
    RunReport report = train_sequence(suite, order, cell, &backbone);
    table.rows.push_back(
        make_row("g=" + std::to_string(g) + " e=" + std::to_string(e),
                 {{"g_end", std::to_string(g)}, {"e_end", std::to_string(e)}},
                 std::move(report)));
  }
  return table;
}

StudyTable order_search(const Suite& suite,
                        std::vector<std::vector<std::string>> candidates,
                        const TrainConfig& cfg) {
  if (candidates.size() < 2)
    throw ConfigError("order search needs at least two candidate orders");

  StudyTable table;
  table.kind = "order-search";
  table.columns = {"order", "avg_fog", "avg_acc"};

  std::vector<std::vector<std::string>> unique;
  for (auto& c : candidates) {
    if (std::find(unique.begin(), unique.end(), c) != unique.end()) {
      ++table.duplicates_removed;
      std::cerr << "[colpro] notice: duplicate candidate order dropped\n";
      continue;
    }
    unique.push_back(std::move(c));
  }

  // the selection protocol scores orders under the answer-only baseline
  TrainConfig baseline = cfg;
  baseline.loss.use_q_gen = false;
  baseline.loss.use_q_neg = false;
  baseline.loss.use_v_dyn = false;
  baseline.loss.use_v_con = false;

  const Backbone backbone = pretrain_backbone(suite, baseline);
  for (const auto& order : unique) {
    RunReport report = train_sequence(suite, order, baseline, &backbone);
    std::string label;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (i) label += ",";
      label += order[i];
    }
    table.rows.push_back(
        make_row(label, {{"order", label}}, std::move(report)));
  }
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const StudyRow& a, const StudyRow& b) {
                     return a.report.avg_fog_value > b.report.avg_fog_value;
                   });
  return table;
}

DirectionalComparison compare_full_vs_baseline(
    const Suite& suite, const std::vector<std::string>& order,
    const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  if (seeds.size() < 2)
    throw ConfigError("directional comparison needs several seeds");
  DirectionalComparison out;
  out.seeds = seeds;
  for (std::uint64_t seed : seeds) {
    TrainConfig full = cfg;
    full.seed = seed;
    TrainConfig base = full;
    base.loss.use_q_gen = false;
    base.loss.use_q_neg = false;
    base.loss.use_v_dyn = false;
    base.loss.use_v_con = false;
    const Backbone backbone = pretrain_backbone(suite, full);
    const RunReport rf = train_sequence(suite, order, full, &backbone);
    const RunReport rb = train_sequence(suite, order, base, &backbone);
    out.fog_full.push_back(rf.avg_fog_value);
    out.acc_full.push_back(rf.avg_acc_value);
    out.fog_baseline.push_back(rb.avg_fog_value);
    out.acc_baseline.push_back(rb.avg_acc_value);
  }
  for (double v : out.fog_full) out.mean_fog_full += v;
  for (double v : out.fog_baseline) out.mean_fog_baseline += v;
  out.mean_fog_full /= static_cast<double>(out.fog_full.size());
  out.mean_fog_baseline /= static_cast<double>(out.fog_baseline.size());
  out.trend_holds = out.mean_fog_full <= out.mean_fog_baseline;
  return out;
}

}  // namespace colpro
