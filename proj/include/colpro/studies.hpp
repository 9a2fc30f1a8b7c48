#pragma once

#include <string>
#include <vector>

#include "colpro/harness.hpp"

namespace colpro {

struct StudyRow {
  std::string label;
  std::vector<std::pair<std::string, std::string>> cells;  // column -> value
  RunReport report;
};

struct StudyTable {
  std::string kind;
  std::vector<std::string> columns;
  std::vector<StudyRow> rows;
  int duplicates_removed = 0;
};

/// Strategy ablation: the answer objective always on, question/video
/// objective groups toggled over the 2x2 grid.
StudyTable ablate_strategies(const Suite& suite,
                             const std::vector<std::string>& order,
                             const TrainConfig& cfg);

/// Objective-term ablation: answer and question-generation terms always on,
/// {negative-guided, temporal, distillation} terms staged in.
StudyTable ablate_objectives(const Suite& suite,
                             const std::vector<std::string>& order,
                             const TrainConfig& cfg);

/// Prompt-length sweep; the documented grid is {5, 10, 15, 20}.
StudyTable sweep_prompt_len(const Suite& suite,
                            const std::vector<std::string>& order,
                            const TrainConfig& cfg,
                            const std::vector<int>& lengths = {5, 10, 15,
                                                               20});

/// Prompt-placement sweep over (g_end, e_end) pairs, including the
/// degenerate no-general and no-expert cells. An empty grid derives one
/// around the configured defaults.
StudyTable sweep_layers(const Suite& suite,
                        const std::vector<std::string>& order,
                        const TrainConfig& cfg,
                        std::vector<std::pair<int, int>> grid = {});

/// Runs every unique candidate order with the answer-only baseline losses and
/// ranks them by forgetting, worst first. Duplicates are dropped with a
/// notice.
StudyTable order_search(const Suite& suite,
                        std::vector<std::vector<std::string>> candidates,
                        const TrainConfig& cfg);

struct DirectionalComparison {
  std::vector<std::uint64_t> seeds;
  std::vector<double> fog_full, fog_baseline;
  std::vector<double> acc_full, acc_baseline;
  double mean_fog_full = 0, mean_fog_baseline = 0;
  bool trend_holds = false;  // mean fog(full) <= mean fog(baseline)
};

/// Multi-seed comparison of the full objective set against the answer-only
/// baseline. Reported, not hard-gated: the trend flag records whether less
/// forgetting was observed.
DirectionalComparison compare_full_vs_baseline(
    const Suite& suite, const std::vector<std::string>& order,
    const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds);

}  // namespace colpro
