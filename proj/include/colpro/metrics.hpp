#pragma once

#include <vector>

namespace colpro {

/// Lower-triangular accuracy record: rows[t][j] is the accuracy on task j's
/// evaluation set measured after finishing training stage t, for j <= t.
struct AccuracyMatrix {
  std::vector<std::vector<double>> rows;

  int stages() const { return static_cast<int>(rows.size()); }
  void validate() const;
};

/// Mean of the final row.
double avg_acc(const AccuracyMatrix& m);

/// Mean over the first T-1 tasks of the drop from each task's best earlier
/// accuracy to its final accuracy, clamped at zero per column so backward
/// transfer on one task cannot hide forgetting on another. T < 2 is defined
/// as 0 (with a warning).
double avg_fog(const AccuracyMatrix& m);

}  // namespace colpro
