#include "colpro/metrics.hpp"

#include <algorithm>
#include <iostream>

#include "colpro/errors.hpp"

namespace colpro {

void AccuracyMatrix::validate() const {
  if (rows.empty()) throw ContractError("accuracy matrix is empty");
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != t + 1)
      throw ContractError("accuracy matrix is not lower-triangular at stage " +
                          std::to_string(t));
    for (double v : rows[t])
      if (v < 0.0 || v > 1.0)
        throw ContractError("accuracy outside [0, 1] in matrix");
  }
}

double avg_acc(const AccuracyMatrix& m) {
  m.validate();
  const std::vector<double>& last = m.rows.back();
  double sum = 0;
  for (double v : last) sum += v;
  return sum / static_cast<double>(last.size());
}

double avg_fog(const AccuracyMatrix& m) {
  m.validate();
  const int t_final = m.stages() - 1;
  if (t_final < 1) {
    std::cerr << "[colpro] warning: forgetting is undefined for a single "
                 "task, reporting 0\n";
    return 0.0;
  }
  double sum = 0;
  for (int j = 0; j < t_final; ++j) {
    double best_earlier = 0.0;
    for (int t = j; t < t_final; ++t)
      best_earlier = std::max(best_earlier,
                              m.rows[static_cast<std::size_t>(t)]
                                    [static_cast<std::size_t>(j)]);
    const double drop =
        best_earlier -
        m.rows[static_cast<std::size_t>(t_final)][static_cast<std::size_t>(j)];
    sum += std::max(0.0, drop);
  }
  return sum / static_cast<double>(t_final);
}

}  // namespace colpro
