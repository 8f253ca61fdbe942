#pragma once

#include <map>
#include <string>
#include <vector>

#include "lgmjoint/model_spec.hpp"

namespace lgmjoint {

/// A random-effect group: one precision matrix shared by all subjects, one
/// latent block of size `dim` per subject. Longitudinal markers contribute
/// terms (possibly merged across markers when cor_long), survival frailty
/// terms get their own dim-1 groups.
struct REGroup {
  struct TermRef {
    int marker = -1;  // longitudinal index, or -1 for a survival frailty
    int surv = -1;
    Term term;
    std::string label;
  };
  std::vector<TermRef> terms;
  int offset0 = 0;  // start of subject 0's block

  int dim() const { return static_cast<int>(terms.size()); }
  int block_offset(int subject) const { return offset0 + subject * dim(); }
};

/// Latent block for a random-walk baseline: one value per hazard interval.
struct BaselineBlock {
  int surv = -1;
  int offset = 0;
  int n = 0;
  std::vector<double> cuts;  // n+1 cutpoints

  int interval_of(double t) const {
    // intervals are (c_{m-1}, c_m]; times beyond the last cut map to the
    // final interval
    for (int m = 1; m <= n; ++m)
      if (t <= cuts[m]) return m - 1;
    return n - 1;
  }
};

/// Index map of the joint latent vector: longitudinal fixed effects, then
/// survival fixed effects, then per-subject random-effect blocks grouped by
/// group, then baseline value blocks.
struct LatentLayout {
  std::vector<int> long_fixed_offset;
  std::vector<int> long_fixed_dim;
  std::vector<int> surv_fixed_offset;
  std::vector<int> surv_fixed_dim;
  std::vector<REGroup> re_groups;
  std::vector<BaselineBlock> baselines;  // one entry per rw-baseline survival model
  int n_latent = 0;

  std::vector<std::string> subjects;
  std::map<std::string, int> subject_index;
  std::vector<std::string> names;  // one per latent element
  double max_time = 0.0;           // maximum observed follow-up

  int n_subjects() const { return static_cast<int>(subjects.size()); }

  /// Positions of marker k's random-effect terms: (group, slot) pairs in
  /// model order.
  struct REPos {
    int group;
    int slot;
  };
  std::vector<std::vector<REPos>> marker_re;  // [marker][term]
  std::vector<REPos> frailty_re;              // [surv], group == -1 when absent

  const BaselineBlock* baseline_for(int surv) const {
    for (const auto& b : baselines)
      if (b.surv == surv) return &b;
    return nullptr;
  }

  int subject_of(const std::string& id) const {
    auto it = subject_index.find(id);
    if (it == subject_index.end()) throw spec_error("unknown subject id: " + id);
    return it->second;
  }
};

}  // namespace lgmjoint
