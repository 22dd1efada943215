#include <algorithm>
#include <cmath>
#include <cstdint>

#include "ensmooth/error.hpp"
#include "ensmooth/mps.hpp"

namespace ensmooth::param {

namespace {

struct Lag {
  int di;
  int dj;
};

// All lags within the target extent, nearest first; ties keep a fixed order.
std::vector<Lag> sorted_lags(const Grid2D& g) {
  std::vector<Lag> lags;
  for (int dj = -(g.ny() - 1); dj < g.ny(); ++dj)
    for (int di = -(g.nx() - 1); di < g.nx(); ++di)
      if (di != 0 || dj != 0) lags.push_back({di, dj});
  std::stable_sort(lags.begin(), lags.end(), [](const Lag& a, const Lag& b) {
    return a.di * a.di + a.dj * a.dj < b.di * b.di + b.dj * b.dj;
  });
  return lags;
}

}  // namespace

void DsParams::validate() const {
  if (n_neighbors < 1) throw InvalidInput("DS needs at least one neighbour");
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw InvalidInput("DS distance threshold must lie in [0, 1]");
  if (!(scan_fraction > 0.0 && scan_fraction <= 1.0))
    throw InvalidInput("DS scan fraction must lie in (0, 1]");
}

ScalarField direct_sampling(const TrainingImage& ti, const Grid2D& target,
                            const std::vector<ConditioningPoint>& conditioning,
                            const DsParams& ds, RngStream& rng) {
  ds.validate();
  const Grid2D& tg = ti.grid();
  if (tg.size() == 0) throw InvalidInput("empty training image");

  // Work on facies codes: 0 = low, 1 = high, -1 = not yet simulated.
  std::vector<std::int8_t> ti_code(tg.size());
  for (int n = 0; n < tg.size(); ++n) ti_code[n] = ti.field[n] == ti.high ? 1 : 0;

  std::vector<std::int8_t> sim(target.size(), -1);
  for (const auto& c : conditioning) {
    if (c.node < 0 || c.node >= target.size())
      throw InvalidInput("conditioning node outside the target grid");
    if (c.value != ti.low && c.value != ti.high)
      throw InvalidInput("conditioning value is not a training-image facies");
    const std::int8_t code = c.value == ti.high ? 1 : 0;
    if (sim[c.node] != -1 && sim[c.node] != code)
      throw InvalidInput("conflicting conditioning values at one node");
    sim[c.node] = code;
  }

  std::vector<int> path;
  for (int n = 0; n < target.size(); ++n)
    if (sim[n] == -1) path.push_back(n);
  for (std::size_t k = path.size(); k > 1; --k)
    std::swap(path[k - 1], path[rng.below(k)]);

  const std::vector<Lag> lags = sorted_lags(target);
  const long ti_count = tg.size();
  const long scan = std::max(1L, static_cast<long>(std::ceil(ds.scan_fraction * ti_count)));

  std::vector<Lag> event_lag;
  std::vector<std::int8_t> event_val;
  for (int node : path) {
    const int ci = target.col(node), cj = target.row(node);
    event_lag.clear();
    event_val.clear();
    for (const Lag& l : lags) {
      const int i = ci + l.di, j = cj + l.dj;
      if (i < 0 || j < 0 || i >= target.nx() || j >= target.ny()) continue;
      const std::int8_t v = sim[target.index(i, j)];
      if (v < 0) continue;
      event_lag.push_back(l);
      event_val.push_back(v);
      if (static_cast<int>(event_lag.size()) == ds.n_neighbors) break;
    }

    const long start = static_cast<long>(rng.below(static_cast<std::uint64_t>(ti_count)));
    if (event_lag.empty()) {
      sim[node] = ti_code[start];
      continue;
    }

    const int n_event = static_cast<int>(event_lag.size());
    const int accept = static_cast<int>(std::floor(ds.threshold * n_event + 1e-12));
    int best_mismatch = n_event + 1;
    std::int8_t best_value = ti_code[start];
    for (long s = 0; s < scan; ++s) {
      const long pos = (start + s) % ti_count;
      const int ti_i = tg.col(static_cast<int>(pos)), ti_j = tg.row(static_cast<int>(pos));
      int mismatch = 0;
      for (int e = 0; e < n_event && mismatch < best_mismatch; ++e) {
        const int i = ti_i + event_lag[e].di, j = ti_j + event_lag[e].dj;
        // Lags falling outside the TI count as mismatches.
        if (i < 0 || j < 0 || i >= tg.nx() || j >= tg.ny() ||
            ti_code[tg.index(i, j)] != event_val[e])
          ++mismatch;
      }
      if (mismatch < best_mismatch) {
        best_mismatch = mismatch;
        best_value = ti_code[pos];
        if (mismatch <= accept) break;
      }
    }
    sim[node] = best_value;
  }

  Eigen::VectorXd out(target.size());
  for (int n = 0; n < target.size(); ++n) out[n] = sim[n] == 1 ? ti.high : ti.low;
  return ScalarField(target, std::move(out));
}

}  // namespace ensmooth::param
