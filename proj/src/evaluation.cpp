#include "velocorr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace velocorr::evaluation {
namespace {

double round7(double x) { return std::round(x * 1e7) / 1e7; }

std::int64_t onset_cost_ns(const midi::NoteEvent& r, const midi::NoteEvent& e) {
  return std::llround(std::abs(r.onset_s - e.onset_s) * 1e9);
}

struct Score {
  std::size_t card = 0;
  std::int64_t cost = 0;
};

bool better(const Score& a, const Score& b) {
  return a.card != b.card ? a.card > b.card : a.cost < b.cost;
}

// Exact solver for one connected component: refs are visited in index order
// and the memo is keyed by (ref position, used-estimate mask). At equal
// (cardinality, cost) taking a pair beats skipping, and a smaller estimate
// beats a larger one, which is exactly the lexicographic order on pair lists.
class ComponentDp {
 public:
  ComponentDp(std::vector<std::vector<std::pair<int, std::int64_t>>> adj) : adj_(std::move(adj)) {}

  std::vector<std::pair<int, int>> solve() {
    std::vector<std::pair<int, int>> out;
    std::uint32_t mask = 0;
    for (int i = 0; i < int(adj_.size()); ++i) {
      const int c = eval(i, mask).choice;
      if (c >= 0) {
        out.emplace_back(i, c);
        mask |= 1u << c;
      }
    }
    return out;
  }

 private:
  struct Entry {
    Score score;
    int choice = -1;
  };

  Entry eval(int i, std::uint32_t mask) {
    if (i == int(adj_.size())) return {};
    const std::uint64_t key = (std::uint64_t(i) << 32) | mask;
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    Entry best;
    best.score = eval(i + 1, mask).score;
    best.choice = -1;
    bool have_take = false;
    for (const auto& [j, cost] : adj_[i]) {
      if (mask & (1u << j)) continue;
      Score s = eval(i + 1, mask | (1u << j)).score;
      s.card += 1;
      s.cost += cost;
      // Among equal scores prefer any take over skipping and the first
      // (smallest) estimate among takes.
      if (better(s, best.score) ||
          (!better(best.score, s) && !have_take)) {
        best.score = s;
        best.choice = j;
        have_take = true;
      }
    }
    memo_.emplace(key, best);
    return best;
  }

  std::vector<std::vector<std::pair<int, std::int64_t>>> adj_;
  std::unordered_map<std::uint64_t, Entry> memo_;
};

// Successive shortest paths; used only for components too large for the
// exact solver. Maximum cardinality at minimum cost, deterministic, without
// the lexicographic tie-break.
std::vector<std::pair<int, int>> min_cost_matching(
    int n_ref, int n_est, const std::vector<std::vector<std::pair<int, std::int64_t>>>& adj) {
  struct Edge {
    int to;
    int cap;
    std::int64_t cost;
  };
  const int source = n_ref + n_est;
  const int sink = source + 1;
  const int n = sink + 1;
  std::vector<Edge> edges;
  std::vector<std::vector<int>> g(n);
  auto add = [&](int u, int v, std::int64_t c) {
    g[u].push_back(int(edges.size()));
    edges.push_back({v, 1, c});
    g[v].push_back(int(edges.size()));
    edges.push_back({u, 0, -c});
  };
  for (int i = 0; i < n_ref; ++i) add(source, i, 0);
  for (int j = 0; j < n_est; ++j) add(n_ref + j, sink, 0);
  for (int i = 0; i < n_ref; ++i) {
    for (const auto& [j, c] : adj[i]) add(i, n_ref + j, c);
  }
  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
  while (true) {
    std::vector<std::int64_t> dist(n, kInf);
    std::vector<int> via(n, -1);
    dist[source] = 0;
    for (bool changed = true; changed;) {  // Bellman-Ford
      changed = false;
      for (int u = 0; u < n; ++u) {
        if (dist[u] == kInf) continue;
        for (int e : g[u]) {
          if (edges[e].cap > 0 && dist[u] + edges[e].cost < dist[edges[e].to]) {
            dist[edges[e].to] = dist[u] + edges[e].cost;
            via[edges[e].to] = e;
            changed = true;
          }
        }
      }
    }
    if (dist[sink] == kInf) break;
    for (int v = sink; v != source; v = edges[via[v] ^ 1].to) {
      edges[via[v]].cap -= 1;
      edges[via[v] ^ 1].cap += 1;
    }
  }
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n_ref; ++i) {
    for (int e : g[i]) {
      if ((e & 1) == 0 && edges[e].to >= n_ref && edges[e].to < source && edges[e].cap == 0) {
        out.emplace_back(i, edges[e].to - n_ref);
      }
    }
  }
  return out;
}

constexpr std::size_t kExactEstimateLimit = 16;

}  // namespace

MaeStd mae_std(std::span<const int> reference, std::span<const int> estimate) {
  if (reference.size() != estimate.size()) {
    throw EvalError("mae_std: " + std::to_string(reference.size()) + " reference vs " +
                    std::to_string(estimate.size()) + " estimated velocities");
  }
  if (reference.empty()) throw EvalError("mae_std: no notes, mean is undefined");
  const std::size_t n = reference.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::abs(reference[i] - estimate[i]);
  const double mae = sum / double(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::abs(reference[i] - estimate[i]) - mae;
    sq += d * d;
  }
  return MaeStd{mae, std::sqrt(sq / double(n)), n};
}

std::vector<Pair> timing_candidates(const std::vector<midi::NoteEvent>& reference,
                                    const std::vector<midi::NoteEvent>& estimate,
                                    const MatchConfig& cfg) {
  std::vector<Pair> out;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const auto& r = reference[i];
    const double off_tol =
        std::max(cfg.offset_min_tolerance, cfg.offset_ratio * (r.offset_s - r.onset_s));
    for (std::size_t j = 0; j < estimate.size(); ++j) {
      const auto& e = estimate[j];
      if (e.pitch != r.pitch) continue;
      if (round7(std::abs(e.onset_s - r.onset_s)) > cfg.onset_tolerance) continue;
      if (cfg.use_offset && round7(std::abs(e.offset_s - r.offset_s)) > off_tol) continue;
      out.emplace_back(i, j);
    }
  }
  return out;
}

std::vector<Pair> max_matching(const std::vector<midi::NoteEvent>& reference,
                               const std::vector<midi::NoteEvent>& estimate,
                               const std::vector<Pair>& candidates) {
  // Connected components over the candidate graph (union-find on refs+ests).
  const std::size_t nr = reference.size();
  std::vector<std::size_t> parent(nr + estimate.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [i, j] : candidates) parent[find(i)] = find(nr + j);

  std::unordered_map<std::size_t, std::vector<Pair>> groups;
  std::vector<std::size_t> order;
  for (const auto& p : candidates) {
    const std::size_t root = find(p.first);
    auto [it, fresh] = groups.try_emplace(root);
    if (fresh) order.push_back(root);
    it->second.push_back(p);
  }

  std::vector<Pair> result;
  for (std::size_t root : order) {
    auto& edges = groups[root];
    std::vector<std::size_t> refs, ests;
    for (const auto& [i, j] : edges) {
      refs.push_back(i);
      ests.push_back(j);
    }
    std::sort(refs.begin(), refs.end());
    refs.erase(std::unique(refs.begin(), refs.end()), refs.end());
    std::sort(ests.begin(), ests.end());
    ests.erase(std::unique(ests.begin(), ests.end()), ests.end());
    auto local = [](const std::vector<std::size_t>& v, std::size_t x) {
      return int(std::lower_bound(v.begin(), v.end(), x) - v.begin());
    };
    std::vector<std::vector<std::pair<int, std::int64_t>>> adj(refs.size());
    for (const auto& [i, j] : edges) {
      adj[local(refs, i)].emplace_back(local(ests, j),
                                       onset_cost_ns(reference[i], estimate[j]));
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());
    const auto picked = ests.size() <= kExactEstimateLimit
                            ? ComponentDp(std::move(adj)).solve()
                            : min_cost_matching(int(refs.size()), int(ests.size()), adj);
    for (const auto& [li, lj] : picked) result.emplace_back(refs[li], ests[lj]);
  }
  std::sort(result.begin(), result.end());
  return result;
}

MatchResult match_notes(const std::vector<midi::NoteEvent>& reference,
                        const std::vector<midi::NoteEvent>& estimate, const MatchConfig& cfg) {
  MatchResult out;
  if (reference.empty()) return out;
  const auto candidates = timing_candidates(reference, estimate, cfg);
  const auto timing_only = max_matching(reference, estimate, candidates);

  int max_ref = 0;
  for (const auto& r : reference) max_ref = std::max(max_ref, r.velocity);
  auto ref_scaled = [&](std::size_t i) {
    return max_ref > 0 ? double(reference[i].velocity) / double(max_ref) : 0.0;
  };
  double re = 0.0, ee = 0.0;
  for (const auto& [i, j] : timing_only) {
    const double e = estimate[j].velocity;
    re += ref_scaled(i) * e;
    ee += e * e;
  }
  out.velocity_scale = ee > 0.0 ? re / ee : 0.0;

  std::vector<Pair> surviving;
  for (const auto& [i, j] : candidates) {
    const double resid = std::abs(ref_scaled(i) - out.velocity_scale * estimate[j].velocity);
    if (round7(resid) <= cfg.velocity_tolerance) surviving.emplace_back(i, j);
  }
  out.pairs = max_matching(reference, estimate, surviving);
  out.recall = double(out.pairs.size()) / double(reference.size());
  return out;
}

std::vector<midi::NoteEvent> estimated_notes(const PieceInput& piece,
                                             const models::MapOptions& map) {
  if (piece.grids.size() != piece.segments.size()) {
    throw EvalError("piece '" + piece.id + "': " + std::to_string(piece.grids.size()) +
                    " grids for " + std::to_string(piece.segments.size()) + " segments");
  }
  const std::size_t n = piece.reference.notes.size();
  std::vector<int> velocity(n, -1);
  for (std::size_t s = 0; s < piece.segments.size(); ++s) {
    const auto& sf = piece.segments[s].features;
    if (piece.grids[s].values.rows() != sf.onset.rows() ||
        piece.grids[s].values.cols() != sf.onset.cols()) {
      throw EvalError("piece '" + piece.id + "': grid " + std::to_string(s) +
                      " does not match its segment shape");
    }
    for (const auto& nv : models::map_onset_velocities(piece.grids[s], sf, map)) {
      if (nv.note_id < n) velocity[nv.note_id] = nv.velocity;
    }
  }
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < n; ++i) {
    if (velocity[i] < 0) missing.push_back(i);
  }
  if (!missing.empty()) {
    std::ostringstream os;
    os << "piece '" << piece.id << "': " << missing.size() << " notes not covered by any segment:";
    for (std::size_t k = 0; k < std::min<std::size_t>(missing.size(), 20); ++k) {
      os << ' ' << missing[k];
    }
    if (missing.size() > 20) os << " ...";
    throw EvalError(os.str());
  }
  std::vector<midi::NoteEvent> out = piece.reference.notes;
  for (std::size_t i = 0; i < n; ++i) out[i].velocity = velocity[i];
  return out;
}

EvalReport evaluate_pipeline(const std::vector<PieceInput>& pieces, const MatchConfig& cfg,
                             const models::MapOptions& map) {
  EvalReport report;
  std::vector<int> all_ref, all_est;
  for (const auto& piece : pieces) {
    const auto est = estimated_notes(piece, map);
    PieceReport pr;
    pr.id = piece.id;
    pr.n_reference_notes = est.size();
    std::vector<int> ref_v, est_v;
    for (std::size_t i = 0; i < est.size(); ++i) {
      ref_v.push_back(piece.reference.notes[i].velocity);
      est_v.push_back(est[i].velocity);
    }
    if (!ref_v.empty()) {
      const auto ms = mae_std(ref_v, est_v);
      pr.mae = ms.mae;
      pr.std = ms.std;
      const auto m = match_notes(piece.reference.notes, est, cfg);
      pr.recall = m.recall;
      pr.n_matched = m.pairs.size();
    }
    all_ref.insert(all_ref.end(), ref_v.begin(), ref_v.end());
    all_est.insert(all_est.end(), est_v.begin(), est_v.end());
    report.n_reference_notes += pr.n_reference_notes;
    report.n_matched += pr.n_matched;
    report.pieces.push_back(std::move(pr));
  }
  if (all_ref.empty()) throw EvalError("evaluation set contains no notes");
  const auto ms = mae_std(all_ref, all_est);
  report.mae = ms.mae;
  report.std = ms.std;
  report.recall = double(report.n_matched) / double(report.n_reference_notes);
  return report;
}

std::string EvalReport::to_text() const {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string("n/a"); };
  std::ostringstream os;
  os << "# velocorr evaluation report v1\n";
  os << "mae=" << num(mae) << '\n';
  os << "std=" << num(std) << '\n';
  os << "recall=" << opt(recall) << '\n';
  os << "n_reference_notes=" << n_reference_notes << '\n';
  os << "n_matched=" << n_matched << '\n';
  os << "n_pieces=" << pieces.size() << '\n';
  os << "# piece id n_reference_notes n_matched mae std recall\n";
  for (const auto& p : pieces) {
    os << "piece " << p.id << ' ' << p.n_reference_notes << ' ' << p.n_matched << ' '
       << num(p.mae) << ' ' << num(p.std) << ' ' << opt(p.recall) << '\n';
  }
  return os.str();
}

}  // namespace velocorr::evaluation
