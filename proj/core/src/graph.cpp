#include "cohere/graph.hpp"

#include <algorithm>
#include <deque>

namespace cohere {

namespace {

const std::vector<Step> kNoEdges;

}  // namespace

bool ReductionGraph::contains(const CanonicalTerm& v) const {
  return std::binary_search(vertices.begin(), vertices.end(), v);
}

const std::vector<Step>& ReductionGraph::out_edges(
    const CanonicalTerm& v) const {
  auto it = out.find(v);
  return it == out.end() ? kNoEdges : it->second;
}

bool ReductionGraph::is_frontier(const CanonicalTerm& v) const {
  return frontier.count(v) != 0;
}

std::size_t ReductionGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& [v, edges] : out) n += edges.size();
  return n;
}

bool ReductionGraph::acyclic() const { return !find_cycle(*this).has_value(); }

ReductionGraph explore(const TwoStructure& s,
                       const std::vector<CanonicalTerm>& seeds,
                       const Limits& lim) {
  ReductionGraph g;
  std::set<CanonicalTerm> known;
  std::vector<CanonicalTerm> level;
  for (const CanonicalTerm& seed : seeds) {
    if (!known.insert(seed).second) continue;
    if (static_cast<int>(known.size()) > lim.max_vertices) {
      known.erase(seed);
      g.seeds_truncated = true;
      continue;
    }
    level.push_back(seed);
  }
  std::sort(level.begin(), level.end());

  for (int depth = 0; !level.empty(); ++depth) {
    if (depth >= lim.max_depth) {
      // Discovered but never expanded.
      for (const CanonicalTerm& v : level) g.frontier.insert(v);
      break;
    }
    std::vector<CanonicalTerm> next;
    for (const CanonicalTerm& v : level) {
      std::vector<Step> kept;
      bool truncated = false;
      for (Step& st : enumerate_steps(s, v, lim.unit_budget)) {
        CanonicalTerm tgt{st.target};
        if (!known.count(tgt)) {
          if (static_cast<int>(known.size()) >= lim.max_vertices) {
            // The edge's endpoint cannot be materialized; drop the edge and
            // mark the source incomplete.
            truncated = true;
            continue;
          }
          known.insert(tgt);
          next.push_back(tgt);
        }
        kept.push_back(std::move(st));
      }
      g.out[v] = std::move(kept);
      if (truncated) g.frontier.insert(v);
    }
    std::sort(next.begin(), next.end());
    level = std::move(next);
  }

  g.vertices.assign(known.begin(), known.end());
  for (const CanonicalTerm& v : g.vertices) g.out.try_emplace(v);
  return g;
}

std::vector<std::vector<Step>> hom_paths(const ReductionGraph& g,
                                         const CanonicalTerm& src,
                                         const CanonicalTerm& tgt,
                                         const Limits& lim) {
  std::vector<std::vector<Step>> results;
  if (!g.contains(src) || !g.contains(tgt)) return results;
  std::vector<Step> path;
  std::function<void(const CanonicalTerm&)> dfs =
      [&](const CanonicalTerm& v) {
        if (v == tgt) results.push_back(path);
        if (static_cast<int>(path.size()) >= lim.max_path_length) return;
        for (const Step& st : g.out_edges(v)) {
          path.push_back(st);
          dfs(CanonicalTerm{st.target});
          path.pop_back();
        }
      };
  dfs(src);
  return results;
}

RankingReport verify_ranking(const TwoStructure& s, const Ranking& r,
                             int max_term_size, bool repetition_free,
                             int unit_budget) {
  RankingReport report;
  std::vector<std::string> gens(s.sig.generators().begin(),
                                s.sig.generators().end());
  for (const CanonicalTerm& t : enumerate_canonical_terms(
           s.sig, s.theory, gens, max_term_size, repetition_free)) {
    ++report.terms_checked;
    long long source_value = r.value(t);
    for (const Step& st : enumerate_steps(s, t, unit_budget)) {
      ++report.steps_checked;
      long long target_value = r.value(CanonicalTerm{st.target});
      // Well-foundedness needs a measure into the naturals, so negative
      // values never certify.
      if (source_value < 0 || target_value < 0 ||
          source_value <= target_value) {
        report.ok = false;
        report.counterexample = st;
        report.source_value = source_value;
        report.target_value = target_value;
        return report;
      }
    }
  }
  report.ok = true;
  return report;
}

std::optional<QuasicycleWitness> find_cycle(const ReductionGraph& g) {
  enum class Color { White, Gray, Black };
  std::map<CanonicalTerm, Color> color;
  for (const CanonicalTerm& v : g.vertices) color[v] = Color::White;

  struct Frame {
    CanonicalTerm v;
    std::size_t next = 0;
  };

  for (const CanonicalTerm& root : g.vertices) {
    if (color[root] != Color::White) continue;
    std::vector<Frame> stack{{root}};
    std::vector<Step> entry;  // entry[i]: step into stack[i+1]
    color[root] = Color::Gray;
    while (!stack.empty()) {
      Frame& top = stack.back();
      const std::vector<Step>& edges = g.out_edges(top.v);
      if (top.next == edges.size()) {
        color[top.v] = Color::Black;
        stack.pop_back();
        if (!entry.empty()) entry.pop_back();
        continue;
      }
      const Step& st = edges[top.next++];
      CanonicalTerm tgt{st.target};
      Color c = color[tgt];
      if (c == Color::Gray) {
        // Back edge: close the cycle at tgt's frame.
        std::size_t k = stack.size();
        while (k > 0 && !(stack[k - 1].v == tgt)) --k;
        QuasicycleWitness w;
        w.base = tgt;
        w.cycle.assign(entry.begin() + static_cast<long>(k - 1), entry.end());
        w.cycle.push_back(st);
        return w;
      }
      if (c == Color::White) {
        color[tgt] = Color::Gray;
        stack.push_back({tgt});
        entry.push_back(st);
      }
    }
  }
  return std::nullopt;
}

QuasicycleVerdict detect_quasicycle(const TwoStructure& s,
                                    const std::vector<CanonicalTerm>& seeds,
                                    const Limits& lim, const Ranking* ranking) {
  ReductionGraph g = explore(s, seeds, lim);
  QuasicycleVerdict v;
  if (std::optional<QuasicycleWitness> w = find_cycle(g)) {
    v.kind = QuasicycleVerdict::Kind::Found;
    v.witness = std::move(w);
    return v;
  }
  if (g.complete()) {
    v.kind = QuasicycleVerdict::Kind::Free;
    v.certificate = QuasicycleVerdict::Certificate::ExhaustedAcyclic;
    return v;
  }
  if (ranking) {
    for (const auto& [src, edges] : g.out) {
      long long sv = ranking->value(src);
      for (const Step& st : edges) {
        long long tv = ranking->value(CanonicalTerm{st.target});
        if (sv < 0 || tv < 0 || sv <= tv) {
          v.kind = QuasicycleVerdict::Kind::Unknown;
          v.reason = "ranking " + ranking->name +
                     " does not decrease across " + print_step(s, st);
          return v;
        }
      }
    }
    v.kind = QuasicycleVerdict::Kind::Free;
    v.certificate = QuasicycleVerdict::Certificate::Ranking;
    v.ranking_name = ranking->name;
    return v;
  }
  v.kind = QuasicycleVerdict::Kind::Unknown;
  v.reason = "exploration truncated without a certificate";
  return v;
}

std::string print_verdict(const TwoStructure& s, const QuasicycleVerdict& v) {
  switch (v.kind) {
    case QuasicycleVerdict::Kind::Found: {
      std::string out = "quasicycle found: cycle at " +
                        print_term(s.sig, v.witness->base.term);
      for (const Step& st : v.witness->cycle)
        out += "\n  " + print_step(s, st) + " -> " +
               print_term(s.sig, st.target);
      return out;
    }
    case QuasicycleVerdict::Kind::Free:
      if (v.certificate == QuasicycleVerdict::Certificate::Ranking)
        return "quasicycle-free (ranking " + v.ranking_name +
               " decreases across every explored edge)";
      return "quasicycle-free (exploration exhausted; graph acyclic)";
    case QuasicycleVerdict::Kind::Unknown:
      break;
  }
  return "unknown: " + v.reason;
}

std::string to_dot(const TwoStructure& s, const ReductionGraph& g) {
  auto escape = [](const std::string& text) {
    std::string out;
    for (char ch : text) {
      if (ch == '"' || ch == '\\') out += '\\';
      out += ch;
    }
    return out;
  };
  std::map<CanonicalTerm, std::size_t> index;
  for (const CanonicalTerm& v : g.vertices) index.emplace(v, index.size());

  std::string dot = "digraph reduction {\n  rankdir=LR;\n";
  for (const CanonicalTerm& v : g.vertices) {
    dot += "  v" + std::to_string(index.at(v)) + " [label=\"" +
           escape(print_term(s.sig, v.term)) + "\"";
    if (g.is_frontier(v)) dot += ", style=dashed";
    dot += "];\n";
  }
  for (const CanonicalTerm& v : g.vertices) {
    for (const Step& st : g.out_edges(v)) {
      std::string label = st.rule + "@" + print_position(st.pos);
      if (st.seg_begin >= 0)
        label += "[" + std::to_string(st.seg_begin) + ".." +
                 std::to_string(st.seg_end) + ")";
      dot += "  v" + std::to_string(index.at(v)) + " -> v" +
             std::to_string(index.at(CanonicalTerm{st.target})) +
             " [label=\"" + escape(label) + "\"];\n";
    }
  }
  dot += "}\n";
  return dot;
}

}  // namespace cohere
