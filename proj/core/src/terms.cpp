#include "cohere/terms.hpp"

#include <algorithm>
#include <cctype>

#include "parse_util.hpp"
#include <functional>

namespace cohere {

namespace {

std::size_t hash_combine(std::size_t seed, std::size_t v) {
  return seed ^ (v + 0x9e3779b97f4a7c15ull + (seed << 6) + (seed >> 2));
}

}  // namespace

// --- Signature --------------------------------------------------------------

void Signature::add_symbol(const std::string& name, int arity, bool infix) {
  if (name.empty()) throw ValidationError("symbol name must be non-empty");
  if (arity < 0) throw ValidationError("negative arity for symbol " + name);
  if (infix && arity != 2)
    throw ValidationError("infix symbol " + name + " must be binary");
  if (generators_.count(name))
    throw ValidationError("name " + name + " already declared as generator");
  auto [it, inserted] = symbols_.insert({name, SymbolInfo{name, arity, infix}});
  if (!inserted)
    throw ValidationError("symbol " + name + " declared twice");
}

void Signature::add_generator(const std::string& name) {
  if (name.empty()) throw ValidationError("generator name must be non-empty");
  if (symbols_.count(name))
    throw ValidationError("name " + name + " already declared as symbol");
  generators_.insert(name);
}

const SymbolInfo* Signature::symbol(const std::string& name) const {
  auto it = symbols_.find(name);
  return it == symbols_.end() ? nullptr : &it->second;
}

bool Signature::is_generator(const std::string& name) const {
  return generators_.count(name) != 0;
}

// --- ObjectTheory -----------------------------------------------------------

ObjectTheory ObjectTheory::assoc_unit(
    std::vector<std::pair<std::string, std::string>> ops) {
  ObjectTheory th;
  th.kind_ = Kind::AssocUnit;
  th.pairs_ = std::move(ops);
  return th;
}

bool ObjectTheory::is_assoc(const std::string& sym) const {
  for (const auto& [op, unit] : pairs_)
    if (op == sym) return true;
  return false;
}

const std::string* ObjectTheory::unit_of(const std::string& sym) const {
  for (const auto& [op, unit] : pairs_)
    if (op == sym) return &unit;
  return nullptr;
}

bool ObjectTheory::is_unit_symbol(const std::string& sym) const {
  for (const auto& [op, unit] : pairs_)
    if (unit == sym) return true;
  return false;
}

// --- Term -------------------------------------------------------------------

Term Term::var(std::string name) {
  std::size_t h = hash_combine(1, std::hash<std::string>{}(name));
  return Term(std::make_shared<const Node>(
      Node{Kind::Var, std::move(name), {}, h}));
}

Term Term::gen(std::string name) {
  std::size_t h = hash_combine(2, std::hash<std::string>{}(name));
  return Term(std::make_shared<const Node>(
      Node{Kind::Gen, std::move(name), {}, h}));
}

Term Term::app(std::string symbol, std::vector<Term> children) {
  std::size_t h = hash_combine(3, std::hash<std::string>{}(symbol));
  for (const Term& c : children) h = hash_combine(h, c.hash());
  return Term(std::make_shared<const Node>(
      Node{Kind::App, std::move(symbol), std::move(children), h}));
}

bool Term::operator==(const Term& other) const {
  if (node_ == other.node_) return true;
  if (node_->hash != other.node_->hash) return false;
  if (node_->kind != other.node_->kind || node_->head != other.node_->head)
    return false;
  const auto& a = node_->children;
  const auto& b = other.node_->children;
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a[i] == b[i])) return false;
  return true;
}

std::strong_ordering Term::operator<=>(const Term& other) const {
  if (node_ == other.node_) return std::strong_ordering::equal;
  if (auto c = node_->kind <=> other.node_->kind; c != 0) return c;
  if (auto c = node_->head.compare(other.node_->head); c != 0)
    return c < 0 ? std::strong_ordering::less : std::strong_ordering::greater;
  const auto& a = node_->children;
  const auto& b = other.node_->children;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i)
    if (auto c = a[i] <=> b[i]; c != 0) return c;
  return a.size() <=> b.size();
}

// --- basic helpers ----------------------------------------------------------

std::string print_position(const Position& pos) {
  if (pos.empty()) return "e";
  std::string out;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    if (i) out += ".";
    out += std::to_string(pos[i]);
  }
  return out;
}

Term unit_term(const std::string& unit_symbol) {
  return Term::app(unit_symbol, {});
}

bool is_unit_term(const ObjectTheory& theory, const Term& term) {
  return term.is_app() && term.children().empty() &&
         theory.is_unit_symbol(term.head());
}

int count_units(const ObjectTheory& theory, const Term& term) {
  if (is_unit_term(theory, term)) return 1;
  int n = 0;
  for (const Term& c : term.children()) n += count_units(theory, c);
  return n;
}

void validate_term(const Signature& sig, const ObjectTheory& theory,
                   const Term& term, bool allow_flattened) {
  switch (term.kind()) {
    case Term::Kind::Var:
      if (sig.symbol(term.head()) || sig.is_generator(term.head()))
        throw ValidationError("variable " + term.head() +
                              " clashes with a declared name");
      return;
    case Term::Kind::Gen:
      if (!sig.is_generator(term.head()))
        throw ValidationError("undeclared generator " + term.head());
      return;
    case Term::Kind::App: {
      const SymbolInfo* info = sig.symbol(term.head());
      if (!info) throw ValidationError("undeclared symbol " + term.head());
      int n = static_cast<int>(term.children().size());
      bool ok = n == info->arity ||
                (allow_flattened && theory.is_assoc(term.head()) && n >= 2);
      if (!ok)
        throw ValidationError("arity mismatch for " + term.head() + ": got " +
                              std::to_string(n) + ", declared " +
                              std::to_string(info->arity));
      for (const Term& c : term.children())
        validate_term(sig, theory, c, allow_flattened);
      return;
    }
  }
}

namespace {

Term canonicalize_rec(const ObjectTheory& theory, const Term& term) {
  if (!term.is_app()) return term;
  std::vector<Term> children;
  children.reserve(term.children().size());
  for (const Term& c : term.children())
    children.push_back(canonicalize_rec(theory, c));
  const std::string& f = term.head();
  if (theory.is_assoc(f)) {
    const std::string& unit = *theory.unit_of(f);
    Term u = unit_term(unit);
    std::vector<Term> flat;
    for (Term& c : children) {
      if (c.is_app_of(f)) {
        for (const Term& g : c.children()) flat.push_back(g);
      } else if (c == u) {
        // strict unit: elided
      } else {
        flat.push_back(std::move(c));
      }
    }
    if (flat.empty()) return u;
    if (flat.size() == 1) return flat[0];
    return Term::app(f, std::move(flat));
  }
  return Term::app(f, std::move(children));
}

}  // namespace

CanonicalTerm canonicalize(const Signature& sig, const ObjectTheory& theory,
                           const Term& term) {
  validate_term(sig, theory, term, /*allow_flattened=*/true);
  return CanonicalTerm{canonicalize_rec(theory, term)};
}

bool term_eq(const CanonicalTerm& a, const CanonicalTerm& b) {
  return a.term == b.term;
}

Term substitute(const Term& term, const Substitution& sub) {
  switch (term.kind()) {
    case Term::Kind::Var: {
      auto it = sub.find(term.head());
      return it == sub.end() ? term : it->second;
    }
    case Term::Kind::Gen:
      return term;
    case Term::Kind::App: {
      std::vector<Term> children;
      children.reserve(term.children().size());
      bool changed = false;
      for (const Term& c : term.children()) {
        children.push_back(substitute(c, sub));
        if (!(children.back() == c)) changed = true;
      }
      if (!changed) return term;
      return Term::app(term.head(), std::move(children));
    }
  }
  throw Error("unreachable");
}

CanonicalTerm substitute_canonical(const Signature& sig,
                                   const ObjectTheory& theory,
                                   const Term& term, const Substitution& sub) {
  return canonicalize(sig, theory, substitute(term, sub));
}

// --- parsing ----------------------------------------------------------------

Term parse_term(const Signature& sig, const std::string& text) {
  detail::Lexer lex(text);
  return detail::TermParser(sig, lex).parse_full();
}

namespace {

void print_term_rec(const Signature& sig, const Term& term, std::string& out) {
  switch (term.kind()) {
    case Term::Kind::Var:
    case Term::Kind::Gen:
      out += term.head();
      return;
    case Term::Kind::App: {
      const SymbolInfo* info = sig.symbol(term.head());
      const auto& kids = term.children();
      if (kids.empty()) {
        out += term.head();
        return;
      }
      if (info && info->infix && kids.size() >= 2) {
        // flattened nodes print right-nested: (a op (b op c))
        std::function<void(std::size_t)> fold = [&](std::size_t i) {
          if (i + 1 == kids.size()) {
            print_term_rec(sig, kids[i], out);
            return;
          }
          out += "(";
          print_term_rec(sig, kids[i], out);
          out += " " + term.head() + " ";
          fold(i + 1);
          out += ")";
        };
        fold(0);
        return;
      }
      out += term.head() + "(";
      for (std::size_t i = 0; i < kids.size(); ++i) {
        if (i) out += ", ";
        print_term_rec(sig, kids[i], out);
      }
      out += ")";
      return;
    }
  }
}

}  // namespace

std::string print_term(const Signature& sig, const Term& term) {
  std::string out;
  print_term_rec(sig, term, out);
  return out;
}

// --- positions --------------------------------------------------------------

namespace {

void positions_rec(const Term& term, Position& here,
                   std::vector<Position>& out) {
  out.push_back(here);
  for (std::size_t i = 0; i < term.children().size(); ++i) {
    here.push_back(static_cast<int>(i));
    positions_rec(term.children()[i], here, out);
    here.pop_back();
  }
}

}  // namespace

std::vector<Position> positions(const Term& term) {
  std::vector<Position> out;
  Position here;
  positions_rec(term, here, out);
  return out;
}

const Term& subterm_at(const Term& term, const Position& pos) {
  const Term* t = &term;
  for (int i : pos) {
    if (i < 0 || static_cast<std::size_t>(i) >= t->children().size())
      throw ValidationError("position " + print_position(pos) +
                            " out of range");
    t = &t->children()[i];
  }
  return *t;
}

Term replace_at(const Term& term, const Position& pos,
                const Term& replacement) {
  if (pos.empty()) return replacement;
  int i = pos.front();
  if (i < 0 || static_cast<std::size_t>(i) >= term.children().size())
    throw ValidationError("position out of range in replace_at");
  std::vector<Term> children = term.children();
  Position rest(pos.begin() + 1, pos.end());
  children[static_cast<std::size_t>(i)] =
      replace_at(children[static_cast<std::size_t>(i)], rest, replacement);
  return Term::app(term.head(), std::move(children));
}

Term replace_segment(const Term& term, const Position& pos, int seg_begin,
                     int seg_end, const Term& replacement) {
  if (pos.empty()) {
    if (!term.is_app())
      throw ValidationError("segment replacement on a non-application");
    int n = static_cast<int>(term.children().size());
    if (seg_begin < 0 || seg_end > n || seg_begin >= seg_end)
      throw ValidationError("segment out of range in replace_segment");
    std::vector<Term> children;
    children.reserve(term.children().size());
    for (int i = 0; i < seg_begin; ++i) children.push_back(term.children()[i]);
    children.push_back(replacement);
    for (int i = seg_end; i < n; ++i) children.push_back(term.children()[i]);
    if (children.size() == 1) return children[0];
    return Term::app(term.head(), std::move(children));
  }
  int i = pos.front();
  if (i < 0 || static_cast<std::size_t>(i) >= term.children().size())
    throw ValidationError("position out of range in replace_segment");
  std::vector<Term> children = term.children();
  Position rest(pos.begin() + 1, pos.end());
  children[static_cast<std::size_t>(i)] = replace_segment(
      children[static_cast<std::size_t>(i)], rest, seg_begin, seg_end,
      replacement);
  return Term::app(term.head(), std::move(children));
}

namespace {

void collect_vars(const Term& term, std::set<std::string>& out) {
  if (term.is_var()) out.insert(term.head());
  for (const Term& c : term.children()) collect_vars(c, out);
}

void collect_gens(const Term& term, std::set<std::string>& out) {
  if (term.is_gen()) out.insert(term.head());
  for (const Term& c : term.children()) collect_gens(c, out);
}

void count_gens(const Term& term, std::map<std::string, int>& out) {
  if (term.is_gen()) ++out[term.head()];
  for (const Term& c : term.children()) count_gens(c, out);
}

}  // namespace

std::vector<std::string> term_vars(const Term& term) {
  std::set<std::string> s;
  collect_vars(term, s);
  return {s.begin(), s.end()};
}

std::vector<std::string> term_gens(const Term& term) {
  std::set<std::string> s;
  collect_gens(term, s);
  return {s.begin(), s.end()};
}

int count_gen_leaves(const Term& term) {
  if (term.is_gen()) return 1;
  int n = 0;
  for (const Term& c : term.children()) n += count_gen_leaves(c);
  return n;
}

bool repetition_free(const Term& term) {
  std::map<std::string, int> counts;
  count_gens(term, counts);
  for (const auto& [g, n] : counts)
    if (n > 1) return false;
  return true;
}

int term_size(const Term& term) {
  int n = 1;
  for (const Term& c : term.children()) n += term_size(c);
  return n;
}

// --- matching ---------------------------------------------------------------

namespace {

// Backtracking matcher against a canonical subject.  Children of an
// associative pattern node consume consecutive blocks of the subject's
// children; an empty block stands for an inserted unit.
class Matcher {
 public:
  explicit Matcher(const ObjectTheory& theory) : theory_(theory) {}

  std::vector<Substitution> run(const Term& pattern, const Term& subject) {
    std::vector<Substitution> out;
    Substitution empty;
    match(pattern, subject, empty, out);
    return out;
  }

 private:
  void match(const Term& pat, const Term& sub, Substitution& s,
             std::vector<Substitution>& out) {
    switch (pat.kind()) {
      case Term::Kind::Var: {
        auto it = s.find(pat.head());
        if (it != s.end()) {
          if (it->second == sub) out.push_back(s);
          return;
        }
        s.emplace(pat.head(), sub);
        out.push_back(s);
        s.erase(pat.head());
        return;
      }
      case Term::Kind::Gen:
        if (pat == sub) out.push_back(s);
        return;
      case Term::Kind::App: {
        if (theory_.is_assoc(pat.head())) {
          match_assoc(pat, sub, s, out);
          return;
        }
        if (!sub.is_app_of(pat.head()) ||
            sub.children().size() != pat.children().size())
          return;
        match_children(pat.children(), sub.children(), 0, s, out);
        return;
      }
    }
  }

  void match_children(const std::vector<Term>& pats,
                      const std::vector<Term>& subs, std::size_t i,
                      Substitution& s, std::vector<Substitution>& out) {
    if (i == pats.size()) {
      out.push_back(s);
      return;
    }
    std::vector<Substitution> here;
    match(pats[i], subs[i], s, here);
    for (Substitution& s2 : here) match_children(pats, subs, i + 1, s2, out);
  }

  void match_assoc(const Term& pat, const Term& sub, Substitution& s,
                   std::vector<Substitution>& out) {
    const std::string& f = pat.head();
    Term u = unit_term(*theory_.unit_of(f));
    std::vector<Term> seq;
    if (sub.is_app_of(f))
      seq = sub.children();
    else if (sub == u)
      seq = {};
    else
      seq = {sub};
    match_word(f, u, pat.children(), 0, seq, 0, s, out);
  }

  void match_word(const std::string& f, const Term& u,
                  const std::vector<Term>& pats, std::size_t pi,
                  const std::vector<Term>& seq, std::size_t si,
                  Substitution& s, std::vector<Substitution>& out) {
    if (pi == pats.size()) {
      if (si == seq.size()) out.push_back(s);
      return;
    }
    const Term& p = pats[pi];
    // Any pattern child may consume any block: even a non-variable child can
    // collapse (through unit images) to a bare variable that absorbs a
    // multi-element block, which then splices into the outer word.
    std::size_t remaining = seq.size() - si;
    for (std::size_t take = 0; take <= remaining; ++take) {
      Term block = word_term(f, u, seq, si, si + take);
      std::vector<Substitution> here;
      match(p, block, s, here);
      for (Substitution& s2 : here)
        match_word(f, u, pats, pi + 1, seq, si + take, s2, out);
    }
  }

  static Term word_term(const std::string& f, const Term& u,
                        const std::vector<Term>& seq, std::size_t b,
                        std::size_t e) {
    if (b == e) return u;
    if (e - b == 1) return seq[b];
    return Term::app(f, {seq.begin() + static_cast<long>(b),
                         seq.begin() + static_cast<long>(e)});
  }

  const ObjectTheory& theory_;
};

}  // namespace

std::vector<Substitution> match_modulo(const Signature& sig,
                                       const ObjectTheory& theory,
                                       const Term& pattern,
                                       const CanonicalTerm& subject,
                                       int unit_budget) {
  Term pat = canonicalize(sig, theory, pattern).term;
  if (unit_budget < 0)
    unit_budget = static_cast<int>(term_vars(pat).size());
  std::vector<Substitution> all = Matcher(theory).run(pat, subject.term);
  int present = count_units(theory, subject.term);
  std::vector<Substitution> out;
  for (Substitution& s : all) {
    int introduced = 0;
    for (const auto& [v, img] : s) introduced += count_units(theory, img);
    if (std::max(0, introduced - present) <= unit_budget)
      out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// --- syntactic unification --------------------------------------------------

namespace {

bool occurs(const std::string& var, const Term& term) {
  if (term.is_var()) return term.head() == var;
  for (const Term& c : term.children())
    if (occurs(var, c)) return true;
  return false;
}

}  // namespace

std::optional<Substitution> unify_syntactic(const Term& a, const Term& b) {
  Substitution s;
  std::vector<std::pair<Term, Term>> work{{a, b}};
  while (!work.empty()) {
    auto [x, y] = work.back();
    work.pop_back();
    Term xs = substitute(x, s);
    Term ys = substitute(y, s);
    if (xs == ys) continue;
    if (xs.is_var()) {
      if (occurs(xs.head(), ys)) return std::nullopt;
      Substitution bind{{xs.head(), ys}};
      for (auto& [v, img] : s) img = substitute(img, bind);
      s.emplace(xs.head(), ys);
      continue;
    }
    if (ys.is_var()) {
      work.push_back({ys, xs});
      continue;
    }
    if (xs.kind() != ys.kind() || xs.head() != ys.head() ||
        xs.children().size() != ys.children().size())
      return std::nullopt;
    for (std::size_t i = 0; i < xs.children().size(); ++i)
      work.push_back({xs.children()[i], ys.children()[i]});
  }
  // Fully resolve images so the unifier is idempotent.
  for (int round = 0; round < static_cast<int>(s.size()) + 1; ++round) {
    bool changed = false;
    for (auto& [v, img] : s) {
      Term next = substitute(img, s);
      if (!(next == img)) {
        img = next;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return s;
}

// --- unification modulo associativity-with-units -----------------------------

namespace {

class AuUnifier {
 public:
  AuUnifier(const Signature& sig, const ObjectTheory& theory,
            std::size_t max_solutions)
      : sig_(sig),
        theory_(theory),
        cap_(max_solutions),
        calls_(std::make_shared<long>(0)) {}

  std::vector<Substitution> run(const Term& a, const Term& b) {
    Substitution empty;
    unify(a, b, empty);
    return std::move(out_);
  }

 private:
  // Word problems can reconstruct each other with swapped sides, so the
  // search is budgeted: a depth bound and a global call counter shared by
  // nested sub-searches.  Exceeding either silently truncates the solution
  // family, which the interface documents as bounded.
  static constexpr int kMaxDepth = 64;
  static constexpr long kMaxCalls = 200000;

  AuUnifier child() const {
    AuUnifier inner(sig_, theory_, cap_);
    inner.depth_ = depth_ + 1;
    inner.calls_ = calls_;
    return inner;
  }

  bool full() const { return out_.size() >= cap_; }

  Term walk(const Term& t, const Substitution& s) {
    return substitute_canonical(sig_, theory_, t, s).term;
  }

  void emit(const Substitution& s) {
    if (full()) return;
    // Resolve chained bindings so every image is fully substituted.
    Substitution r = s;
    for (int round = 0; round < static_cast<int>(r.size()) + 1; ++round) {
      bool changed = false;
      for (auto& [v, img] : r) {
        Term next = walk(img, r);
        if (!(next == img)) {
          img = next;
          changed = true;
        }
      }
      if (!changed) break;
    }
    out_.push_back(std::move(r));
  }

  void unify(const Term& ra, const Term& rb, const Substitution& s) {
    if (full() || depth_ > kMaxDepth || ++*calls_ > kMaxCalls) return;
    Term a = walk(ra, s);
    Term b = walk(rb, s);
    if (a == b) {
      emit(s);
      return;
    }
    if (a.is_var()) {
      bind_var(a, b, s);
      return;
    }
    if (b.is_var()) {
      bind_var(b, a, s);
      return;
    }
    bool aa = a.is_app() && theory_.is_assoc(a.head());
    bool bb = b.is_app() && theory_.is_assoc(b.head());
    if (aa || bb) {
      const std::string& f = aa ? a.head() : b.head();
      Term u = unit_term(*theory_.unit_of(f));
      std::vector<Term> ps = word_of(f, u, a);
      std::vector<Term> qs = word_of(f, u, b);
      word(f, u, ps, qs, s);
      return;
    }
    if (a.kind() != b.kind() || a.head() != b.head() ||
        a.children().size() != b.children().size())
      return;
    unify_children(a.children(), b.children(), 0, s);
  }

  void bind_var(const Term& v, const Term& t, const Substitution& s) {
    if (occurs(v.head(), t)) {
      // A bounded rescue for x = x (+) w: try collapsing other variables of
      // t to units, which can remove the occurrence.
      if (theory_.kind() != ObjectTheory::Kind::AssocUnit) return;
      for (const std::string& y : term_vars(t)) {
        if (y == v.head() || s.count(y)) continue;
        const auto& pairs = theory_.pairs();
        std::set<std::string> units;
        for (const auto& [op, unit] : pairs) units.insert(unit);
        for (const std::string& unit : units) {
          Substitution s2 = s;
          s2.emplace(y, unit_term(unit));
          unify(v, t, s2);
        }
      }
      return;
    }
    Substitution s2 = s;
    s2.emplace(v.head(), t);
    emit(s2);
  }

  void unify_children(const std::vector<Term>& as, const std::vector<Term>& bs,
                      std::size_t i, const Substitution& s) {
    if (full()) return;
    if (i == as.size()) {
      emit(s);
      return;
    }
    // Collect solutions of the i-th pair, then continue with each.
    AuUnifier inner = child();
    inner.unify(as[i], bs[i], s);
    for (const Substitution& s2 : inner.out_)
      unify_children(as, bs, i + 1, s2);
  }

  std::vector<Term> word_of(const std::string& f, const Term& u,
                            const Term& t) {
    if (t.is_app_of(f)) return t.children();
    if (t == u) return {};
    return {t};
  }

  // Re-walk a word under the current substitution, splicing freshly exposed
  // same-symbol nodes and dropping units.
  std::vector<Term> rewalk(const std::string& f, const Term& u,
                           const std::vector<Term>& seq,
                           const Substitution& s) {
    std::vector<Term> out;
    for (const Term& t : seq) {
      Term w = walk(t, s);
      if (w == u) continue;
      if (w.is_app_of(f))
        out.insert(out.end(), w.children().begin(), w.children().end());
      else
        out.push_back(w);
    }
    return out;
  }

  static Term word_term(const std::string& f, const Term& u,
                        const std::vector<Term>& seq, std::size_t b,
                        std::size_t e) {
    if (b == e) return u;
    if (e - b == 1) return seq[b];
    return Term::app(f, {seq.begin() + static_cast<long>(b),
                         seq.begin() + static_cast<long>(e)});
  }

  void word(const std::string& f, const Term& u, std::vector<Term> ps,
            std::vector<Term> qs, const Substitution& s) {
    if (full()) return;
    ps = rewalk(f, u, ps, s);
    qs = rewalk(f, u, qs, s);
    if (ps.empty() && qs.empty()) {
      emit(s);
      return;
    }
    if (ps.empty() || qs.empty()) {
      // Remaining elements must all collapse to the unit.
      const std::vector<Term>& rest = ps.empty() ? qs : ps;
      collapse_all(f, u, rest, 0, s);
      return;
    }
    const Term& p0 = ps[0];
    const Term& q0 = qs[0];
    // The leading element of either side aligns with a block (possibly
    // empty, possibly multi-element) of the other: r = 0 collapses it to the
    // unit; r >= 2 lets it absorb several elements, which is reachable even
    // for a non-variable head once its own variables take unit images.
    //
    // A lone non-variable element with a head outside the theory can never
    // equal a multi-element word, and letting it absorb the whole other side
    // reconstructs the present problem with swapped sides; that combination
    // is skipped (losslessly).
    auto skip_whole = [&](const Term& head, std::size_t r, std::size_t own,
                          std::size_t other) {
      return r == other && own == 1 && r >= 2 && !head.is_var() &&
             !(head.is_app() && theory_.is_assoc(head.head()));
    };
    for (std::size_t r = 0; r <= qs.size(); ++r) {
      if (skip_whole(p0, r, ps.size(), qs.size())) continue;
      AuUnifier inner = child();
      inner.unify(p0, word_term(f, u, qs, 0, r), s);
      for (const Substitution& s2 : inner.out_)
        word(f, u, {ps.begin() + 1, ps.end()}, {qs.begin() + r, qs.end()}, s2);
    }
    // Symmetric alignment of q0 against blocks of ps; r = 1 would replay the
    // pairing above, so it is skipped.
    for (std::size_t r = 0; r <= ps.size(); ++r) {
      if (r == 1) continue;
      if (skip_whole(q0, r, qs.size(), ps.size())) continue;
      AuUnifier inner = child();
      inner.unify(q0, word_term(f, u, ps, 0, r), s);
      for (const Substitution& s2 : inner.out_)
        word(f, u, {ps.begin() + r, ps.end()}, {qs.begin() + 1, qs.end()}, s2);
    }
  }

  void collapse_all(const std::string& f, const Term& u,
                    const std::vector<Term>& rest, std::size_t i,
                    const Substitution& s) {
    if (i == rest.size()) {
      emit(s);
      return;
    }
    AuUnifier inner = child();
    inner.unify(rest[i], u, s);
    for (const Substitution& s2 : inner.out_) collapse_all(f, u, rest, i + 1, s2);
  }

  const Signature& sig_;
  const ObjectTheory& theory_;
  std::size_t cap_;
  int depth_ = 0;
  std::shared_ptr<long> calls_;
  std::vector<Substitution> out_;
};

}  // namespace

std::vector<Substitution> unify_modulo(const Signature& sig,
                                       const ObjectTheory& theory,
                                       const Term& a, const Term& b,
                                       int unit_budget,
                                       std::size_t max_solutions) {
  Term ca = canonicalize(sig, theory, a).term;
  Term cb = canonicalize(sig, theory, b).term;
  std::vector<Substitution> all =
      AuUnifier(sig, theory, max_solutions).run(ca, cb);
  std::vector<Substitution> out;
  for (Substitution& s : all) {
    int introduced = 0;
    for (const auto& [v, img] : s) introduced += count_units(theory, img);
    if (introduced <= unit_budget ||
        theory.kind() == ObjectTheory::Kind::Empty)
      out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// --- enumeration ------------------------------------------------------------

namespace {

void compositions(int total, int parts, std::vector<int>& cur,
                  std::vector<std::vector<int>>& out) {
  if (parts == 1) {
    if (total >= 1) {
      cur.push_back(total);
      out.push_back(cur);
      cur.pop_back();
    }
    return;
  }
  for (int first = 1; first + (parts - 1) <= total; ++first) {
    cur.push_back(first);
    compositions(total - first, parts - 1, cur, out);
    cur.pop_back();
  }
}

}  // namespace

std::vector<CanonicalTerm> enumerate_canonical_terms(
    const Signature& sig, const ObjectTheory& theory,
    const std::vector<std::string>& generators, int max_size,
    bool repetition_free_only) {
  std::vector<std::vector<Term>> by_size(
      static_cast<std::size_t>(std::max(max_size, 0)) + 1);
  if (max_size >= 1) {
    for (const std::string& g : generators) {
      if (!sig.is_generator(g))
        throw ValidationError("undeclared generator " + g);
      by_size[1].push_back(Term::gen(g));
    }
    std::set<std::string> seen_nullary;
    for (const auto& [name, info] : sig.symbols()) {
      if (info.arity == 0 && seen_nullary.insert(name).second)
        by_size[1].push_back(Term::app(name, {}));
    }
  }
  for (int s = 2; s <= max_size; ++s) {
    for (const auto& [name, info] : sig.symbols()) {
      if (info.arity == 0) continue;
      bool assoc = theory.is_assoc(name);
      // Associative nodes take any child count >= 2 (canonical flattened
      // form); other symbols take exactly their declared arity.
      std::vector<int> arities;
      if (assoc) {
        for (int k = 2; k <= s - 1; ++k) arities.push_back(k);
      } else {
        arities.push_back(info.arity);
      }
      for (int k : arities) {
        if (k < 1 || k > s - 1) continue;
        std::vector<std::vector<int>> parts;
        std::vector<int> cur;
        compositions(s - 1, k, cur, parts);
        const std::string& unit =
            assoc ? *theory.unit_of(name) : std::string();
        for (const auto& split : parts) {
          // Build the cartesian product of child choices.
          std::vector<Term> chosen;
          std::function<void(std::size_t)> build = [&](std::size_t idx) {
            if (idx == split.size()) {
              by_size[static_cast<std::size_t>(s)].push_back(
                  Term::app(name, chosen));
              return;
            }
            for (const Term& c :
                 by_size[static_cast<std::size_t>(split[idx])]) {
              if (assoc) {
                if (c.is_app_of(name)) continue;  // stay flattened
                if (c.is_app() && c.children().empty() && c.head() == unit)
                  continue;  // no unit children
              }
              chosen.push_back(c);
              build(idx + 1);
              chosen.pop_back();
            }
          };
          build(0);
        }
      }
    }
  }
  std::vector<CanonicalTerm> out;
  for (const auto& bucket : by_size) {
    for (const Term& t : bucket) {
      if (repetition_free_only && !repetition_free(t)) continue;
      out.push_back(CanonicalTerm{t});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace cohere
