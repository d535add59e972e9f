#include "cohere/rewriting.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <sstream>
#include <utility>

#include "parse_util.hpp"

namespace cohere {

namespace {

std::size_t hash_mix(std::size_t seed, std::size_t v) {
  return seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

int count_var_occurrences(const Term& t, const std::string& v) {
  if (t.is_var()) return t.head() == v ? 1 : 0;
  int n = 0;
  for (const Term& c : t.children()) n += count_var_occurrences(c, v);
  return n;
}

// Ordered variables by first occurrence (preorder).
void collect_vars_ordered(const Term& t, std::vector<std::string>& out,
                          std::set<std::string>& seen) {
  if (t.is_var()) {
    if (seen.insert(t.head()).second) out.push_back(t.head());
    return;
  }
  for (const Term& c : t.children()) collect_vars_ordered(c, out, seen);
}

bool substitutions_agree(const Substitution& a, const Substitution& b) {
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it != b.end() && it->second != v) return false;
  }
  return true;
}

Substitution substitution_union(const Substitution& a, const Substitution& b) {
  Substitution out = a;
  out.insert(b.begin(), b.end());
  return out;
}

// All consistent unions picking one substitution from each part.
std::vector<Substitution> consistent_join(
    const std::vector<std::vector<Substitution>>& parts,
    std::size_t cap = 1024) {
  std::vector<Substitution> acc = {Substitution{}};
  for (const auto& part : parts) {
    std::vector<Substitution> next;
    for (const Substitution& base : acc)
      for (const Substitution& ext : part)
        if (substitutions_agree(base, ext)) {
          next.push_back(substitution_union(base, ext));
          if (next.size() > cap)
            throw Error("consistent_join: solution cap exceeded");
        }
    acc = std::move(next);
    if (acc.empty()) return acc;
  }
  std::sort(acc.begin(), acc.end());
  acc.erase(std::unique(acc.begin(), acc.end()), acc.end());
  return acc;
}

}  // namespace

// --- rules and structures ----------------------------------------------------

Rule make_rule(const Signature& sig, const ObjectTheory& theory,
               const std::string& label, const Term& lhs, const Term& rhs) {
  if (label.empty()) throw ValidationError("rule label must be non-empty");
  if (sig.symbol(label) || sig.is_generator(label))
    throw ValidationError("rule label " + label +
                          " clashes with a declared name");
  validate_term(sig, theory, lhs, /*allow_flattened=*/false);
  validate_term(sig, theory, rhs, /*allow_flattened=*/false);
  if (lhs.is_var())
    throw ValidationError("rule " + label +
                          ": left-hand side must not be a bare variable");
  std::vector<std::string> lv = term_vars(lhs), rv = term_vars(rhs);
  if (lv != rv)
    throw ValidationError("rule " + label +
                          ": both sides must use exactly the same variables");
  std::vector<std::string> ordered;
  std::set<std::string> seen;
  collect_vars_ordered(lhs, ordered, seen);
  return Rule{label, lhs, rhs, std::move(ordered)};
}

const Rule* TwoStructure::rule(const std::string& label) const {
  for (const Rule& r : rules)
    if (r.label == label) return &r;
  return nullptr;
}

std::vector<std::string> validate_structure(const TwoStructure& s) {
  std::vector<std::string> issues;
  std::set<std::string> labels;
  for (const Rule& r : s.rules) {
    if (!labels.insert(r.label).second)
      issues.push_back("duplicate rule label " + r.label);
    try {
      Rule rebuilt = make_rule(s.sig, s.theory, r.label, r.lhs, r.rhs);
      if (rebuilt.vars != r.vars)
        issues.push_back("rule " + r.label +
                         ": variable list does not match first-occurrence "
                         "order of the left-hand side");
    } catch (const Error& e) {
      issues.push_back(e.what());
    }
  }
  std::set<std::string> eq_names;
  for (const Equation& e : s.equations) {
    if (e.name.empty()) {
      issues.push_back("equation with empty name");
      continue;
    }
    if (!eq_names.insert(e.name).second)
      issues.push_back("duplicate equation name " + e.name);
    if (!e.left || !e.right) {
      issues.push_back("equation " + e.name + ": missing side");
      continue;
    }
    if (e.left->source() != e.right->source() ||
        e.left->target() != e.right->target())
      issues.push_back("equation " + e.name + ": sides are not parallel");
    if (e.identity_instance) {
      const Morphism* lifted = nullptr;
      if (e.left->is_identity() && e.right->kind() == Morphism::Kind::Lift)
        lifted = e.right.get();
      else if (e.right->is_identity() && e.left->kind() == Morphism::Kind::Lift)
        lifted = e.left.get();
      if (!lifted) {
        issues.push_back("equation " + e.name +
                         ": identity-instance annotation requires an identity "
                         "on one side and a single lift on the other");
      } else {
        for (const Morphism& arg : lifted->children())
          if (!arg.is_identity())
            issues.push_back("equation " + e.name +
                             ": identity-instance lift arguments must be "
                             "identities");
      }
    }
  }
  return issues;
}

// --- morphisms ----------------------------------------------------------------

Morphism Morphism::make(Node node) {
  bool ident = false;
  switch (node.kind) {
    case Kind::Identity:
      ident = true;
      break;
    case Kind::Lift:
      ident = false;
      break;
    case Kind::App:
    case Kind::Comp:
      ident = true;
      for (const Morphism& c : node.children) ident = ident && c.is_identity();
      break;
  }
  node.identity = ident;
  std::size_t h = hash_mix(0x5b2c3e71u, static_cast<std::size_t>(node.kind));
  h = hash_mix(h, std::hash<std::string>{}(node.name));
  if (node.kind == Kind::Identity) h = hash_mix(h, node.leaf.hash());
  for (const Morphism& c : node.children) h = hash_mix(h, c.hash());
  node.hash = h;
  return Morphism(std::make_shared<const Node>(std::move(node)));
}

Morphism Morphism::identity(const TwoStructure& s, const Term& term) {
  Term t = canonicalize(s.sig, s.theory, term).term;
  std::function<Morphism(const Term&)> build = [&](const Term& u) -> Morphism {
    switch (u.kind()) {
      case Term::Kind::Var:
      case Term::Kind::Gen:
        return make(Node{Kind::Identity, "", u, {}, u, u, true, 0});
      case Term::Kind::App: {
        if (u.children().empty())
          return make(Node{Kind::App, u.head(), Term::gen("_"), {}, u, u, true,
                           0});
        std::vector<Morphism> kids;
        kids.reserve(u.children().size());
        for (const Term& c : u.children()) kids.push_back(build(c));
        // Flattened associative nodes expand right-nested at arity two.
        if (kids.size() > 2 && s.theory.is_assoc(u.head())) {
          Morphism acc = kids.back();
          for (std::size_t i = kids.size() - 1; i-- > 1;)
            acc = app(s, u.head(), {kids[i], acc});
          return app(s, u.head(), {kids[0], acc});
        }
        return app(s, u.head(), std::move(kids));
      }
    }
    throw Error("unreachable");
  };
  return build(t);
}

Morphism Morphism::lift(const TwoStructure& s, const std::string& rule_label,
                        std::vector<Morphism> args) {
  const Rule* r = s.rule(rule_label);
  if (!r) throw TypeError("unknown rule " + rule_label);
  if (args.size() != r->vars.size())
    throw TypeError("rule " + rule_label + " expects " +
                    std::to_string(r->vars.size()) + " arguments, got " +
                    std::to_string(args.size()));
  Substitution at_source, at_target;
  for (std::size_t i = 0; i < args.size(); ++i) {
    at_source.emplace(r->vars[i], args[i].source());
    at_target.emplace(r->vars[i], args[i].target());
  }
  Term src = substitute_canonical(s.sig, s.theory, r->lhs, at_source).term;
  Term tgt = substitute_canonical(s.sig, s.theory, r->rhs, at_target).term;
  return make(Node{Kind::Lift, rule_label, Term::gen("_"), std::move(args),
                   std::move(src), std::move(tgt), false, 0});
}

Morphism Morphism::app(const TwoStructure& s, const std::string& symbol,
                       std::vector<Morphism> args) {
  const SymbolInfo* info = s.sig.symbol(symbol);
  if (!info) throw TypeError("unknown symbol " + symbol);
  if (static_cast<int>(args.size()) != info->arity)
    throw TypeError("symbol " + symbol + " expects " +
                    std::to_string(info->arity) + " arguments, got " +
                    std::to_string(args.size()));
  std::vector<Term> src_kids, tgt_kids;
  for (const Morphism& a : args) {
    src_kids.push_back(a.source());
    tgt_kids.push_back(a.target());
  }
  Term src =
      canonicalize(s.sig, s.theory, Term::app(symbol, std::move(src_kids)))
          .term;
  Term tgt =
      canonicalize(s.sig, s.theory, Term::app(symbol, std::move(tgt_kids)))
          .term;
  return make(Node{Kind::App, symbol, Term::gen("_"), std::move(args),
                   std::move(src), std::move(tgt), false, 0});
}

Morphism Morphism::comp(const TwoStructure& s, const Morphism& a,
                        const Morphism& b) {
  return comp(s, std::vector<Morphism>{a, b});
}

Morphism Morphism::comp(const TwoStructure& s, std::vector<Morphism> factors) {
  if (factors.empty()) throw TypeError("empty composition");
  // Flatten nested spines first, then check the chain and drop identities.
  std::vector<Morphism> flat;
  for (Morphism& f : factors) {
    if (f.kind() == Kind::Comp)
      flat.insert(flat.end(), f.children().begin(), f.children().end());
    else
      flat.push_back(std::move(f));
  }
  for (std::size_t i = 0; i + 1 < flat.size(); ++i)
    if (flat[i].target() != flat[i + 1].source())
      throw TypeError(
          "composition endpoint mismatch: factor " + std::to_string(i) +
          " ends at a different term than factor " + std::to_string(i + 1) +
          " starts from");
  Term src = flat.front().source();
  Term tgt = flat.back().target();
  std::vector<Morphism> spine;
  for (Morphism& f : flat)
    if (!f.is_identity()) spine.push_back(std::move(f));
  if (spine.empty()) return identity(s, src);
  if (spine.size() == 1) return spine.front();
  return make(Node{Kind::Comp, "", Term::gen("_"), std::move(spine),
                   std::move(src), std::move(tgt), false, 0});
}

bool Morphism::operator==(const Morphism& other) const {
  if (node_ == other.node_) return true;
  if (node_->hash != other.node_->hash) return false;
  return (*this <=> other) == std::strong_ordering::equal;
}

std::strong_ordering Morphism::operator<=>(const Morphism& other) const {
  if (node_ == other.node_) return std::strong_ordering::equal;
  if (auto c = node_->kind <=> other.node_->kind; c != 0) return c;
  if (auto c = node_->name <=> other.node_->name; c != 0) return c;
  if (node_->kind == Kind::Identity) {
    if (auto c = node_->leaf <=> other.node_->leaf; c != 0) return c;
  }
  const auto& a = node_->children;
  const auto& b = other.node_->children;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i)
    if (auto c = a[i] <=> b[i]; c != 0) return c;
  return a.size() <=> b.size();
}

std::pair<CanonicalTerm, CanonicalTerm> source_target(const Morphism& m) {
  return {m.source_canonical(), m.target_canonical()};
}

Morphism identity_of(const TwoStructure& s, const CanonicalTerm& t) {
  return Morphism::identity(s, t.term);
}

// --- morphism parsing and printing --------------------------------------------

namespace {

class MorphismParser {
 public:
  MorphismParser(const TwoStructure& s, const std::string& text)
      : s_(s), lex_(text), terms_(s.sig, lex_) {}

  Morphism parse() {
    Morphism m = sequence();
    const detail::Token& end = lex_.peek();
    if (end.kind != detail::Token::Kind::End)
      throw ParseError("trailing input after reduction expression", end.line,
                       end.col);
    return m;
  }

 private:
  Morphism sequence() {
    std::vector<Morphism> factors;
    factors.push_back(atom());
    while (lex_.peek().kind == detail::Token::Kind::Semi) {
      lex_.next();
      factors.push_back(atom());
    }
    return Morphism::comp(s_, std::move(factors));
  }

  Morphism atom() {
    const detail::Token tok = lex_.next();
    if (tok.kind == detail::Token::Kind::IdMark)
      return Morphism::identity(s_, terms_.term());
    if (tok.kind == detail::Token::Kind::LParen) {
      Morphism lhs = sequence();
      const detail::Token op = lex_.next();
      if (op.kind != detail::Token::Kind::Ident)
        throw ParseError("expected infix symbol", op.line, op.col);
      const SymbolInfo* info = s_.sig.symbol(op.text);
      if (!info || !info->infix)
        throw ParseError("not an infix symbol: " + op.text, op.line, op.col);
      Morphism rhs = sequence();
      const detail::Token close = lex_.next();
      if (close.kind != detail::Token::Kind::RParen)
        throw ParseError("expected ')'", close.line, close.col);
      return Morphism::app(s_, op.text, {std::move(lhs), std::move(rhs)});
    }
    if (tok.kind != detail::Token::Kind::Ident)
      throw ParseError("expected reduction expression", tok.line, tok.col);
    const bool is_rule = s_.rule(tok.text) != nullptr;
    const SymbolInfo* info = s_.sig.symbol(tok.text);
    if (lex_.peek().kind == detail::Token::Kind::LParen) {
      lex_.next();  // consume '('
      std::vector<Morphism> args;
      if (lex_.peek().kind != detail::Token::Kind::RParen) {
        args.push_back(sequence());
        while (lex_.peek().kind == detail::Token::Kind::Comma) {
          lex_.next();
          args.push_back(sequence());
        }
      }
      const detail::Token close = lex_.next();
      if (close.kind != detail::Token::Kind::RParen)
        throw ParseError("expected ')'", close.line, close.col);
      if (is_rule) return Morphism::lift(s_, tok.text, std::move(args));
      if (info) return Morphism::app(s_, tok.text, std::move(args));
      throw ParseError("unknown rule or symbol " + tok.text, tok.line,
                       tok.col);
    }
    if (is_rule) return Morphism::lift(s_, tok.text, {});
    if (info && info->arity == 0) return Morphism::app(s_, tok.text, {});
    throw ParseError("a bare name is not a reduction expression; write 1_" +
                         tok.text + " for an identity",
                     tok.line, tok.col);
  }

  const TwoStructure& s_;
  detail::Lexer lex_;
  detail::TermParser terms_;
};

}  // namespace

Morphism parse_morphism(const TwoStructure& s, const std::string& text) {
  return MorphismParser(s, text).parse();
}

namespace {

void print_morphism_rec(const TwoStructure& s, const Morphism& m,
                        std::string& out) {
  if (m.is_identity()) {
    out += "1_";
    out += print_term(s.sig, m.source());
    return;
  }
  switch (m.kind()) {
    case Morphism::Kind::Comp: {
      bool first = true;
      for (const Morphism& f : m.children()) {
        if (!first) out += " ; ";
        first = false;
        print_morphism_rec(s, f, out);
      }
      return;
    }
    case Morphism::Kind::App: {
      const SymbolInfo* info = s.sig.symbol(m.name());
      if (info && info->infix && m.children().size() == 2) {
        out += '(';
        print_morphism_rec(s, m.children()[0], out);
        out += ' ';
        out += m.name();
        out += ' ';
        print_morphism_rec(s, m.children()[1], out);
        out += ')';
        return;
      }
      [[fallthrough]];
    }
    case Morphism::Kind::Lift: {
      out += m.name();
      out += '(';
      bool first = true;
      for (const Morphism& a : m.children()) {
        if (!first) out += ", ";
        first = false;
        print_morphism_rec(s, a, out);
      }
      out += ')';
      return;
    }
    case Morphism::Kind::Identity:
      return;  // handled by the identity fast path
  }
}

}  // namespace

std::string print_morphism(const TwoStructure& s, const Morphism& m) {
  std::string out;
  print_morphism_rec(s, m, out);
  return out;
}

// --- shape and variables -------------------------------------------------------

bool ShapeTree::operator==(const ShapeTree& o) const {
  return label == o.label && children == o.children;
}

ShapeTree shape(const Morphism& m) {
  if (m.is_identity()) return ShapeTree{};
  ShapeTree t;
  t.label = m.kind() == Morphism::Kind::Comp ? "Comp" : m.name();
  for (const Morphism& c : m.children()) t.children.push_back(shape(c));
  return t;
}

std::string print_shape(const ShapeTree& t) {
  if (t.is_hole()) return "∘";
  if (t.label == "Comp") {
    std::string out;
    for (std::size_t i = 0; i < t.children.size(); ++i) {
      if (i) out += " ; ";
      out += print_shape(t.children[i]);
    }
    return out;
  }
  std::string out = t.label;
  out += '(';
  for (std::size_t i = 0; i < t.children.size(); ++i) {
    if (i) out += ", ";
    out += print_shape(t.children[i]);
  }
  out += ')';
  return out;
}

namespace {

void collect_leaf_identities(const Morphism& m,
                             std::vector<CanonicalTerm>& out) {
  if (m.kind() == Morphism::Kind::Identity) {
    out.push_back(CanonicalTerm{m.leaf_term()});
    return;
  }
  for (const Morphism& c : m.children()) collect_leaf_identities(c, out);
}

}  // namespace

std::vector<CanonicalTerm> morphism_vars(const Morphism& m) {
  std::vector<CanonicalTerm> out;
  collect_leaf_identities(m, out);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// --- general position ----------------------------------------------------------

namespace {

// Symbolic endpoints of a morphism after relabelling each identity leaf
// with a fresh variable; records the typing constraints of composition
// joints along the way.
struct Relabeller {
  const TwoStructure& s;
  std::vector<std::string> leaf_vars;
  std::vector<std::pair<Term, Term>> constraints;

  std::pair<Term, Term> walk(const Morphism& m) {
    switch (m.kind()) {
      case Morphism::Kind::Identity: {
        std::string v = "_gp" + std::to_string(leaf_vars.size());
        leaf_vars.push_back(v);
        Term t = Term::var(v);
        return {t, t};
      }
      case Morphism::Kind::Lift: {
        const Rule* r = s.rule(m.name());
        Substitution at_src, at_tgt;
        for (std::size_t i = 0; i < m.children().size(); ++i) {
          auto [a, b] = walk(m.children()[i]);
          at_src.emplace(r->vars[i], a);
          at_tgt.emplace(r->vars[i], b);
        }
        return {substitute_canonical(s.sig, s.theory, r->lhs, at_src).term,
                substitute_canonical(s.sig, s.theory, r->rhs, at_tgt).term};
      }
      case Morphism::Kind::App: {
        std::vector<Term> srcs, tgts;
        for (const Morphism& c : m.children()) {
          auto [a, b] = walk(c);
          srcs.push_back(a);
          tgts.push_back(b);
        }
        return {
            canonicalize(s.sig, s.theory, Term::app(m.name(), srcs)).term,
            canonicalize(s.sig, s.theory, Term::app(m.name(), tgts)).term};
      }
      case Morphism::Kind::Comp: {
        std::pair<Term, Term> acc = walk(m.children().front());
        for (std::size_t i = 1; i < m.children().size(); ++i) {
          auto nxt = walk(m.children()[i]);
          constraints.emplace_back(acc.second, nxt.first);
          acc.second = nxt.second;
        }
        return acc;
      }
    }
    throw Error("unreachable");
  }
};

Term resolve_to_fixpoint(const Signature& sig, const ObjectTheory& theory,
                         Term t, const Substitution& sub) {
  for (int round = 0; round < 64; ++round) {
    Term next = substitute_canonical(sig, theory, t, sub).term;
    if (next == t) return t;
    t = next;
  }
  throw Error("cyclic substitution while resolving general position");
}

}  // namespace

bool is_general_position(const TwoStructure& s, const Morphism& m) {
  Relabeller rl{s, {}, {}};
  rl.walk(m);
  const int leaf_count = static_cast<int>(rl.leaf_vars.size());

  std::vector<Substitution> sols = {Substitution{}};
  const std::size_t cap = 512;
  for (const auto& [a, b] : rl.constraints) {
    std::vector<Substitution> next;
    for (const Substitution& base : sols) {
      Term ai = substitute_canonical(s.sig, s.theory, a, base).term;
      Term bi = substitute_canonical(s.sig, s.theory, b, base).term;
      for (const Substitution& ext :
           unify_modulo(s.sig, s.theory, ai, bi, leaf_count, cap)) {
        next.push_back(substitution_union(ext, base));
        if (next.size() > cap) break;
      }
      if (next.size() > cap) break;
    }
    sols = std::move(next);
    if (sols.empty())
      throw Error(
          "general position: constraint solving exhausted its budget");
  }

  std::size_t best = 0;
  for (const Substitution& sol : sols) {
    std::set<Term> images;
    for (const std::string& v : rl.leaf_vars)
      images.insert(resolve_to_fixpoint(s.sig, s.theory, Term::var(v), sol));
    best = std::max(best, images.size());
  }
  return best == morphism_vars(m).size();
}

// --- steps ----------------------------------------------------------------------

bool Step::operator==(const Step& other) const {
  return (*this <=> other) == std::strong_ordering::equal;
}

std::strong_ordering Step::operator<=>(const Step& other) const {
  if (auto c = rule <=> other.rule; c != 0) return c;
  if (auto c = pos <=> other.pos; c != 0) return c;
  if (auto c = seg_begin <=> other.seg_begin; c != 0) return c;
  if (auto c = seg_end <=> other.seg_end; c != 0) return c;
  if (auto c = subst <=> other.subst; c != 0) return c;
  if (auto c = source <=> other.source; c != 0) return c;
  return target <=> other.target;
}

std::string print_step(const TwoStructure& s, const Step& step) {
  std::string out = step.rule + " @ " + print_position(step.pos);
  if (step.seg_begin >= 0)
    out += "[" + std::to_string(step.seg_begin) + ".." +
           std::to_string(step.seg_end) + ")";
  out += " {";
  bool first = true;
  for (const auto& [v, t] : step.subst) {
    if (!first) out += ", ";
    first = false;
    out += v + " -> " + print_term(s.sig, t);
  }
  out += "}";
  return out;
}

bool is_identity_instance(const TwoStructure& s, const std::string& rule,
                          const Substitution& subst) {
  const Rule* r = s.rule(rule);
  if (!r) return false;
  for (const Equation& e : s.equations) {
    if (!e.identity_instance || !e.left || !e.right) continue;
    const Morphism* lifted = nullptr;
    if (e.left->is_identity() && e.right->kind() == Morphism::Kind::Lift)
      lifted = e.right.get();
    else if (e.right->is_identity() && e.left->kind() == Morphism::Kind::Lift)
      lifted = e.left.get();
    if (!lifted || lifted->name() != rule) continue;
    if (lifted->children().size() != r->vars.size()) continue;
    // The instance is covered when the step substitution is a consistent
    // specialization of the equation's argument pattern.
    std::vector<std::vector<Substitution>> parts;
    bool feasible = true;
    for (std::size_t i = 0; i < r->vars.size(); ++i) {
      auto it = subst.find(r->vars[i]);
      if (it == subst.end()) {
        feasible = false;
        break;
      }
      std::vector<Substitution> sols =
          match_modulo(s.sig, s.theory, lifted->children()[i].source(),
                       CanonicalTerm{it->second});
      if (sols.empty()) {
        feasible = false;
        break;
      }
      parts.push_back(std::move(sols));
    }
    if (feasible && !consistent_join(parts).empty()) return true;
  }
  return false;
}

namespace {

int match_cost(const ObjectTheory& theory, const Substitution& sub,
               const Term& redex) {
  int introduced = 0;
  for (const auto& [v, img] : sub) introduced += count_units(theory, img);
  return std::max(0, introduced - count_units(theory, redex));
}

}  // namespace

std::vector<Step> enumerate_steps(const TwoStructure& s,
                                  const CanonicalTerm& t, int unit_budget) {
  std::vector<Step> out;
  for (const Rule& r : s.rules) {
    const int budget =
        unit_budget < 0 ? static_cast<int>(r.vars.size()) : unit_budget;
    for (const Position& p : positions(t.term)) {
      const Term& sub = subterm_at(t.term, p);
      const bool assoc_node =
          sub.is_app() && s.theory.is_assoc(sub.head());
      // Whole-subterm redexes (normalized to a full-span segment on
      // flattened associative nodes).
      for (Substitution& m :
           match_modulo(s.sig, s.theory, r.lhs, CanonicalTerm{sub}, budget)) {
        Step st;
        st.rule = r.label;
        st.pos = p;
        if (assoc_node) {
          st.seg_begin = 0;
          st.seg_end = static_cast<int>(sub.children().size());
        }
        st.units_inserted = match_cost(s.theory, m, sub);
        st.subst = std::move(m);
        out.push_back(std::move(st));
      }
      // Proper child segments of flattened associative nodes.
      if (assoc_node) {
        const int n = static_cast<int>(sub.children().size());
        for (int b = 0; b < n; ++b)
          for (int e = b + 2; e <= n; ++e) {
            if (b == 0 && e == n) continue;  // covered by the full span
            Term slice = Term::app(
                sub.head(), {sub.children().begin() + b,
                             sub.children().begin() + e});
            for (Substitution& m : match_modulo(
                     s.sig, s.theory, r.lhs, CanonicalTerm{slice}, budget)) {
              Step st;
              st.rule = r.label;
              st.pos = p;
              st.seg_begin = b;
              st.seg_end = e;
              st.units_inserted = match_cost(s.theory, m, slice);
              st.subst = std::move(m);
              out.push_back(std::move(st));
            }
          }
      }
    }
  }
  std::vector<Step> kept;
  for (Step& st : out) {
    if (is_identity_instance(s, st.rule, st.subst)) continue;
    st.source = t.term;
    st.target = apply_step(s, t, st).term;
    kept.push_back(std::move(st));
  }
  std::sort(kept.begin(), kept.end());
  kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  return kept;
}

CanonicalTerm apply_step(const TwoStructure& s, const CanonicalTerm& source,
                         const Step& step) {
  const Rule* r = s.rule(step.rule);
  if (!r) throw ValidationError("unknown rule " + step.rule);
  const Term& sub = subterm_at(source.term, step.pos);
  Term redex = sub;
  bool segment = step.seg_begin >= 0;
  if (segment) {
    if (!sub.is_app() || !s.theory.is_assoc(sub.head()))
      throw ValidationError(
          "segment step must target a flattened associative node");
    const int n = static_cast<int>(sub.children().size());
    if (step.seg_begin < 0 || step.seg_end > n ||
        step.seg_end - step.seg_begin < 2)
      throw ValidationError("segment range out of bounds");
    redex = Term::app(sub.head(),
                      {sub.children().begin() + step.seg_begin,
                       sub.children().begin() + step.seg_end});
  }
  if (substitute_canonical(s.sig, s.theory, r->lhs, step.subst).term !=
      canonicalize(s.sig, s.theory, redex).term)
    throw ValidationError("step substitution does not match the redex");
  Term replacement = substitute(r->rhs, step.subst);
  Term next = segment ? replace_segment(source.term, step.pos, step.seg_begin,
                                        step.seg_end, replacement)
                      : replace_at(source.term, step.pos, replacement);
  return canonicalize(s.sig, s.theory, next);
}

Morphism step_to_morphism(const TwoStructure& s, const Step& step) {
  const Rule* r = s.rule(step.rule);
  if (!r) throw ValidationError("unknown rule " + step.rule);
  std::vector<Morphism> lift_args;
  for (const std::string& v : r->vars) {
    auto it = step.subst.find(v);
    if (it == step.subst.end())
      throw ValidationError("step substitution missing variable " + v);
    lift_args.push_back(Morphism::identity(s, it->second));
  }
  Morphism core = Morphism::lift(s, step.rule, std::move(lift_args));

  std::function<Morphism(const Term&, std::size_t)> build =
      [&](const Term& here, std::size_t depth) -> Morphism {
    if (depth == step.pos.size()) {
      if (step.seg_begin < 0) return core;
      const int n = static_cast<int>(here.children().size());
      // Right-nested chain: identities before the redex, the lifted core
      // over the segment, identities after it.
      std::vector<Morphism> pieces;
      for (int i = 0; i < step.seg_begin; ++i)
        pieces.push_back(Morphism::identity(s, here.children()[i]));
      pieces.push_back(core);
      for (int i = step.seg_end; i < n; ++i)
        pieces.push_back(Morphism::identity(s, here.children()[i]));
      Morphism acc = pieces.back();
      for (std::size_t i = pieces.size() - 1; i-- > 0;)
        acc = Morphism::app(s, here.head(), {pieces[i], acc});
      return acc;
    }
    const int idx = step.pos[depth];
    const auto& kids = here.children();
    if (idx < 0 || idx >= static_cast<int>(kids.size()))
      throw ValidationError("step position out of bounds");
    std::vector<Morphism> pieces;
    for (int i = 0; i < static_cast<int>(kids.size()); ++i)
      pieces.push_back(i == idx ? build(kids[i], depth + 1)
                                : Morphism::identity(s, kids[i]));
    if (s.theory.is_assoc(here.head()) && pieces.size() > 2) {
      Morphism acc = pieces.back();
      for (std::size_t i = pieces.size() - 1; i-- > 0;)
        acc = Morphism::app(s, here.head(), {pieces[i], acc});
      return acc;
    }
    return Morphism::app(s, here.head(), std::move(pieces));
  };

  Morphism m = build(step.source, 0);
  if (m.source() != step.source || m.target() != step.target)
    throw Error("step_to_morphism: endpoint mismatch after reconstruction");
  return m;
}

// --- sequentialization -----------------------------------------------------------

namespace {

// Length of the word a term contributes when spliced into a flattened node
// of the given associative symbol.
int word_length(const ObjectTheory& theory, const std::string& op,
                const Term& t) {
  const std::string* unit = theory.unit_of(op);
  if (unit && t.is_app_of(*unit) && t.children().empty()) return 0;
  if (t.is_app_of(op)) return static_cast<int>(t.children().size());
  return 1;
}

// Morphism whose tree mirrors the rule's left-hand side with the lift
// arguments substituted for the variables (generators and units become
// identities).
Morphism lhs_morphism(const TwoStructure& s, const Term& lhs,
                      const std::vector<std::string>& vars,
                      const std::vector<Morphism>& args) {
  switch (lhs.kind()) {
    case Term::Kind::Var: {
      for (std::size_t i = 0; i < vars.size(); ++i)
        if (vars[i] == lhs.head()) return args[i];
      throw Error("lhs_morphism: unbound rule variable " + lhs.head());
    }
    case Term::Kind::Gen:
      return Morphism::identity(s, lhs);
    case Term::Kind::App: {
      std::vector<Morphism> kids;
      for (const Term& c : lhs.children())
        kids.push_back(lhs_morphism(s, c, vars, args));
      return Morphism::app(s, lhs.head(), std::move(kids));
    }
  }
  throw Error("unreachable");
}

std::vector<Step> sequentialize_rec(const TwoStructure& s, const Morphism& m);

// Embeds the steps of one argument of an associative-symbol application
// into the composite word.  `offset` is the number of word elements
// contributed by the already-finished siblings to the left; `other` is the
// word length contributed by the rest of the composite.
std::vector<Step> embed_assoc(const std::string& op, int offset, int other,
                              const ObjectTheory& theory,
                              std::vector<Step> inner) {
  std::vector<Step> out;
  for (Step& st : inner) {
    const int len = word_length(theory, op, st.source);
    if (len == 0)
      throw ValidationError(
          "cannot sequentialize a rewrite under an elided unit: the rewrite "
          "has no position in the composite term");
    const int total = offset + len + other;
    if (total <= 1) {
      // The associative layer collapses away; positions pass through.
      out.push_back(std::move(st));
      continue;
    }
    const bool own_word = st.source.is_app_of(op);
    Step e = std::move(st);
    if (e.pos.empty()) {
      if (own_word) {
        // Segment of the argument's own word becomes a segment of the
        // composite word at the root.
        e.seg_begin += offset;
        e.seg_end += offset;
      } else {
        e.pos.insert(e.pos.begin(), offset);
      }
    } else {
      if (own_word)
        e.pos[0] += offset;
      else
        e.pos.insert(e.pos.begin(), offset);
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Step> sequentialize_rec(const TwoStructure& s, const Morphism& m) {
  switch (m.kind()) {
    case Morphism::Kind::Identity:
      return {};
    case Morphism::Kind::Comp: {
      std::vector<Step> out;
      for (const Morphism& f : m.children()) {
        std::vector<Step> part = sequentialize_rec(s, f);
        out.insert(out.end(), part.begin(), part.end());
      }
      return out;
    }
    case Morphism::Kind::Lift: {
      const Rule* r = s.rule(m.name());
      bool all_identity = true;
      for (const Morphism& a : m.children())
        all_identity = all_identity && a.is_identity();
      if (!all_identity) {
        // Push the argument reductions ahead of the lift: run the arguments
        // inside the left-hand-side context, then lift at the targets.
        std::vector<Morphism> at_targets;
        for (const Morphism& a : m.children())
          at_targets.push_back(Morphism::identity(s, a.target()));
        Morphism staged = Morphism::comp(
            s, lhs_morphism(s, r->lhs, r->vars, m.children()),
            Morphism::lift(s, m.name(), std::move(at_targets)));
        return sequentialize_rec(s, staged);
      }
      Substitution sub;
      for (std::size_t i = 0; i < r->vars.size(); ++i)
        sub.emplace(r->vars[i], m.children()[i].source());
      if (is_identity_instance(s, m.name(), sub)) return {};
      Step st;
      st.rule = m.name();
      st.subst = std::move(sub);
      st.source = m.source();
      st.target = m.target();
      // Mirror enumerate_steps: whole-term redexes on flattened associative
      // nodes are normalized to full-span segments.
      if (m.source().is_app() && s.theory.is_assoc(m.source().head())) {
        st.seg_begin = 0;
        st.seg_end = static_cast<int>(m.source().children().size());
      }
      return {st};
    }
    case Morphism::Kind::App: {
      const bool assoc = s.theory.is_assoc(m.name());
      std::vector<Step> out;
      const auto& kids = m.children();
      if (!assoc) {
        for (std::size_t j = 0; j < kids.size(); ++j) {
          std::vector<Step> part = sequentialize_rec(s, kids[j]);
          std::vector<Term> around;
          for (std::size_t i = 0; i < kids.size(); ++i)
            around.push_back(i < j ? kids[i].target() : kids[i].source());
          for (Step& st : part) {
            st.pos.insert(st.pos.begin(), static_cast<int>(j));
            around[j] = st.source;
            st.source =
                canonicalize(s.sig, s.theory, Term::app(m.name(), around))
                    .term;
            around[j] = st.target;
            st.target =
                canonicalize(s.sig, s.theory, Term::app(m.name(), around))
                    .term;
            out.push_back(std::move(st));
          }
        }
        return out;
      }
      // Associative binary application: siblings left of the active
      // argument are at their targets, those right of it at their sources.
      for (std::size_t j = 0; j < kids.size(); ++j) {
        std::vector<Step> part = sequentialize_rec(s, kids[j]);
        int offset = 0;
        for (std::size_t i = 0; i < j; ++i)
          offset += word_length(s.theory, m.name(), kids[i].target());
        int other = 0;
        for (std::size_t i = j + 1; i < kids.size(); ++i)
          other += word_length(s.theory, m.name(), kids[i].source());
        std::vector<Term> around;
        for (std::size_t i = 0; i < kids.size(); ++i)
          around.push_back(i < j ? kids[i].target() : kids[i].source());
        std::vector<Step> embedded =
            embed_assoc(m.name(), offset, other, s.theory, std::move(part));
        for (Step& st : embedded) {
          Term inner_source = st.source, inner_target = st.target;
          // Positions were rebased by embed_assoc; endpoints still need the
          // composite context.
          if (word_length(s.theory, m.name(), inner_source) + offset + other >
              1) {
            around[j] = inner_source;
            st.source =
                canonicalize(s.sig, s.theory, Term::app(m.name(), around))
                    .term;
            around[j] = inner_target;
            st.target =
                canonicalize(s.sig, s.theory, Term::app(m.name(), around))
                    .term;
          }
          out.push_back(std::move(st));
        }
      }
      return out;
    }
  }
  throw Error("unreachable");
}

}  // namespace

std::vector<Step> sequentialize(const TwoStructure& s, const Morphism& m) {
  std::vector<Step> steps = sequentialize_rec(s, m);
  // Replay the sequence from the source as an end-to-end validation of the
  // position arithmetic.
  CanonicalTerm cur{m.source()};
  for (Step& st : steps) {
    if (st.source != cur.term)
      throw Error("sequentialize: step chain broken at " + print_step(s, st));
    CanonicalTerm next = apply_step(s, cur, st);
    if (next.term != st.target)
      throw Error("sequentialize: replay target mismatch at " +
                  print_step(s, st));
    cur = next;
  }
  if (cur.term != m.target())
    throw Error("sequentialize: replay does not reach the target");
  return steps;
}

// --- face justification ------------------------------------------------------------

namespace {

// Two steps rewrite disjoint regions of the same term.
bool disjoint_regions(const Step& a, const Step& b) {
  const Position& pa = a.pos;
  const Position& pb = b.pos;
  const std::size_t common = std::min(pa.size(), pb.size());
  for (std::size_t i = 0; i < common; ++i)
    if (pa[i] != pb[i]) return true;  // incomparable positions
  if (pa.size() == pb.size()) {
    // Same node: disjoint only for non-overlapping segments.
    if (a.seg_begin < 0 || b.seg_begin < 0) return false;
    return a.seg_end <= b.seg_begin || b.seg_end <= a.seg_begin;
  }
  const Step& up = pa.size() < pb.size() ? a : b;
  const Step& down = pa.size() < pb.size() ? b : a;
  if (up.seg_begin < 0) return false;  // whole subterm covers everything below
  const int child = down.pos[up.pos.size()];
  return child < up.seg_begin || child >= up.seg_end;
}

std::pair<std::string, Substitution> step_key(const Step& st) {
  return {st.rule, st.subst};
}

std::optional<Justification> try_functoriality(const std::vector<Step>& L,
                                               const std::vector<Step>& R) {
  if (L.size() != 2 || R.size() != 2) return std::nullopt;
  if (step_key(L[0]) != step_key(R[1]) || step_key(L[1]) != step_key(R[0]))
    return std::nullopt;
  if (!disjoint_regions(L[0], R[0])) return std::nullopt;
  Justification j;
  j.kind = Justification::Kind::Functoriality;
  j.label = L[0].rule;
  j.subst = L[0].subst;
  j.pos = L[0].pos;
  return j;
}

// One side lifts the rule first (at the argument sources), the other side
// runs the argument rewrites first and lifts at the targets.
std::optional<Justification> try_naturality_oriented(
    const TwoStructure& s, const std::vector<Step>& active,
    const std::vector<Step>& passive, bool reversed) {
  if (active.empty() || passive.empty()) return std::nullopt;
  const Step& b = active.front();
  const Step& a = passive.back();
  if (a.rule != b.rule || a.pos != b.pos) return std::nullopt;
  if ((a.seg_begin < 0) != (b.seg_begin < 0)) return std::nullopt;
  if (a.seg_begin >= 0 && a.seg_begin != b.seg_begin) return std::nullopt;
  const Rule* r = s.rule(a.rule);
  if (!r) return std::nullopt;
  const Substitution& sub0 = b.subst;
  const Substitution& sub1 = a.subst;

  std::vector<std::string> changed;
  for (const std::string& v : r->vars) {
    auto i0 = sub0.find(v);
    auto i1 = sub1.find(v);
    if (i0 == sub0.end() || i1 == sub1.end()) return std::nullopt;
    if (i0->second != i1->second) changed.push_back(v);
  }
  if (changed.empty()) return std::nullopt;

  // Candidate one-step transitions between the argument values.
  std::vector<std::vector<std::pair<std::string, Substitution>>> options;
  for (const std::string& v : changed) {
    std::vector<std::pair<std::string, Substitution>> opts;
    CanonicalTerm from{sub0.at(v)};
    for (const Step& st : enumerate_steps(s, from))
      if (st.target == sub1.at(v)) opts.push_back(step_key(st));
    std::sort(opts.begin(), opts.end());
    opts.erase(std::unique(opts.begin(), opts.end()), opts.end());
    if (opts.empty()) return std::nullopt;
    options.push_back(std::move(opts));
  }

  // The inner steps must be exactly the per-variable transitions repeated
  // once per occurrence (left-hand side on the passive leg, right-hand side
  // on the active leg).  Keys are compared position-blind: occurrences of
  // the same argument splice differently into surrounding words, but rule
  // and substitution are context-free.
  std::multiset<std::pair<std::string, Substitution>> us_keys, vs_keys;
  for (std::size_t i = 0; i + 1 < passive.size(); ++i)
    us_keys.insert(step_key(passive[i]));
  for (std::size_t i = 1; i < active.size(); ++i)
    vs_keys.insert(step_key(active[i]));

  std::function<bool(std::size_t,
                     std::multiset<std::pair<std::string, Substitution>>&,
                     std::multiset<std::pair<std::string, Substitution>>&)>
      assign = [&](std::size_t k, auto& us_left, auto& vs_left) -> bool {
    if (k == changed.size()) return us_left.empty() && vs_left.empty();
    const std::string& v = changed[k];
    const int n_l = count_var_occurrences(r->lhs, v);
    const int n_r = count_var_occurrences(r->rhs, v);
    for (const auto& key : options[k]) {
      if (us_left.count(key) < static_cast<std::size_t>(n_l) ||
          vs_left.count(key) < static_cast<std::size_t>(n_r))
        continue;
      for (int i = 0; i < n_l; ++i) us_left.erase(us_left.find(key));
      for (int i = 0; i < n_r; ++i) vs_left.erase(vs_left.find(key));
      if (assign(k + 1, us_left, vs_left)) return true;
      for (int i = 0; i < n_l; ++i) us_left.insert(key);
      for (int i = 0; i < n_r; ++i) vs_left.insert(key);
    }
    return false;
  };
  if (!assign(0, us_keys, vs_keys)) return std::nullopt;

  Justification j;
  j.kind = Justification::Kind::Naturality;
  j.label = a.rule;
  j.subst = sub0;
  j.pos = a.pos;
  j.reversed = reversed;
  return j;
}

}  // namespace

Morphism substitute_morphism(const TwoStructure& s, const Morphism& m,
                             const Substitution& sub) {
  switch (m.kind()) {
    case Morphism::Kind::Identity:
      return Morphism::identity(s, substitute(m.leaf_term(), sub));
    case Morphism::Kind::Lift: {
      std::vector<Morphism> args;
      for (const Morphism& a : m.children())
        args.push_back(substitute_morphism(s, a, sub));
      return Morphism::lift(s, m.name(), std::move(args));
    }
    case Morphism::Kind::App: {
      std::vector<Morphism> args;
      for (const Morphism& a : m.children())
        args.push_back(substitute_morphism(s, a, sub));
      return Morphism::app(s, m.name(), std::move(args));
    }
    case Morphism::Kind::Comp: {
      std::vector<Morphism> fs;
      for (const Morphism& f : m.children())
        fs.push_back(substitute_morphism(s, f, sub));
      return Morphism::comp(s, std::move(fs));
    }
  }
  throw Error("unreachable");
}

namespace {

bool steps_match(const std::vector<Step>& a, const std::vector<Step>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rule != b[i].rule || a[i].pos != b[i].pos ||
        a[i].seg_begin != b[i].seg_begin || a[i].seg_end != b[i].seg_end ||
        a[i].subst != b[i].subst || a[i].source != b[i].source ||
        a[i].target != b[i].target)
      return false;
  }
  return true;
}

// The common whisker context of a parallel pair of step sequences: a
// position p (and, inside a flattened associative word, a child window
// [lo, hi)) containing every rewrite, such that source and target agree
// outside it.  Returns the stripped endpoints and rebased steps.
struct StrippedFace {
  CanonicalTerm source{Term::gen("_")};
  CanonicalTerm target{Term::gen("_")};
  std::vector<Step> left;
  std::vector<Step> right;
};

std::optional<StrippedFace> strip_context(const TwoStructure& s,
                                          const CanonicalTerm& source,
                                          const CanonicalTerm& target,
                                          const std::vector<Step>& L,
                                          const std::vector<Step>& R) {
  std::vector<const Step*> all;
  for (const Step& st : L) all.push_back(&st);
  for (const Step& st : R) all.push_back(&st);
  if (all.empty()) return std::nullopt;

  Position p = all.front()->pos;
  for (const Step* st : all) {
    std::size_t n = 0;
    while (n < p.size() && n < st->pos.size() && p[n] == st->pos[n]) ++n;
    p.resize(n);
  }

  const Term& src_node = subterm_at(source.term, p);
  const bool assoc =
      src_node.is_app() && s.theory.is_assoc(src_node.head());

  auto rebase_whole = [&]() -> std::optional<StrippedFace> {
    // Verify the context outside p is untouched: replacing the subterm at p
    // in the source with the target's subterm must reproduce the target.
    if (p.size() > 0) {
      std::vector<Position> tgt_positions = positions(target.term);
      bool ok = false;
      for (const Position& q : tgt_positions)
        if (q == p) ok = true;
      if (!ok) return std::nullopt;
    }
    const Term& tgt_node = subterm_at(target.term, p);
    if (canonicalize(s.sig, s.theory,
                     replace_at(source.term, p, tgt_node))
            .term != target.term)
      return std::nullopt;
    StrippedFace f;
    f.source = CanonicalTerm{src_node};
    f.target = CanonicalTerm{tgt_node};
    auto rebase = [&](const std::vector<Step>& steps) {
      std::vector<Step> out;
      for (const Step& st : steps) {
        Step e = st;
        e.pos.erase(e.pos.begin(), e.pos.begin() + static_cast<long>(p.size()));
        e.source = subterm_at(st.source, p);
        e.target = subterm_at(st.target, p);
        out.push_back(std::move(e));
      }
      return out;
    };
    f.left = rebase(L);
    f.right = rebase(R);
    return f;
  };

  if (!assoc) return rebase_whole();

  // Inside a flattened word: find the smallest child window containing all
  // rewrites.
  int lo = static_cast<int>(src_node.children().size());
  int hi = 0;
  for (const Step* st : all) {
    if (st->pos.size() == p.size()) {
      if (st->seg_begin < 0) return rebase_whole();
      lo = std::min(lo, st->seg_begin);
      hi = std::max(hi, st->seg_end);
    } else {
      const int c = st->pos[p.size()];
      lo = std::min(lo, c);
      hi = std::max(hi, c + 1);
    }
  }
  const int n_src = static_cast<int>(src_node.children().size());
  if (lo == 0 && hi == n_src) return rebase_whole();

  // The target at p must be the same word with only the window rewritten.
  const Term* tgt_node = nullptr;
  {
    bool found = false;
    for (const Position& q : positions(target.term))
      if (q == p) found = true;
    if (!found) return rebase_whole();
    tgt_node = &subterm_at(target.term, p);
  }
  if (!tgt_node->is_app_of(src_node.head())) return rebase_whole();
  const int n_tgt = static_cast<int>(tgt_node->children().size());
  const int tail = n_src - hi;
  const int hi_t = n_tgt - tail;
  if (hi_t - lo < 1) return rebase_whole();
  for (int i = 0; i < lo; ++i)
    if (src_node.children()[i] != tgt_node->children()[i])
      return rebase_whole();
  for (int i = 0; i < tail; ++i)
    if (src_node.children()[n_src - 1 - i] !=
        tgt_node->children()[n_tgt - 1 - i])
      return rebase_whole();

  auto window_term = [&](const Term& node, int a, int b) -> Term {
    if (b - a == 1) return node.children()[a];
    return Term::app(node.head(), {node.children().begin() + a,
                                   node.children().begin() + b});
  };

  StrippedFace f;
  f.source = CanonicalTerm{window_term(src_node, lo, hi)};
  f.target = CanonicalTerm{window_term(*tgt_node, lo, hi_t)};

  // The window indices were read off steps taken at different intermediate
  // stages; rewrites that change word lengths can shift them.  The rebased
  // sequences are therefore replayed step by step, and any inconsistency
  // falls back to whole-subterm stripping (which only weakens what the
  // axiom matcher can strip, never what it can conclude).
  auto rebase = [&](const std::vector<Step>& steps)
      -> std::optional<std::vector<Step>> {
    std::vector<Step> out;
    CanonicalTerm cur = f.source;
    for (const Step& st : steps) {
      Step e = st;
      if (st.pos.size() == p.size()) {
        e.pos.clear();
        e.seg_begin -= lo;
        e.seg_end -= lo;
        if (e.seg_begin < 0) return std::nullopt;
        if (!cur.term.is_app_of(src_node.head())) return std::nullopt;
      } else {
        e.pos.erase(e.pos.begin(), e.pos.begin() + static_cast<long>(p.size()));
        if (cur.term.is_app_of(src_node.head())) {
          e.pos[0] -= lo;
        } else {
          // Window of width one: the node layer is gone.
          e.pos.erase(e.pos.begin());
        }
      }
      e.source = cur.term;
      CanonicalTerm next = apply_step(s, cur, e);
      e.target = next.term;
      cur = next;
      out.push_back(std::move(e));
    }
    if (cur != f.target) return std::nullopt;
    return out;
  };
  std::optional<std::vector<Step>> lrb, rrb;
  try {
    lrb = rebase(L);
    rrb = rebase(R);
  } catch (const Error&) {
    return rebase_whole();
  }
  if (!lrb || !rrb) return rebase_whole();
  f.left = std::move(*lrb);
  f.right = std::move(*rrb);
  return f;
}

std::optional<Justification> try_axiom(const TwoStructure& s,
                                       const CanonicalTerm& source,
                                       const CanonicalTerm& target,
                                       const std::vector<Step>& L,
                                       const std::vector<Step>& R) {
  std::optional<StrippedFace> stripped;
  try {
    stripped = strip_context(s, source, target, L, R);
  } catch (const Error&) {
    stripped = std::nullopt;
  }
  CanonicalTerm fs = stripped ? stripped->source : source;
  CanonicalTerm ft = stripped ? stripped->target : target;
  const std::vector<Step>& fl = stripped ? stripped->left : L;
  const std::vector<Step>& fr = stripped ? stripped->right : R;

  for (const Equation& e : s.equations) {
    if (e.identity_instance) continue;  // instances are invisible in spines
    if (!e.left || !e.right) continue;
    std::vector<std::vector<Substitution>> parts;
    parts.push_back(match_modulo(s.sig, s.theory, e.left->source(), fs));
    parts.push_back(match_modulo(s.sig, s.theory, e.left->target(), ft));
    if (parts[0].empty() || parts[1].empty()) continue;
    std::vector<Substitution> joined;
    try {
      joined = consistent_join(parts);
    } catch (const Error&) {
      continue;
    }
    for (const Substitution& sub : joined) {
      std::vector<Step> el, er;
      try {
        el = sequentialize(s, substitute_morphism(s, *e.left, sub));
        er = sequentialize(s, substitute_morphism(s, *e.right, sub));
      } catch (const Error&) {
        continue;
      }
      Justification j;
      j.kind = Justification::Kind::Axiom;
      j.label = e.name;
      j.subst = sub;
      if (steps_match(fl, el) && steps_match(fr, er)) {
        j.reversed = false;
        return j;
      }
      if (steps_match(fl, er) && steps_match(fr, el)) {
        j.reversed = true;
        return j;
      }
    }
  }
  return std::nullopt;
}

}  // namespace

std::string print_justification(const Justification& j) {
  switch (j.kind) {
    case Justification::Kind::IdentityFace:
      return "identity";
    case Justification::Kind::Functoriality:
      return "functoriality";
    case Justification::Kind::Naturality:
      return "naturality(" + j.label + " @ " + print_position(j.pos) + ")";
    case Justification::Kind::Axiom:
      return "axiom(" + j.label + ")";
  }
  return "?";
}

std::optional<Justification> face_instance_steps(const TwoStructure& s,
                                                 const CanonicalTerm& source,
                                                 const std::vector<Step>& left,
                                                 const std::vector<Step>& right) {
  // Replay both sides to validate chaining and agree on the target.
  auto replay = [&](const std::vector<Step>& steps) {
    CanonicalTerm cur = source;
    for (const Step& st : steps) {
      if (st.source != cur.term)
        throw TypeError("face side does not start where the previous step "
                        "ended");
      cur = apply_step(s, cur, st);
      if (cur.term != st.target)
        throw TypeError("face side stores a target that replay contradicts");
    }
    return cur;
  };
  CanonicalTerm lt = replay(left);
  CanonicalTerm rt = replay(right);
  if (lt != rt) throw TypeError("face sides are not parallel");

  if (steps_match(left, right)) {
    Justification j;
    j.kind = Justification::Kind::IdentityFace;
    return j;
  }
  if (auto j = try_functoriality(left, right)) return j;
  if (auto j = try_naturality_oriented(s, left, right, false)) return j;
  if (auto j = try_naturality_oriented(s, right, left, true)) return j;
  if (auto j = try_axiom(s, source, lt, left, right)) return j;
  return std::nullopt;
}

std::optional<Justification> face_instance(const TwoStructure& s,
                                           const Morphism& left,
                                           const Morphism& right) {
  if (left.source() != right.source() || left.target() != right.target())
    throw TypeError("face sides are not parallel");
  return face_instance_steps(s, CanonicalTerm{left.source()},
                             sequentialize(s, left), sequentialize(s, right));
}

}  // namespace cohere
