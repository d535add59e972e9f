#pragma once

// Labelled terms over a signature, together with the two object-level
// equational theories the library supports: the empty theory (terms compared
// syntactically) and associativity-with-units, where designated binary
// symbols are strictly associative with a strict (possibly shared) unit.
//
// Under associativity-with-units every equivalence class of terms has a
// unique canonical representative: associative applications are flattened
// into variadic nodes with at least two children, unit occurrences are
// elided, and the bare unit is its own canonical term.  All higher layers
// (rewriting, reduction graphs, coherence decisions) work exclusively with
// canonical representatives, so object-level equality is structural equality.

#include <compare>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cohere {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised by the term/morphism/structure-file parsers; carries a 1-based
// source location.
struct ParseError : Error {
  ParseError(const std::string& what, int line, int col)
      : Error(what + " (line " + std::to_string(line) + ", column " +
              std::to_string(col) + ")"),
        line(line),
        col(col) {}
  int line = 0;
  int col = 0;
};

// Raised when a morphism or rule fails endpoint/arity checks.
struct TypeError : Error {
  using Error::Error;
};

// Raised when a structure or operation precondition is violated.
struct ValidationError : Error {
  using Error::Error;
};

struct SymbolInfo {
  std::string name;
  int arity = 0;
  bool infix = false;  // printed/parsed as "(a name b)"; requires arity == 2
};

// Functor symbols plus the generator constants of the (discrete) base.
// Identifiers that are neither symbols nor generators parse as variables.
class Signature {
 public:
  void add_symbol(const std::string& name, int arity, bool infix = false);
  void add_generator(const std::string& name);

  const SymbolInfo* symbol(const std::string& name) const;
  bool is_generator(const std::string& name) const;

  const std::map<std::string, SymbolInfo>& symbols() const { return symbols_; }
  const std::set<std::string>& generators() const { return generators_; }

 private:
  std::map<std::string, SymbolInfo> symbols_;
  std::set<std::string> generators_;
};

// The object-level equational theory.  AssocUnit lists (binary symbol, unit
// symbol) pairs; distinct symbols may share a unit (as in the iterated
// monoidal signatures, where every tensor shares the single unit).
class ObjectTheory {
 public:
  enum class Kind { Empty, AssocUnit };

  static ObjectTheory empty() { return ObjectTheory{}; }
  static ObjectTheory assoc_unit(
      std::vector<std::pair<std::string, std::string>> ops);

  Kind kind() const { return kind_; }
  bool is_assoc(const std::string& sym) const;
  // Unit symbol for an associative symbol; null when sym is not associative.
  const std::string* unit_of(const std::string& sym) const;
  bool is_unit_symbol(const std::string& sym) const;
  const std::vector<std::pair<std::string, std::string>>& pairs() const {
    return pairs_;
  }

 private:
  Kind kind_ = Kind::Empty;
  std::vector<std::pair<std::string, std::string>> pairs_;
};

// Immutable term tree with structural sharing.  App children of associative
// symbols may hold two or more children (the flattened canonical form); all
// other arities must match the signature.
class Term {
 public:
  enum class Kind { Var, Gen, App };

  static Term var(std::string name);
  static Term gen(std::string name);
  static Term app(std::string symbol, std::vector<Term> children);

  Kind kind() const { return node_->kind; }
  const std::string& head() const { return node_->head; }
  const std::vector<Term>& children() const { return node_->children; }
  std::size_t hash() const { return node_->hash; }

  bool is_var() const { return kind() == Kind::Var; }
  bool is_gen() const { return kind() == Kind::Gen; }
  bool is_app() const { return kind() == Kind::App; }
  bool is_app_of(const std::string& sym) const {
    return is_app() && head() == sym;
  }

  bool operator==(const Term& other) const;
  bool operator!=(const Term& other) const { return !(*this == other); }
  // Total lexicographic order: node kind, then head, then children.
  std::strong_ordering operator<=>(const Term& other) const;

 private:
  struct Node {
    Kind kind;
    std::string head;
    std::vector<Term> children;
    std::size_t hash;
  };
  explicit Term(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

// A term in canonical form for a fixed signature/theory: associative nodes
// flattened (>= 2 children, none unit, none same-symbol), units elided.
// Construct via canonicalize(); equality is structural.
struct CanonicalTerm {
  Term term;

  bool operator==(const CanonicalTerm& o) const { return term == o.term; }
  bool operator!=(const CanonicalTerm& o) const { return term != o.term; }
  std::strong_ordering operator<=>(const CanonicalTerm& o) const {
    return term <=> o.term;
  }
};

// Finite map from variable names to canonical terms.  Deterministically
// ordered so substitution sets sort and deduplicate stably.
using Substitution = std::map<std::string, Term>;

// Child-index path from the root of a (canonical) term.
using Position = std::vector<int>;

std::string print_position(const Position& pos);

// --- construction and validation -----------------------------------------

// Checks arities against the signature and that every identifier is
// classified; allow_flattened permits >= 2 children under associative
// symbols.  Throws ValidationError.
void validate_term(const Signature& sig, const ObjectTheory& theory,
                   const Term& term, bool allow_flattened = true);

// The canonical unit term App(unit, {}) for an associative symbol's unit.
Term unit_term(const std::string& unit_symbol);

bool is_unit_term(const ObjectTheory& theory, const Term& term);

// Number of unit-symbol leaves in a term.
int count_units(const ObjectTheory& theory, const Term& term);

// Flatten associative applications, elide units, collapse empty/singleton
// associative nodes.  Idempotent; the identity on Empty-theory terms.
CanonicalTerm canonicalize(const Signature& sig, const ObjectTheory& theory,
                           const Term& term);

// Structural equality of canonical representatives; the object-level
// equality test of the library.
bool term_eq(const CanonicalTerm& a, const CanonicalTerm& b);

// Apply a substitution (unbound variables stay); result is not
// canonicalized.
Term substitute(const Term& term, const Substitution& sub);

// substitute + canonicalize.
CanonicalTerm substitute_canonical(const Signature& sig,
                                   const ObjectTheory& theory,
                                   const Term& term, const Substitution& sub);

// --- parsing and printing -------------------------------------------------

// term := ident | ident "(" term {"," term} ")" | "(" term op term ")"
// where op is a declared infix binary symbol.  Identifiers resolve to
// generators, nullary symbols, or (otherwise) variables.  Throws ParseError.
Term parse_term(const Signature& sig, const std::string& text);

// Fully parenthesized infix for infix symbols (flattened nodes print
// right-nested), prefix application otherwise.  parse_term(print_term(t))
// re-canonicalizes to t.
std::string print_term(const Signature& sig, const Term& term);

// --- positions -------------------------------------------------------------

// All positions of a term in preorder, root first.
std::vector<Position> positions(const Term& term);

const Term& subterm_at(const Term& term, const Position& pos);

// Replace the subterm at pos (whole-node replacement; no canonicalization).
Term replace_at(const Term& term, const Position& pos,
                const Term& replacement);

// Replace the child range [seg_begin, seg_end) of the flattened associative
// node at pos by the replacement as a single child (a node left with one
// child collapses to that child).  Result is not canonicalized; apply
// canonicalize afterwards to splice same-symbol children and elide units.
Term replace_segment(const Term& term, const Position& pos, int seg_begin,
                     int seg_end, const Term& replacement);

// Variables occurring in a term, sorted.
std::vector<std::string> term_vars(const Term& term);

// Generators occurring in a term, sorted (multiset collapsed to a set).
std::vector<std::string> term_gens(const Term& term);

// Count of generator-leaf occurrences.
int count_gen_leaves(const Term& term);

// True when no generator occurs twice.
bool repetition_free(const Term& term);

// Node count of a term (leaves and applications alike).
int term_size(const Term& term);

// --- matching and unification ----------------------------------------------

// All substitutions s with canonicalize(s(pattern)) == subject, where at
// most unit_budget unit constants may appear in the images of s beyond the
// units syntactically present in the subject.  The subject must be
// canonical.  Non-linear patterns are supported (repeated variables must
// bind equal terms).  Result is sorted and duplicate-free.  A negative
// unit_budget means "number of distinct pattern variables".
std::vector<Substitution> match_modulo(const Signature& sig,
                                       const ObjectTheory& theory,
                                       const Term& pattern,
                                       const CanonicalTerm& subject,
                                       int unit_budget = -1);

// Most general syntactic unifier of two terms sharing a variable namespace,
// with occurs check.  Only meaningful under the empty theory.
std::optional<Substitution> unify_syntactic(const Term& a, const Term& b);

// Unifiers of two canonical patterns modulo associativity-with-units.
// Variables may absorb consecutive children of associative nodes or the
// unit (each unit image consumes unit_budget).  Associative-unit
// unification is infinitary in general; this returns the block-aligned
// family, which is complete for the shallow linear rules the library
// ships and bounded by max_solutions otherwise.
std::vector<Substitution> unify_modulo(const Signature& sig,
                                       const ObjectTheory& theory,
                                       const Term& a, const Term& b,
                                       int unit_budget,
                                       std::size_t max_solutions = 256);

// --- enumeration -----------------------------------------------------------

// All canonical ground terms over the signature's functor symbols and the
// given generators with at most max_size nodes (canonical node count).
// When repetition_free is set, each generator appears at most once.  Sorted
// by the term order.  The unit term is included for associative theories.
std::vector<CanonicalTerm> enumerate_canonical_terms(
    const Signature& sig, const ObjectTheory& theory,
    const std::vector<std::string>& generators, int max_size,
    bool repetition_free = false);

}  // namespace cohere
