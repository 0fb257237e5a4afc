#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace frarl::mtl {

/// Saturating stand-in for +infinity in the quantitative semantics.
/// Larger than any finite signal distance; min/max absorb it, negation is
/// exact. Keeping it finite avoids IEEE-infinity propagation in min/max
/// chains.
inline constexpr double kTop = 1e30;

/// One sampled record of the system trajectory. Fields cover everything the
/// shipped predicates and the driving monitor need.
struct TraceRecord {
  double gap = 0.0;     // distance to leading vehicle [m]
  double v_ego = 0.0;   // [m/s]
  double v_lead = 0.0;  // [m/s]
  double a_ego = 0.0;   // [m/s^2]
  double a_lead = 0.0;  // [m/s^2]
  double x_ego = 0.0;   // [m]
  double x_lead = 0.0;  // [m]
};

/// Uniformly sampled discrete-time trajectory.
struct Trace {
  double dt = 0.0;
  std::vector<TraceRecord> records;

  std::size_t size() const { return records.size(); }
  bool valid() const;
};

/// Atomic proposition with quantitative semantics: distance() is the signed
/// distance of a record to the boundary of the predicate's satisfaction set.
/// Positive means satisfied, magnitude is the margin.
struct Predicate {
  std::string id;
  std::function<double(const TraceRecord&)> distance;
};

class PredicateRegistry {
 public:
  void add(Predicate p);
  const Predicate* find(const std::string& id) const;

 private:
  std::map<std::string, Predicate> predicates_;
};

/// Time interval in seconds; hi may be unbounded.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool unbounded = false;
};

enum class NodeKind {
  True,
  Atom,
  Not,
  Or,
  And,
  Until,       // bounded U_I
  Globally,    // unbounded G
  GloballyI,   // G_I
  EventuallyI  // F_I
};

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
  NodeKind kind = NodeKind::True;
  Predicate atom;      // Atom only
  Interval interval;   // timed operators only
  FormulaPtr left;     // unary operand / left operand
  FormulaPtr right;    // right operand
};

FormulaPtr make_true();
FormulaPtr make_atom(Predicate p);
FormulaPtr make_not(FormulaPtr f);
FormulaPtr make_or(FormulaPtr a, FormulaPtr b);
FormulaPtr make_and(FormulaPtr a, FormulaPtr b);
FormulaPtr make_until(Interval i, FormulaPtr a, FormulaPtr b);
FormulaPtr make_globally(FormulaPtr f);
FormulaPtr make_globally(Interval i, FormulaPtr f);
FormulaPtr make_eventually(Interval i, FormulaPtr f);

bool structurally_equal(const Formula& a, const Formula& b);
std::string to_string(const Formula& f);

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t pos);
  std::size_t position;
};

struct UnknownAtomError : std::runtime_error {
  explicit UnknownAtomError(const std::string& atom, std::size_t pos);
  std::string atom_name;
  std::size_t position;
};

/// Grammar (whitespace-insensitive, intervals in seconds, `inf` allowed as hi):
///   formula  := and_expr ('|' and_expr)*
///   and_expr := until    ('&' until)*
///   until    := unary    ('U' interval unary)*
///   unary    := '!' unary | 'G' interval? unary | 'F' interval unary | primary
///   primary  := 'true' | identifier | '(' formula ')'
///   interval := '[' number ',' (number | 'inf') ']'
FormulaPtr parse_formula(std::string_view text, const PredicateRegistry& predicates);

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Interval start falls entirely beyond the end of the trace.
struct InsufficientHorizonError : EvalError {
  using EvalError::EvalError;
};

/// Quantitative robustness of `tr` against `f` at step `t`. Dense-time
/// sup/inf are taken as max/min over the sampled steps whose timestamps fall
/// in the step-quantized closed interval.
double robustness(const Formula& f, const Trace& tr, std::size_t t);

/// Classical Boolean satisfaction with the same step quantization.
bool boolean_sat(const Formula& f, const Trace& tr, std::size_t t);

}  // namespace frarl::mtl
