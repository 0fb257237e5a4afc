#include "frarl/mtl.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

namespace frarl::mtl {

bool Trace::valid() const {
  if (records.empty() || !(dt > 0.0) || !std::isfinite(dt)) return false;
  for (const auto& r : records) {
    for (double v : {r.gap, r.v_ego, r.v_lead, r.a_ego, r.a_lead, r.x_ego, r.x_lead}) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void PredicateRegistry::add(Predicate p) {
  auto id = p.id;
  predicates_[id] = std::move(p);
}

const Predicate* PredicateRegistry::find(const std::string& id) const {
  auto it = predicates_.find(id);
  return it == predicates_.end() ? nullptr : &it->second;
}

namespace {

void check_interval(const Interval& i) {
  if (i.lo < 0.0 || (!i.unbounded && i.hi < i.lo)) {
    throw std::invalid_argument("malformed interval: lo must satisfy 0 <= lo <= hi");
  }
}

}  // namespace

FormulaPtr make_true() {
  auto f = std::make_shared<Formula>();
  f->kind = NodeKind::True;
  return f;
}

FormulaPtr make_atom(Predicate p) {
  auto f = std::make_shared<Formula>();
  f->kind = NodeKind::Atom;
  f->atom = std::move(p);
  return f;
}

FormulaPtr make_not(FormulaPtr inner) {
  auto f = std::make_shared<Formula>();
  f->kind = NodeKind::Not;
  f->left = std::move(inner);
  return f;
}

FormulaPtr make_or(FormulaPtr a, FormulaPtr b) {
  auto f = std::make_shared<Formula>();
  f->kind = NodeKind::Or;
  f->left = std::move(a);
  f->right = std::move(b);
  return f;
}

FormulaPtr make_and(FormulaPtr a, FormulaPtr b) {
  auto f = std::make_shared<Formula>();
  f->kind = NodeKind::And;
  f->left = std::move(a);
  f->right = std::move(b);
  return f;
}

FormulaPtr make_until(Interval i, FormulaPtr a, FormulaPtr b) {
  check_interval(i);
  auto f = std::make_shared<Formula>();
  f->kind = NodeKind::Until;
  f->interval = i;
  f->left = std::move(a);
  f->right = std::move(b);
  return f;
}

FormulaPtr make_globally(FormulaPtr inner) {
  auto f = std::make_shared<Formula>();
  f->kind = NodeKind::Globally;
  f->left = std::move(inner);
  return f;
}

FormulaPtr make_globally(Interval i, FormulaPtr inner) {
  check_interval(i);
  auto f = std::make_shared<Formula>();
  f->kind = NodeKind::GloballyI;
  f->interval = i;
  f->left = std::move(inner);
  return f;
}

FormulaPtr make_eventually(Interval i, FormulaPtr inner) {
  check_interval(i);
  auto f = std::make_shared<Formula>();
  f->kind = NodeKind::EventuallyI;
  f->interval = i;
  f->left = std::move(inner);
  return f;
}

bool structurally_equal(const Formula& a, const Formula& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case NodeKind::True:
      return true;
    case NodeKind::Atom:
      return a.atom.id == b.atom.id;
    case NodeKind::Not:
    case NodeKind::Globally:
      return structurally_equal(*a.left, *b.left);
    case NodeKind::GloballyI:
    case NodeKind::EventuallyI:
      return a.interval.lo == b.interval.lo && a.interval.hi == b.interval.hi &&
             a.interval.unbounded == b.interval.unbounded &&
             structurally_equal(*a.left, *b.left);
    case NodeKind::Or:
    case NodeKind::And:
      return structurally_equal(*a.left, *b.left) && structurally_equal(*a.right, *b.right);
    case NodeKind::Until:
      return a.interval.lo == b.interval.lo && a.interval.hi == b.interval.hi &&
             a.interval.unbounded == b.interval.unbounded &&
             structurally_equal(*a.left, *b.left) && structurally_equal(*a.right, *b.right);
  }
  return false;
}

namespace {

std::string interval_text(const Interval& i) {
  std::ostringstream os;
  os << "[" << i.lo << ",";
  if (i.unbounded) {
    os << "inf";
  } else {
    os << i.hi;
  }
  os << "]";
  return os.str();
}

}  // namespace

std::string to_string(const Formula& f) {
  switch (f.kind) {
    case NodeKind::True:
      return "true";
    case NodeKind::Atom:
      return f.atom.id;
    case NodeKind::Not:
      return "!(" + to_string(*f.left) + ")";
    case NodeKind::Or:
      return "(" + to_string(*f.left) + " | " + to_string(*f.right) + ")";
    case NodeKind::And:
      return "(" + to_string(*f.left) + " & " + to_string(*f.right) + ")";
    case NodeKind::Until:
      return "(" + to_string(*f.left) + " U" + interval_text(f.interval) + " " +
             to_string(*f.right) + ")";
    case NodeKind::Globally:
      return "G (" + to_string(*f.left) + ")";
    case NodeKind::GloballyI:
      return "G" + interval_text(f.interval) + " (" + to_string(*f.left) + ")";
    case NodeKind::EventuallyI:
      return "F" + interval_text(f.interval) + " (" + to_string(*f.left) + ")";
  }
  return "";
}

ParseError::ParseError(const std::string& msg, std::size_t pos)
    : std::runtime_error(msg + " at position " + std::to_string(pos)), position(pos) {}

UnknownAtomError::UnknownAtomError(const std::string& atom, std::size_t pos)
    : std::runtime_error("unknown atom '" + atom + "' at position " + std::to_string(pos)),
      atom_name(atom),
      position(pos) {}

namespace {

class Parser {
 public:
  Parser(std::string_view text, const PredicateRegistry& preds) : text_(text), preds_(preds) {}

  FormulaPtr parse() {
    auto f = parse_or();
    skip_ws();
    if (pos_ != text_.size()) {
      throw ParseError("unexpected trailing input", pos_);
    }
    return f;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  bool consume(char c) {
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  FormulaPtr parse_or() {
    auto lhs = parse_and();
    while (consume('|')) {
      lhs = make_or(std::move(lhs), parse_and());
    }
    return lhs;
  }

  FormulaPtr parse_and() {
    auto lhs = parse_until();
    while (consume('&')) {
      lhs = make_and(std::move(lhs), parse_until());
    }
    return lhs;
  }

  FormulaPtr parse_until() {
    auto lhs = parse_unary();
    while (true) {
      skip_ws();
      // 'U' is only the until operator when followed by '['; otherwise it
      // would be the start of an identifier, which parse_unary handles.
      if (pos_ < text_.size() && text_[pos_] == 'U') {
        std::size_t save = pos_;
        ++pos_;
        if (peek() == '[') {
          Interval i = parse_interval();
          lhs = make_until(i, std::move(lhs), parse_unary());
          continue;
        }
        pos_ = save;
      }
      break;
    }
    return lhs;
  }

  FormulaPtr parse_unary() {
    skip_ws();
    if (pos_ >= text_.size()) {
      throw ParseError("unexpected end of input", pos_);
    }
    char c = text_[pos_];
    if (c == '!') {
      ++pos_;
      return make_not(parse_unary());
    }
    if (c == 'G' && !is_ident_char_at(pos_ + 1)) {
      ++pos_;
      if (peek() == '[') {
        Interval i = parse_interval();
        return make_globally(i, parse_unary());
      }
      return make_globally(parse_unary());
    }
    if (c == 'F' && !is_ident_char_at(pos_ + 1)) {
      ++pos_;
      if (peek() != '[') {
        throw ParseError("'F' requires an interval, e.g. F[0,2]", pos_);
      }
      Interval i = parse_interval();
      return make_eventually(i, parse_unary());
    }
    if (c == '(') {
      ++pos_;
      auto f = parse_or();
      if (!consume(')')) {
        throw ParseError("expected ')'", pos_);
      }
      return f;
    }
    return parse_atom_or_true();
  }

  bool is_ident_char_at(std::size_t p) const {
    if (p >= text_.size()) return false;
    char c = text_[p];
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  }

  FormulaPtr parse_atom_or_true() {
    skip_ws();
    std::size_t start = pos_;
    while (is_ident_char_at(pos_)) ++pos_;
    if (pos_ == start) {
      throw ParseError("expected formula", pos_);
    }
    std::string name(text_.substr(start, pos_ - start));
    if (name == "true") {
      return make_true();
    }
    const Predicate* p = preds_.find(name);
    if (p == nullptr) {
      throw UnknownAtomError(name, start);
    }
    return make_atom(*p);
  }

  Interval parse_interval() {
    if (!consume('[')) {
      throw ParseError("expected '['", pos_);
    }
    Interval i;
    i.lo = parse_number();
    if (!consume(',')) {
      throw ParseError("expected ','", pos_);
    }
    skip_ws();
    if (pos_ + 3 <= text_.size() && text_.substr(pos_, 3) == "inf") {
      pos_ += 3;
      i.unbounded = true;
      i.hi = std::numeric_limits<double>::max();
    } else {
      i.hi = parse_number();
    }
    if (!consume(']')) {
      throw ParseError("expected ']'", pos_);
    }
    if (i.lo < 0.0 || (!i.unbounded && i.hi < i.lo)) {
      throw ParseError("interval must satisfy 0 <= lo <= hi", pos_);
    }
    return i;
  }

  double parse_number() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
            text_[pos_] == '-' || text_[pos_] == '+' || text_[pos_] == 'e' ||
            text_[pos_] == 'E')) {
      ++pos_;
    }
    if (pos_ == start) {
      throw ParseError("expected number", pos_);
    }
    try {
      return std::stod(std::string(text_.substr(start, pos_ - start)));
    } catch (const std::exception&) {
      throw ParseError("malformed number", start);
    }
  }

  std::string_view text_;
  const PredicateRegistry& preds_;
  std::size_t pos_ = 0;
};

struct StepRange {
  std::size_t lo;
  std::size_t hi;  // inclusive
};

/// Interval in seconds -> inclusive step range anchored at t, rounded inward
/// and clipped to the trace end. Throws when the range starts past the end.
StepRange quantize(const Interval& i, double dt, std::size_t t, std::size_t n) {
  constexpr double kEps = 1e-9;
  double lo_steps = std::ceil(i.lo / dt - kEps);
  std::size_t lo = t + static_cast<std::size_t>(std::max(0.0, lo_steps));
  if (lo > n - 1) {
    throw InsufficientHorizonError("interval starts beyond trace end");
  }
  std::size_t hi = n - 1;
  if (!i.unbounded) {
    double hi_steps = std::floor(i.hi / dt + kEps);
    if (hi_steps < lo_steps) {
      throw EvalError("interval quantizes to an empty step range");
    }
    hi = std::min(hi, t + static_cast<std::size_t>(hi_steps));
  }
  return {lo, hi};
}

void check_step(const Trace& tr, std::size_t t) {
  if (t >= tr.size()) {
    throw EvalError("step index out of range");
  }
}

double clamp_top(double v) { return std::clamp(v, -kTop, kTop); }

}  // namespace

FormulaPtr parse_formula(std::string_view text, const PredicateRegistry& predicates) {
  return Parser(text, predicates).parse();
}

double robustness(const Formula& f, const Trace& tr, std::size_t t) {
  check_step(tr, t);
  const std::size_t n = tr.size();
  switch (f.kind) {
    case NodeKind::True:
      return kTop;
    case NodeKind::Atom:
      return clamp_top(f.atom.distance(tr.records[t]));
    case NodeKind::Not:
      return -robustness(*f.left, tr, t);
    case NodeKind::Or:
      return std::max(robustness(*f.left, tr, t), robustness(*f.right, tr, t));
    case NodeKind::And:
      return std::min(robustness(*f.left, tr, t), robustness(*f.right, tr, t));
    case NodeKind::Until: {
      StepRange r = quantize(f.interval, tr.dt, t, n);
      double best = -kTop;
      double left_min = kTop;  // running inf of left operand over [t, t2-1]
      for (std::size_t t2 = t; t2 <= r.hi; ++t2) {
        if (t2 >= r.lo) {
          best = std::max(best, std::min(robustness(*f.right, tr, t2), left_min));
        }
        left_min = std::min(left_min, robustness(*f.left, tr, t2));
      }
      return best;
    }
    case NodeKind::Globally: {
      double worst = kTop;
      for (std::size_t t2 = t; t2 < n; ++t2) {
        worst = std::min(worst, robustness(*f.left, tr, t2));
      }
      return worst;
    }
    case NodeKind::GloballyI: {
      StepRange r = quantize(f.interval, tr.dt, t, n);
      double worst = kTop;
      for (std::size_t t2 = r.lo; t2 <= r.hi; ++t2) {
        worst = std::min(worst, robustness(*f.left, tr, t2));
      }
      return worst;
    }
    case NodeKind::EventuallyI: {
      StepRange r = quantize(f.interval, tr.dt, t, n);
      double best = -kTop;
      for (std::size_t t2 = r.lo; t2 <= r.hi; ++t2) {
        best = std::max(best, robustness(*f.left, tr, t2));
      }
      return best;
    }
  }
  throw EvalError("unreachable formula kind");
}

bool boolean_sat(const Formula& f, const Trace& tr, std::size_t t) {
  check_step(tr, t);
  const std::size_t n = tr.size();
  switch (f.kind) {
    case NodeKind::True:
      return true;
    case NodeKind::Atom:
      return f.atom.distance(tr.records[t]) > 0.0;
    case NodeKind::Not:
      return !boolean_sat(*f.left, tr, t);
    case NodeKind::Or:
      return boolean_sat(*f.left, tr, t) || boolean_sat(*f.right, tr, t);
    case NodeKind::And:
      return boolean_sat(*f.left, tr, t) && boolean_sat(*f.right, tr, t);
    case NodeKind::Until: {
      StepRange r = quantize(f.interval, tr.dt, t, n);
      bool left_holds = true;  // left operand over [t, t2-1]
      for (std::size_t t2 = t; t2 <= r.hi; ++t2) {
        if (t2 >= r.lo && left_holds && boolean_sat(*f.right, tr, t2)) {
          return true;
        }
        left_holds = left_holds && boolean_sat(*f.left, tr, t2);
        if (!left_holds) {
          // no later witness can recover the inner conjunct
          return false;
        }
      }
      return false;
    }
    case NodeKind::Globally: {
      for (std::size_t t2 = t; t2 < n; ++t2) {
        if (!boolean_sat(*f.left, tr, t2)) return false;
      }
      return true;
    }
    case NodeKind::GloballyI: {
      StepRange r = quantize(f.interval, tr.dt, t, n);
      for (std::size_t t2 = r.lo; t2 <= r.hi; ++t2) {
        if (!boolean_sat(*f.left, tr, t2)) return false;
      }
      return true;
    }
    case NodeKind::EventuallyI: {
      StepRange r = quantize(f.interval, tr.dt, t, n);
      for (std::size_t t2 = r.lo; t2 <= r.hi; ++t2) {
        if (boolean_sat(*f.left, tr, t2)) return true;
      }
      return false;
    }
  }
  throw EvalError("unreachable formula kind");
}

}  // namespace frarl::mtl
