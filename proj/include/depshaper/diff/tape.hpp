#pragma once

// Reverse-mode recording tape.
//
// A Var is either passive (no tape, behaves like a double) or an index into a
// Tape.  Arithmetic on active Vars appends one node per primitive; the reverse
// sweep walks the node list backwards exactly once.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace depshaper::diff {

class Tape;

/// Raised when a recorded or replayed primitive produces NaN.
class EvaluationError : public std::runtime_error {
public:
  EvaluationError(std::size_t node, const char* op)
      : std::runtime_error("NaN produced at tape node " + std::to_string(node) + " (" + op + ")"),
        node_(node), op_(op) {}
  std::size_t node() const noexcept { return node_; }
  const std::string& op() const noexcept { return op_; }

private:
  std::size_t node_;
  std::string op_;
};

struct Var {
  Tape* tape = nullptr;
  std::uint32_t idx = 0;
  double val = 0.0;

  Var() = default;
  Var(double v) : val(v) {}  // NOLINT: passive constants mix freely with doubles
  Var(Tape* t, std::uint32_t i, double v) : tape(t), idx(i), val(v) {}

  bool active() const noexcept { return tape != nullptr; }
  double value() const noexcept { return val; }

  Var& operator+=(const Var& o);
  Var& operator-=(const Var& o);
  Var& operator*=(const Var& o);
  Var& operator/=(const Var& o);
};

class Tape {
public:
  enum class Op : std::uint8_t {
    Input, Add, Sub, Mul, Div, AddC, MulC, CSub, CDiv, Neg, Tanh, Exp, Sqrt, Erf, PowC
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var input(double v);

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t input_count() const noexcept { return inputs_.size(); }
  double value(const Var& v) const { return v.active() ? values_[v.idx] : v.val; }

  /// Adjoints of `out` with respect to every input, in input-creation order.
  std::vector<double> gradient(const Var& out) const;

  /// Re-evaluates every node with new input values; partials are recomputed
  /// so a subsequent gradient() is consistent with the replayed values.
  void replay(std::span<const double> inputs);

  void clear();

  // Recording primitives (used by the Var operators).
  Var unary(Op op, const Var& a, double c = 0.0);
  Var binary(Op op, const Var& a, const Var& b);

  static const char* op_name(Op op) noexcept;

private:
  struct Node {
    Op op;
    std::uint32_t a;
    std::uint32_t b;
    double c;
  };

  void evaluate(std::size_t i);

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> pa_;
  std::vector<double> pb_;
  std::vector<std::uint32_t> inputs_;
};

// Operators. Passive operands are folded into constant-carrying unary nodes.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var sqrt(const Var& a);
Var erf(const Var& a);
Var pow(const Var& a, double p);

inline bool operator<(const Var& a, const Var& b) { return a.val < b.val; }
inline bool operator>(const Var& a, const Var& b) { return a.val > b.val; }
inline bool operator<=(const Var& a, const Var& b) { return a.val <= b.val; }
inline bool operator>=(const Var& a, const Var& b) { return a.val >= b.val; }

inline double primal(const Var& v) { return v.val; }

}  // namespace depshaper::diff
