#include "depshaper/diff/tape.hpp"

#include <numbers>

namespace depshaper::diff {

namespace {
constexpr double kTwoOverSqrtPi = 2.0 / 1.7724538509055160273;
}

const char* Tape::op_name(Op op) noexcept {
  switch (op) {
    case Op::Input: return "input";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::AddC: return "add_const";
    case Op::MulC: return "mul_const";
    case Op::CSub: return "const_sub";
    case Op::CDiv: return "const_div";
    case Op::Neg: return "neg";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Sqrt: return "sqrt";
    case Op::Erf: return "erf";
    case Op::PowC: return "pow";
  }
  return "unknown";
}

Var Tape::input(double v) {
  const auto i = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back({Op::Input, 0, 0, 0.0});
  values_.push_back(v);
  pa_.push_back(0.0);
  pb_.push_back(0.0);
  inputs_.push_back(i);
  if (std::isnan(v)) throw EvaluationError(i, "input");
  return Var(this, i, v);
}

void Tape::evaluate(std::size_t i) {
  const Node& n = nodes_[i];
  const double a = values_[n.a];
  double y = 0.0;
  double pa = 0.0;
  double pb = 0.0;
  switch (n.op) {
    case Op::Input:
      return;
    case Op::Add: y = a + values_[n.b]; pa = 1.0; pb = 1.0; break;
    case Op::Sub: y = a - values_[n.b]; pa = 1.0; pb = -1.0; break;
    case Op::Mul: {
      const double b = values_[n.b];
      y = a * b; pa = b; pb = a;
      break;
    }
    case Op::Div: {
      const double b = values_[n.b];
      y = a / b; pa = 1.0 / b; pb = -y / b;
      break;
    }
    case Op::AddC: y = a + n.c; pa = 1.0; break;
    case Op::MulC: y = a * n.c; pa = n.c; break;
    case Op::CSub: y = n.c - a; pa = -1.0; break;
    case Op::CDiv: y = n.c / a; pa = -y / a; break;
    case Op::Neg: y = -a; pa = -1.0; break;
    case Op::Tanh: y = std::tanh(a); pa = 1.0 - y * y; break;
    case Op::Exp: y = std::exp(a); pa = y; break;
    case Op::Sqrt: y = std::sqrt(a); pa = 0.5 / y; break;
    case Op::Erf: y = std::erf(a); pa = kTwoOverSqrtPi * std::exp(-a * a); break;
    case Op::PowC: y = std::pow(a, n.c); pa = n.c * std::pow(a, n.c - 1.0); break;
  }
  if (std::isnan(y)) throw EvaluationError(i, op_name(n.op));
  values_[i] = y;
  pa_[i] = pa;
  pb_[i] = pb;
}

Var Tape::unary(Op op, const Var& a, double c) {
  const auto i = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back({op, a.idx, 0, c});
  values_.push_back(0.0);
  pa_.push_back(0.0);
  pb_.push_back(0.0);
  evaluate(i);
  return Var(this, i, values_[i]);
}

Var Tape::binary(Op op, const Var& a, const Var& b) {
  const auto i = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back({op, a.idx, b.idx, 0.0});
  values_.push_back(0.0);
  pa_.push_back(0.0);
  pb_.push_back(0.0);
  evaluate(i);
  return Var(this, i, values_[i]);
}

std::vector<double> Tape::gradient(const Var& out) const {
  std::vector<double> result(inputs_.size(), 0.0);
  if (!out.active()) return result;
  if (out.tape != this) throw std::invalid_argument("Tape::gradient: output recorded on another tape");
  std::vector<double> adj(out.idx + 1, 0.0);
  adj[out.idx] = 1.0;
  for (std::size_t k = out.idx + 1; k-- > 0;) {
    const double g = adj[k];
    if (g == 0.0) continue;
    const Node& n = nodes_[k];
    switch (n.op) {
      case Op::Input:
        break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
        adj[n.a] += g * pa_[k];
        adj[n.b] += g * pb_[k];
        break;
      default:
        adj[n.a] += g * pa_[k];
        break;
    }
  }
  for (std::size_t j = 0; j < inputs_.size(); ++j) {
    if (inputs_[j] <= out.idx) result[j] = adj[inputs_[j]];
  }
  return result;
}

void Tape::replay(std::span<const double> inputs) {
  if (inputs.size() != inputs_.size()) throw std::invalid_argument("Tape::replay: input count mismatch");
  for (std::size_t j = 0; j < inputs_.size(); ++j) {
    if (std::isnan(inputs[j])) throw EvaluationError(inputs_[j], "input");
    values_[inputs_[j]] = inputs[j];
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) evaluate(i);
}

void Tape::clear() {
  nodes_.clear();
  values_.clear();
  pa_.clear();
  pb_.clear();
  inputs_.clear();
}

// --- operators -------------------------------------------------------------

Var operator+(const Var& a, const Var& b) {
  if (a.active() && b.active()) return a.tape->binary(Tape::Op::Add, a, b);
  if (a.active()) return a.tape->unary(Tape::Op::AddC, a, b.val);
  if (b.active()) return b.tape->unary(Tape::Op::AddC, b, a.val);
  return Var(a.val + b.val);
}

Var operator-(const Var& a, const Var& b) {
  if (a.active() && b.active()) return a.tape->binary(Tape::Op::Sub, a, b);
  if (a.active()) return a.tape->unary(Tape::Op::AddC, a, -b.val);
  if (b.active()) return b.tape->unary(Tape::Op::CSub, b, a.val);
  return Var(a.val - b.val);
}

Var operator*(const Var& a, const Var& b) {
  if (a.active() && b.active()) return a.tape->binary(Tape::Op::Mul, a, b);
  if (a.active()) return b.val == 0.0 ? Var(0.0) : a.tape->unary(Tape::Op::MulC, a, b.val);
  if (b.active()) return a.val == 0.0 ? Var(0.0) : b.tape->unary(Tape::Op::MulC, b, a.val);
  return Var(a.val * b.val);
}

Var operator/(const Var& a, const Var& b) {
  if (a.active() && b.active()) return a.tape->binary(Tape::Op::Div, a, b);
  if (a.active()) return a.tape->unary(Tape::Op::MulC, a, 1.0 / b.val);
  if (b.active()) return a.val == 0.0 ? Var(0.0) : b.tape->unary(Tape::Op::CDiv, b, a.val);
  return Var(a.val / b.val);
}

Var operator-(const Var& a) {
  if (a.active()) return a.tape->unary(Tape::Op::Neg, a);
  return Var(-a.val);
}

Var tanh(const Var& a) {
  if (a.active()) return a.tape->unary(Tape::Op::Tanh, a);
  return Var(std::tanh(a.val));
}

Var exp(const Var& a) {
  if (a.active()) return a.tape->unary(Tape::Op::Exp, a);
  return Var(std::exp(a.val));
}

Var sqrt(const Var& a) {
  if (a.active()) return a.tape->unary(Tape::Op::Sqrt, a);
  return Var(std::sqrt(a.val));
}

Var erf(const Var& a) {
  if (a.active()) return a.tape->unary(Tape::Op::Erf, a);
  return Var(std::erf(a.val));
}

Var pow(const Var& a, double p) {
  if (a.active()) return a.tape->unary(Tape::Op::PowC, a, p);
  return Var(std::pow(a.val, p));
}

Var& Var::operator+=(const Var& o) { return *this = *this + o; }
Var& Var::operator-=(const Var& o) { return *this = *this - o; }
Var& Var::operator*=(const Var& o) { return *this = *this * o; }
Var& Var::operator/=(const Var& o) { return *this = *this / o; }

}  // namespace depshaper::diff
