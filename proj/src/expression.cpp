#include "mvsde/expression.hpp"

#include <algorithm>
#include <cmath>

#include "mvsde/errors.hpp"

namespace mvsde {

double Program::eval(double t, std::span<const double> x, std::span<const double> slots) const {
  double stack[64];
  std::size_t top = 0;
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::konst: stack[top++] = in.c; break;
      case Op::time: stack[top++] = t; break;
      case Op::coord: stack[top++] = x[in.n]; break;
      case Op::norm: {
        double s = 0;
        for (double v : x) s += v * v;
        stack[top++] = std::sqrt(s);
        break;
      }
      case Op::slot: stack[top++] = slots[in.n]; break;
      case Op::tanh: stack[top - 1] = std::tanh(stack[top - 1]); break;
      case Op::atan: stack[top - 1] = std::atan(stack[top - 1]); break;
      case Op::clamp1: stack[top - 1] = std::clamp(stack[top - 1], -1.0, 1.0); break;
      case Op::scale: stack[top - 1] *= in.c; break;
      case Op::add: {
        double s = 0;
        for (std::size_t i = 0; i < in.n; ++i) s += stack[--top];
        stack[top++] = s;
        break;
      }
      case Op::mul: {
        double s = 1;
        for (std::size_t i = 0; i < in.n; ++i) s *= stack[--top];
        stack[top++] = s;
        break;
      }
    }
  }
  return stack[0];
}

namespace {

const nlohmann::json& field(const nlohmann::json& node, const char* key, const std::string& ptr) {
  if (!node.is_object() || !node.contains(key))
    throw ParseError(ptr + "/" + key, std::string("missing field '") + key + "'");
  return node.at(key);
}

double number(const nlohmann::json& node, const char* key, const std::string& ptr) {
  const auto& v = field(node, key, ptr);
  if (!v.is_number()) throw ParseError(ptr + "/" + key, "expected a number");
  return v.get<double>();
}

std::size_t depth_estimate(const nlohmann::json& node) {
  if (!node.is_object()) return 1;
  std::size_t d = 1;
  for (auto& [k, v] : node.items()) {
    if (v.is_object()) d = std::max(d, 1 + depth_estimate(v));
    if (v.is_array())
      for (std::size_t i = 0; i < v.size(); ++i) d = std::max(d, i + 1 + depth_estimate(v[i]));
  }
  return d;
}

}  // namespace

Program ExprCompiler::compile(const nlohmann::json& node, const std::string& pointer) {
  if (depth_estimate(node) > 60) throw ParseError(pointer, "expression too deep");
  Program p;
  emit(node, pointer, p, false);
  return p;
}

void ExprCompiler::emit(const nlohmann::json& node, const std::string& ptr, Program& p,
                        bool in_integral) {
  using Op = Program::Op;
  if (node.is_number()) {
    p.code_.push_back({Op::konst, 0, node.get<double>()});
    return;
  }
  const auto& opj = field(node, "op", ptr);
  if (!opj.is_string()) throw ParseError(ptr + "/op", "expected a string");
  const std::string op = opj.get<std::string>();
  if (op == "constant") {
    p.code_.push_back({Op::konst, 0, number(node, "value", ptr)});
  } else if (op == "time") {
    p.code_.push_back({Op::time});
    p.uses_time_ = true;
  } else if (op == "coord") {
    const double i = number(node, "index", ptr);
    if (i < 0 || i != std::floor(i)) throw ParseError(ptr + "/index", "expected a nonnegative integer");
    p.code_.push_back({Op::coord, static_cast<std::size_t>(i)});
    p.max_coord_ = std::max(p.max_coord_, static_cast<std::size_t>(i));
    p.uses_space_ = true;
  } else if (op == "norm") {
    p.code_.push_back({Op::norm});
    p.uses_space_ = true;
  } else if (op == "tanh" || op == "arctan" || op == "clamp1") {
    emit(field(node, "arg", ptr), ptr + "/arg", p, in_integral);
    p.code_.push_back({op == "tanh" ? Op::tanh : op == "arctan" ? Op::atan : Op::clamp1});
  } else if (op == "linear") {
    const auto& terms = field(node, "terms", ptr);
    if (!terms.is_array()) throw ParseError(ptr + "/terms", "expected an array");
    std::size_t n = 0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      const std::string tp = ptr + "/terms/" + std::to_string(i);
      emit(field(terms[i], "expr", tp), tp + "/expr", p, in_integral);
      p.code_.push_back({Op::scale, 0, number(terms[i], "coef", tp)});
      ++n;
    }
    if (node.contains("offset")) {
      p.code_.push_back({Op::konst, 0, number(node, "offset", ptr)});
      ++n;
    }
    if (n == 0) throw ParseError(ptr + "/terms", "linear node needs a term or offset");
    p.code_.push_back({Op::add, n});
  } else if (op == "product") {
    const auto& args = field(node, "args", ptr);
    if (!args.is_array() || args.empty()) throw ParseError(ptr + "/args", "expected a nonempty array");
    for (std::size_t i = 0; i < args.size(); ++i) emit(args[i], ptr + "/args/" + std::to_string(i), p, in_integral);
    p.code_.push_back({Op::mul, args.size()});
  } else if (op == "integral") {
    if (in_integral) throw ParseError(ptr, "integral functionals cannot be nested");
    Functional f;
    f.name = node.contains("name") && node["name"].is_string() ? node["name"].get<std::string>()
                                                               : "psi" + std::to_string(functionals_.size());
    emit(field(node, "expr", ptr), ptr + "/expr", f.integrand, true);
    const std::size_t slot = functionals_.size();
    functionals_.push_back(std::move(f));
    p.code_.push_back({Op::slot, slot});
    p.uses_slots_ = true;
  } else {
    throw ParseError(ptr + "/op", "unknown op '" + op + "'");
  }
}

std::vector<double> eval_functionals(const std::vector<Functional>& fs, double t, const Measure& m) {
  return eval_functionals(fs, t, m.dim(), m.coords(), m.weights());
}

std::vector<double> eval_functionals(const std::vector<Functional>& fs, double t, std::size_t dim,
                                     std::span<const double> coords, std::span<const double> weights) {
  std::vector<double> out(fs.size(), 0.0);
  if (fs.empty()) return out;
  constexpr std::size_t kBlock = 4096;
  const std::size_t n = weights.size(), blocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(blocks * fs.size(), 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t i1 = std::min(n, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < i1; ++i) {
      const std::span<const double> x(coords.data() + i * dim, dim);
      for (std::size_t j = 0; j < fs.size(); ++j)
        partial[b * fs.size() + j] += weights[i] * fs[j].integrand.eval(t, x, {});
    }
  }
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t j = 0; j < fs.size(); ++j) out[j] += partial[b * fs.size() + j];
  for (std::size_t j = 0; j < fs.size(); ++j)
    if (!std::isfinite(out[j]))
      throw NumericError("integral functional '" + fs[j].name + "' is not finite");
  return out;
}

}  // namespace mvsde
