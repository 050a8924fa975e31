#pragma once

#include <algorithm>
#include <charconv>
#include <functional>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "oshealth/error.hpp"

namespace oshealth::sem {

/// A term on the right-hand side of an equation: `name`, `0.5*name`, `NA*name`.
/// `fixed` holds the value when the coefficient is fixed; `force_free` marks NA.
struct Term {
  std::string name;
  std::optional<double> fixed;
  bool force_free = false;
  std::size_t line = 0, column = 0;
};

struct MeasurementEquation {
  std::string latent;
  std::vector<Term> indicators;
};

struct PathSpec {
  std::string from, to;
  std::optional<double> fixed;
  std::size_t line = 0, column = 0;
};

struct CovarianceSpec {
  std::string a, b;
  std::optional<double> fixed;
  std::size_t line = 0, column = 0;
};

/// Parsed model. Latents and indicators keep order of first appearance.
struct SemModel {
  std::vector<std::string> latents;
  std::vector<MeasurementEquation> measurement;
  std::vector<PathSpec> structural;
  std::vector<CovarianceSpec> covariances;  // includes variance statements (a == b)

  std::vector<std::string> indicators() const {
    std::vector<std::string> out;
    for (const auto& eq : measurement)
      for (const auto& t : eq.indicators) out.push_back(t.name);
    return out;
  }
  bool is_latent(const std::string& n) const {
    return std::find(latents.begin(), latents.end(), n) != latents.end();
  }
  bool is_indicator(const std::string& n) const {
    for (const auto& eq : measurement)
      for (const auto& t : eq.indicators)
        if (t.name == n) return true;
    return false;
  }
  bool has_variable(const std::string& n) const { return is_latent(n) || is_indicator(n); }

  /// Off-diagonal covariance statements between two indicators.
  std::vector<std::pair<std::string, std::string>> residual_covariances() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& c : covariances)
      if (c.a != c.b && is_indicator(c.a) && is_indicator(c.b)) out.emplace_back(c.a, c.b);
    return out;
  }
};

namespace detail {

inline bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

// Parses one `+`-separated term beginning at text[pos]; pos is 0-based within the line.
inline Term parse_term(std::string_view line, std::size_t begin, std::size_t end, std::size_t line_no) {
  auto skip = [&](std::size_t i) {
    while (i < end && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    return i;
  };
  std::size_t i = skip(begin);
  if (i >= end) throw ParseError("empty term", line_no, begin + 1);
  Term t;
  t.line = line_no;
  t.column = i + 1;
  std::size_t star = line.substr(i, end - i).find('*');
  if (star != std::string_view::npos) {
    std::size_t mod_end = i + star;
    std::string mod(line.substr(i, mod_end - i));
    while (!mod.empty() && std::isspace(static_cast<unsigned char>(mod.back()))) mod.pop_back();
    if (mod == "NA") {
      t.force_free = true;
    } else {
      double v = 0;
      auto [p, ec] = std::from_chars(mod.data(), mod.data() + mod.size(), v);
      if (ec != std::errc() || p != mod.data() + mod.size() || mod.empty())
        throw ParseError("bad coefficient '" + mod + "'", line_no, i + 1);
      t.fixed = v;
    }
    i = skip(mod_end + 1);
  }
  if (i >= end || !ident_start(line[i])) throw ParseError("expected variable name", line_no, i + 1);
  std::size_t j = i;
  while (j < end && ident_char(line[j])) ++j;
  t.name = std::string(line.substr(i, j - i));
  t.column = i + 1;
  if (skip(j) != end)
    throw ParseError("unexpected character '" + std::string(1, line[skip(j)]) + "'", line_no,
                     skip(j) + 1);
  return t;
}

inline std::vector<Term> parse_rhs(std::string_view line, std::size_t begin, std::size_t line_no) {
  std::vector<Term> out;
  std::size_t start = begin;
  for (std::size_t i = begin; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == '+') {
      out.push_back(parse_term(line, start, i, line_no));
      start = i + 1;
    }
  }
  return out;
}

}  // namespace detail

/// Throws ParseError naming the problem and its position when the model is
/// not structurally valid.
inline void validate(const SemModel& m) {
  // Cycles are reported before unknown names: a cycle is wrong whatever
  // the variables turn out to be.
  std::map<std::string, std::vector<const PathSpec*>> out_edges;
  for (const auto& p : m.structural) out_edges[p.from].push_back(&p);
  std::map<std::string, int> state;  // 0 new, 1 on stack, 2 done
  std::vector<std::string> stack;
  std::function<void(const std::string&)> visit = [&](const std::string& v) {
    state[v] = 1;
    stack.push_back(v);
    for (const PathSpec* e : out_edges[v]) {
      if (state[e->to] == 1) {
        auto it = std::find(stack.begin(), stack.end(), e->to);
        std::string cyc;
        for (; it != stack.end(); ++it) cyc += *it + " -> ";
        cyc += e->to;
        throw ParseError("cyclic structural paths: " + cyc, e->line, e->column);
      }
      if (state[e->to] == 0) visit(e->to);
    }
    stack.pop_back();
    state[v] = 2;
  };
  for (const auto& p : m.structural)
    if (state[p.from] == 0) visit(p.from);

  std::map<std::string, const Term*> seen;
  for (const auto& eq : m.measurement)
    for (const auto& t : eq.indicators) {
      if (m.is_latent(t.name))
        throw ParseError("'" + t.name + "' is a latent and cannot be an indicator", t.line, t.column);
      auto [it, fresh] = seen.emplace(t.name, &t);
      if (!fresh)
        throw ParseError("duplicate indicator '" + t.name + "' (first used on line " +
                             std::to_string(it->second->line) + ")",
                         t.line, t.column);
    }
  for (const auto& p : m.structural) {
    for (const auto* n : {&p.to, &p.from})
      if (!m.has_variable(*n)) throw ParseError("unknown variable '" + *n + "'", p.line, p.column);
    if (p.to == p.from) throw ParseError("variable '" + p.to + "' regressed on itself", p.line, p.column);
  }
  for (const auto& c : m.covariances)
    for (const auto* n : {&c.a, &c.b})
      if (!m.has_variable(*n)) throw ParseError("unknown variable '" + *n + "'", c.line, c.column);
}

/// Model language:
///   L =~ a + b + c     measurement (first loading fixed to 1 unless NA*a)
///   Y ~ X + Z          regression among latents
///   a ~~ b             free (residual) covariance; `a ~~ 1*a` fixes a variance
///   # comment
inline SemModel parse_model(std::string_view text) {
  SemModel m;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    std::string line(raw);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;

    std::string op;
    std::size_t op_at = line.find("=~");
    if (op_at != std::string::npos) {
      op = "=~";
    } else if ((op_at = line.find("~~")) != std::string::npos) {
      op = "~~";
    } else if ((op_at = line.find('~')) != std::string::npos) {
      op = "~";
    } else {
      throw ParseError("expected one of '=~', '~', '~~'", line_no, first + 1);
    }
    Term lhs = detail::parse_term(line, 0, op_at, line_no);
    if (lhs.fixed || lhs.force_free)
      throw ParseError("coefficient not allowed on the left-hand side", line_no, first + 1);
    auto rhs = detail::parse_rhs(line, op_at + op.size(), line_no);

    if (op == "=~") {
      auto it = std::find_if(m.measurement.begin(), m.measurement.end(),
                             [&](const MeasurementEquation& e) { return e.latent == lhs.name; });
      if (it == m.measurement.end()) {
        m.latents.push_back(lhs.name);
        m.measurement.push_back({lhs.name, {}});
        it = std::prev(m.measurement.end());
      }
      for (auto& t : rhs) it->indicators.push_back(std::move(t));
    } else if (op == "~") {
      for (auto& t : rhs) {
        if (t.force_free)
          t.fixed.reset();
        m.structural.push_back({t.name, lhs.name, t.fixed, t.line, t.column});
      }
    } else {
      if (rhs.size() != 1) throw ParseError("'~~' takes a single right-hand term", line_no, op_at + 1);
      m.covariances.push_back({lhs.name, rhs[0].name, rhs[0].fixed, rhs[0].line, rhs[0].column});
    }
  }
  // Measurement equations may come after covariance lines that name their
  // indicators, so validation runs on the complete model.
  validate(m);
  return m;
}

/// Adds a free residual covariance between two variables. Idempotent.
inline SemModel free_covariance(SemModel m, const std::string& a, const std::string& b) {
  for (const auto* n : {&a, &b})
    if (!m.has_variable(*n)) throw ArgumentError("unknown indicator '" + *n + "'");
  if (a == b) throw ArgumentError("'" + a + " ~~ " + b + "' is a variance, not a covariance");
  for (const auto& c : m.covariances)
    if ((c.a == a && c.b == b) || (c.a == b && c.b == a)) return m;
  m.covariances.push_back({a, b, std::nullopt, 0, 0});
  return m;
}

/// Drops the regression `to ~ from`. Unknown paths are an error.
inline SemModel remove_path(SemModel m, const std::string& from, const std::string& to) {
  auto it = std::find_if(m.structural.begin(), m.structural.end(),
                         [&](const PathSpec& p) { return p.from == from && p.to == to; });
  if (it == m.structural.end()) throw ArgumentError("no path " + from + " -> " + to);
  m.structural.erase(it);
  return m;
}

/// Renders the model back into the model language.
inline std::string to_text(const SemModel& m) {
  auto coef = [](const Term& t) -> std::string {
    if (t.force_free) return "NA*";
    if (t.fixed) {
      std::ostringstream s;
      s << *t.fixed << "*";
      return s.str();
    }
    return "";
  };
  std::ostringstream out;
  for (const auto& eq : m.measurement) {
    out << eq.latent << " =~ ";
    for (std::size_t i = 0; i < eq.indicators.size(); ++i)
      out << (i ? " + " : "") << coef(eq.indicators[i]) << eq.indicators[i].name;
    out << "\n";
  }
  for (const auto& p : m.structural) {
    out << p.to << " ~ ";
    if (p.fixed) out << *p.fixed << "*";
    out << p.from << "\n";
  }
  for (const auto& c : m.covariances) {
    out << c.a << " ~~ ";
    if (c.fixed) out << *c.fixed << "*";
    out << c.b << "\n";
  }
  return out.str();
}

}  // namespace oshealth::sem
