#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oshealth/error.hpp"
#include "oshealth/sem/model.hpp"

namespace oshealth::sem {

enum class ParamKind { Loading, Regression, Variance, Covariance };

inline const char* op_of(ParamKind k) {
  switch (k) {
    case ParamKind::Loading: return "=~";
    case ParamKind::Regression: return "~";
    default: return "~~";
  }
}

/// One entry of A (directed) or S (symmetric). A(row, col) is the effect of
/// col on row; S(row, col) with row >= col.
struct Parameter {
  ParamKind kind;
  std::string lhs, rhs;  // as written: `lhs =~ rhs`, `lhs ~ rhs`, `lhs ~~ rhs`
  Eigen::Index row = 0, col = 0;
  bool free = true;
  double value = 0;  // fixed value, or start value when free

  bool in_a() const { return kind == ParamKind::Loading || kind == ParamKind::Regression; }
  bool is_variance() const { return kind == ParamKind::Variance; }
  std::string name() const { return lhs + op_of(kind) + rhs; }
};

/// Path-matrix form of a model. Variables are the observed indicators, in
/// order of appearance, followed by the latents.
class RamModel {
 public:
  explicit RamModel(const SemModel& m) : model_(m) {
    observed_ = m.indicators();
    variables_ = observed_;
    for (const auto& l : m.latents) variables_.push_back(l);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(variables_.size()); ++i)
      index_[variables_[static_cast<size_t>(i)]] = i;

    for (const auto& eq : m.measurement)
      for (size_t k = 0; k < eq.indicators.size(); ++k) {
        const Term& t = eq.indicators[k];
        Parameter p{ParamKind::Loading, eq.latent, t.name, index(t.name), index(eq.latent)};
        if (t.fixed) {
          p.free = false;
          p.value = *t.fixed;
        } else if (k == 0 && !t.force_free) {
          p.free = false;
          p.value = 1.0;
        }
        params_.push_back(p);
      }
    for (const auto& s : m.structural) {
      Parameter p{ParamKind::Regression, s.to, s.from, index(s.to), index(s.from)};
      if (s.fixed) {
        p.free = false;
        p.value = *s.fixed;
      }
      params_.push_back(p);
    }
    // Variances for every variable, unless a `~~` statement fixes one.
    for (const auto& v : variables_) {
      Parameter p{ParamKind::Variance, v, v, index(v), index(v)};
      for (const auto& c : m.covariances)
        if (c.a == v && c.b == v && c.fixed) {
          p.free = false;
          p.value = *c.fixed;
        }
      params_.push_back(p);
    }
    std::vector<std::string> exo;
    for (const auto& l : m.latents) {
      bool endogenous = false;
      for (const auto& s : m.structural) endogenous |= s.to == l;
      if (!endogenous) exo.push_back(l);
    }
    auto add_cov = [&](const std::string& a, const std::string& b, std::optional<double> fixed) {
      Eigen::Index i = index(a), j = index(b);
      if (i < j) std::swap(i, j);
      for (const auto& q : params_)
        if (q.kind == ParamKind::Covariance && q.row == i && q.col == j) return;
      Parameter p{ParamKind::Covariance, a, b, i, j};
      if (fixed) {
        p.free = false;
        p.value = *fixed;
      }
      params_.push_back(p);
    };
    for (const auto& c : m.covariances)
      if (c.a != c.b) add_cov(c.a, c.b, c.fixed);
    // Exogenous latents covary freely unless told otherwise.
    for (size_t i = 0; i < exo.size(); ++i)
      for (size_t j = i + 1; j < exo.size(); ++j) add_cov(exo[i], exo[j], std::nullopt);

    for (size_t k = 0; k < params_.size(); ++k)
      if (params_[k].free) free_.push_back(k);
    check_scales();
  }

  const SemModel& model() const { return model_; }
  const std::vector<std::string>& observed() const { return observed_; }
  const std::vector<std::string>& variables() const { return variables_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<size_t>& free_indices() const { return free_; }
  Eigen::Index n_observed() const { return static_cast<Eigen::Index>(observed_.size()); }
  Eigen::Index n_variables() const { return static_cast<Eigen::Index>(variables_.size()); }
  Eigen::Index n_free() const { return static_cast<Eigen::Index>(free_.size()); }

  Eigen::Index index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ArgumentError("unknown variable '" + name + "'");
    return it->second;
  }

  /// df = p(p+1)/2 - free parameters.
  long degrees_of_freedom() const {
    long p = static_cast<long>(observed_.size());
    return p * (p + 1) / 2 - static_cast<long>(free_.size());
  }

  Eigen::VectorXd free_values() const {
    Eigen::VectorXd x(n_free());
    for (Eigen::Index k = 0; k < n_free(); ++k) x(k) = params_[free_[static_cast<size_t>(k)]].value;
    return x;
  }
  void set_free_values(const Eigen::VectorXd& x) {
    for (Eigen::Index k = 0; k < n_free(); ++k) params_[free_[static_cast<size_t>(k)]].value = x(k);
  }

  /// Fills A and S from the fixed values and the free vector `x`.
  void matrices(const Eigen::VectorXd& x, Eigen::MatrixXd& a, Eigen::MatrixXd& s) const {
    const Eigen::Index v = n_variables();
    a.setZero(v, v);
    s.setZero(v, v);
    std::vector<double> vals(params_.size());
    for (size_t k = 0; k < params_.size(); ++k) vals[k] = params_[k].value;
    for (Eigen::Index k = 0; k < n_free(); ++k) vals[free_[static_cast<size_t>(k)]] = x(k);
    for (size_t k = 0; k < params_.size(); ++k) {
      const auto& p = params_[k];
      if (p.in_a()) {
        a(p.row, p.col) = vals[k];
      } else {
        s(p.row, p.col) = vals[k];
        s(p.col, p.row) = vals[k];
      }
    }
  }

 private:
  void check_scales() const {
    for (const auto& l : model_.latents) {
      bool scaled = false;
      for (const auto& p : params_) {
        if (p.kind == ParamKind::Loading && p.lhs == l && !p.free && p.value != 0) scaled = true;
        if (p.kind == ParamKind::Variance && p.lhs == l && !p.free) scaled = true;
      }
      if (!scaled)
        throw IdentificationError("latent '" + l +
                                  "' has no scale: fix a loading or its variance");
    }
  }

  SemModel model_;
  std::vector<std::string> observed_, variables_;
  std::map<std::string, Eigen::Index> index_;
  std::vector<Parameter> params_;
  std::vector<size_t> free_;
};

/// B = (I - A)^-1; throws when I - A is singular.
inline Eigen::MatrixXd total_effects(const Eigen::MatrixXd& a) {
  const Eigen::Index v = a.rows();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd::Identity(v, v) - a);
  if (!lu.isInvertible()) throw NumericError("structural singularity: I - A is not invertible");
  return lu.inverse();
}

/// Covariance of all variables, B S B'.
inline Eigen::MatrixXd variable_covariance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& s) {
  Eigen::MatrixXd b = total_effects(a);
  return b * s * b.transpose();
}

/// Sigma = F B S B' F' where F keeps the first `n_observed` variables.
inline Eigen::MatrixXd implied_covariance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& s,
                                          Eigen::Index n_observed) {
  Eigen::MatrixXd v = variable_covariance(a, s);
  Eigen::MatrixXd sigma = v.topLeftCorner(n_observed, n_observed);
  return 0.5 * (sigma + sigma.transpose());
}

inline Eigen::MatrixXd implied_covariance(const RamModel& ram, const Eigen::VectorXd& x) {
  Eigen::MatrixXd a, s;
  ram.matrices(x, a, s);
  return implied_covariance(a, s, ram.n_observed());
}

/// Convenience: set parameters by name (`"Interest=~forks"`, `"forks~~forks"`)
/// and return the implied covariance. Names not listed keep their current value.
inline Eigen::MatrixXd implied_covariance(RamModel ram, const std::map<std::string, double>& values) {
  for (auto& p : ram.parameters()) {
    auto it = values.find(p.name());
    if (it == values.end() && p.kind == ParamKind::Covariance)
      it = values.find(p.rhs + "~~" + p.lhs);
    if (it != values.end()) p.value = it->second;
  }
  for (const auto& [k, v] : values) {
    bool known = false;
    for (const auto& p : ram.parameters())
      known |= p.name() == k || (p.kind == ParamKind::Covariance && p.rhs + "~~" + p.lhs == k);
    if (!known) throw ArgumentError("unknown parameter '" + k + "'");
  }
  return implied_covariance(ram, ram.free_values());
}

}  // namespace oshealth::sem
