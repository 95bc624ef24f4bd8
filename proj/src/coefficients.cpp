#include "mvsde/coefficients.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mvsde/errors.hpp"
#include "mvsde/rng.hpp"

namespace mvsde {

namespace {

double get_number(const nlohmann::json& obj, const char* key, const std::string& ptr, double fallback,
                  bool required) {
  if (!obj.contains(key)) {
    if (required) throw ParseError(ptr + "/" + key, std::string("missing field '") + key + "'");
    return fallback;
  }
  if (!obj[key].is_number()) throw ParseError(ptr + "/" + key, "expected a number");
  return obj[key].get<double>();
}

std::string hex_signature(const std::string& text) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (unsigned char c : text) h = hash_combine(h, c);
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

bool is_zero_constant(const nlohmann::json& node) {
  if (node.is_number()) return node.get<double>() == 0.0;
  return node.is_object() && node.value("op", "") == "constant" && node.contains("value") &&
         node["value"].is_number() && node["value"].get<double>() == 0.0;
}

}  // namespace

Model Model::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("", "model document must be an object");
  Model m;
  m.doc_ = doc;
  m.signature_ = hex_signature(doc.dump());
  m.name_ = doc.value("name", std::string("model"));
  const double dim = get_number(doc, "dim", "", 1, false);
  if (dim < 1 || dim != std::floor(dim)) throw ParseError("/dim", "dim must be a positive integer");
  m.dim_ = static_cast<std::size_t>(dim);
  m.horizon_ = get_number(doc, "horizon", "", 1.0, false);
  if (!(m.horizon_ > 0)) throw ParseError("/horizon", "horizon must be positive");

  if (!doc.contains("constants") || !doc["constants"].is_object())
    throw ParseError("/constants", "missing constants object");
  const auto& c = doc["constants"];
  m.constants_.K = get_number(c, "K", "/constants", 0, true);
  m.constants_.k = get_number(c, "k", "/constants", 1, true);
  m.constants_.eta = get_number(c, "eta", "/constants", 1, true);
  m.constants_.beta = get_number(c, "beta", "/constants", 1, true);
  m.constants_.b_sup = get_number(c, "b_sup", "/constants", 0, true);
  m.constants_.grad_sigma_bound = get_number(c, "grad_sigma_bound", "/constants", 0, false);
  if (!(m.constants_.K > 1)) throw ParseError("/constants/K", "K must exceed 1");
  if (!(m.constants_.k >= 1)) throw ParseError("/constants/k", "k must be at least 1");
  if (!(m.constants_.eta > 0 && m.constants_.eta <= 1)) throw ParseError("/constants/eta", "eta must lie in (0,1]");
  if (!(m.constants_.beta > 0 && m.constants_.beta <= 1))
    throw ParseError("/constants/beta", "beta must lie in (0,1]");
  if (!(m.constants_.b_sup >= 0)) throw ParseError("/constants/b_sup", "b_sup must be nonnegative");
  if (!(m.constants_.grad_sigma_bound >= 0))
    throw ParseError("/constants/grad_sigma_bound", "grad_sigma_bound must be nonnegative");

  ExprCompiler dc;
  if (!doc.contains("drift") || !doc["drift"].is_object() || !doc["drift"].contains("components"))
    throw ParseError("/drift/components", "missing drift components");
  const auto& comps = doc["drift"]["components"];
  if (!comps.is_array() || comps.size() != m.dim_)
    throw ParseError("/drift/components", "expected one component per dimension");
  m.drift_zero_ = true;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    m.drift_.push_back(dc.compile(comps[i], "/drift/components/" + std::to_string(i)));
    if (!is_zero_constant(comps[i])) m.drift_zero_ = false;
  }
  m.drift_fs_ = dc.take_functionals();

  ExprCompiler sc;
  if (!doc.contains("diffusion") || !doc["diffusion"].is_object())
    throw ParseError("/diffusion", "missing diffusion object");
  const auto& dif = doc["diffusion"];
  if (dif.contains("scalar")) {
    m.scalar_ = true;
    m.sigma_.push_back(sc.compile(dif["scalar"], "/diffusion/scalar"));
  } else if (dif.contains("matrix")) {
    m.scalar_ = false;
    const auto& rows = dif["matrix"];
    if (!rows.is_array() || rows.size() != m.dim_)
      throw ParseError("/diffusion/matrix", "expected dim rows");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i].is_array() || rows[i].size() != m.dim_)
        throw ParseError("/diffusion/matrix/" + std::to_string(i), "expected dim entries");
      for (std::size_t j = 0; j < m.dim_; ++j)
        m.sigma_.push_back(sc.compile(rows[i][j], "/diffusion/matrix/" + std::to_string(i) + "/" + std::to_string(j)));
    }
  } else {
    throw ParseError("/diffusion/scalar", "diffusion needs 'scalar' or 'matrix'");
  }
  m.diffusion_fs_ = sc.take_functionals();

  auto check_coords = [&](const Program& p, const std::string& ptr) {
    if (p.uses_space() && p.max_coord() >= m.dim_) throw ParseError(ptr, "coord index out of range");
  };
  for (auto& p : m.drift_) check_coords(p, "/drift");
  for (auto& p : m.sigma_) check_coords(p, "/diffusion");
  for (auto& f : m.drift_fs_) check_coords(f.integrand, "/drift");
  for (auto& f : m.diffusion_fs_) check_coords(f.integrand, "/diffusion");
  m.sigma_space_free_ = true;
  for (auto& p : m.sigma_)
    if (p.uses_space()) m.sigma_space_free_ = false;
  return m;
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("", "cannot open model file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("", std::string("malformed JSON in ") + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

bool Model::diffusion_functionals_time_free() const noexcept {
  for (auto& f : diffusion_fs_)
    if (f.integrand.uses_time()) return false;
  return true;
}

bool Model::drift_space_free() const noexcept {
  for (auto& p : drift_)
    if (p.uses_space()) return false;
  return true;
}

bool Model::drift_functionals_time_free() const noexcept {
  for (auto& f : drift_fs_)
    if (f.integrand.uses_time()) return false;
  return true;
}

std::vector<double> Model::drift_functionals(double t, const Flow& f) const {
  if (drift_fs_.empty()) return {};
  if (f.track && f.track->signature == signature_) {
    const std::size_t i = f.track->lookup(t);
    if (i != FunctionalTrack::npos) return f.track->drift_values[i];
  }
  return drift_functionals(t, f.at(t));
}

std::vector<double> Model::diffusion_functionals(double t, const Flow& f) const {
  if (diffusion_fs_.empty()) return {};
  if (f.track && f.track->signature == signature_) {
    const std::size_t i = f.track->lookup(t);
    if (i != FunctionalTrack::npos) return f.track->diffusion_values[i];
  }
  return diffusion_functionals(t, f.at(t));
}

void Model::drift_raw(double t, std::span<const double> x, std::span<const double> slots,
                      std::span<double> out) const {
  for (std::size_t i = 0; i < dim_; ++i) out[i] = drift_[i].eval(t, x, slots);
}

void Model::sigma_raw(double t, std::span<const double> x, std::span<const double> slots,
                      std::span<double> out) const {
  if (scalar_) {
    const double s = sigma_[0].eval(t, x, slots);
    for (std::size_t i = 0; i < dim_; ++i)
      for (std::size_t j = 0; j < dim_; ++j) out[i * dim_ + j] = i == j ? s : 0.0;
  } else {
    for (std::size_t i = 0; i < dim_ * dim_; ++i) out[i] = sigma_[i].eval(t, x, slots);
  }
}

Eigen::MatrixXd Model::sigma_matrix(double t, std::span<const double> x,
                                    std::span<const double> slots) const {
  Eigen::MatrixXd s(dim_, dim_);
  std::vector<double> buf(dim_ * dim_);
  sigma_raw(t, x, slots, buf);
  for (std::size_t i = 0; i < dim_; ++i)
    for (std::size_t j = 0; j < dim_; ++j) s(i, j) = buf[i * dim_ + j];
  return s;
}

Eigen::VectorXd Model::eval_drift(double t, std::span<const double> x, const Measure& m) const {
  if (x.size() != dim_ || m.dim() != dim_) throw DomainError("point or measure has the wrong dimension");
  const auto slots = drift_functionals(t, m);
  Eigen::VectorXd b(dim_);
  drift_raw(t, x, slots, std::span<double>(b.data(), dim_));
  for (std::size_t i = 0; i < dim_; ++i)
    if (!std::isfinite(b[i])) throw NumericError("drift component " + std::to_string(i) + " is not finite");
  const double tol = 1e-12 * std::max(1.0, constants_.b_sup);
  if (b.norm() > constants_.b_sup + tol)
    throw ModelConstantsError("|b| = " + std::to_string(b.norm()) + " exceeds b_sup = " +
                              std::to_string(constants_.b_sup));
  return b;
}

Eigen::MatrixXd Model::eval_sigma(double t, std::span<const double> x, const Measure& m) const {
  if (x.size() != dim_ || m.dim() != dim_) throw DomainError("point or measure has the wrong dimension");
  const auto slots = diffusion_functionals(t, m);
  const Eigen::MatrixXd s = sigma_matrix(t, x, slots);
  if (!s.allFinite()) throw NumericError("diffusion matrix is not finite");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s * s.transpose());
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  const double K = constants_.K, tol = 1e-12 * K;
  if (lo < 1.0 / K - tol || hi > K + tol)
    throw ModelConstantsError("spectrum of sigma sigma* [" + std::to_string(lo) + ", " + std::to_string(hi) +
                              "] leaves [1/K, K] with K = " + std::to_string(K));
  return s;
}

FlowFunctionals::FlowFunctionals(const Model& model, const Flow& flow, Part part)
    : model_(model), flow_(flow), part_(part) {
  const bool drift = part == Part::drift;
  count_ = drift ? model.n_drift_functionals() : model.n_diffusion_functionals();
  const bool tracked = flow.track && flow.track->signature == model.signature();
  const bool time_free = drift ? model.drift_functionals_time_free() : model.diffusion_functionals_time_free();
  per_node_ = !tracked && time_free;
  node_cache_.resize(flow.size());
  node_ready_.assign(flow.size(), 0);
}

const std::vector<double>& FlowFunctionals::at(double t) {
  if (count_ == 0) return scratch_;
  const bool drift = part_ == Part::drift;
  if (per_node_) {
    const std::size_t i = flow_.node_index(t);
    if (!node_ready_[i]) {
      node_cache_[i] = drift ? model_.drift_functionals(t, flow_.at_node(i))
                             : model_.diffusion_functionals(t, flow_.at_node(i));
      node_ready_[i] = 1;
    }
    return node_cache_[i];
  }
  scratch_ = drift ? model_.drift_functionals(t, flow_) : model_.diffusion_functionals(t, flow_);
  return scratch_;
}

}  // namespace mvsde
