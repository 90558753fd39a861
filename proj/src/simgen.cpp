#include "tehtree/simgen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "tehtree/error.hpp"
#include "tehtree/rng.hpp"

namespace tehtree {

namespace {

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string strip(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double parse_number(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("invalid number '" + text + "' for " + what);
  }
}

double indicator(bool b) { return b ? 1.0 : 0.0; }

}  // namespace

std::string to_string(Model model) { return "M" + std::to_string(static_cast<int>(model)); }

std::string to_string(CovariateSet set) {
  switch (set) {
    case CovariateSet::C1:
      return "C1";
    case CovariateSet::C2:
      return "C2";
    case CovariateSet::C3:
      return "C3";
    case CovariateSet::CM:
      return "CM";
  }
  return "?";
}

Model parse_model(const std::string& code) {
  const std::string c = upper(strip(code));
  if (c.size() >= 2 && c[0] == 'M') {
    try {
      std::size_t used = 0;
      const int k = std::stoi(c.substr(1), &used);
      if (used == c.size() - 1 && k >= 1 && k <= 11) return static_cast<Model>(k);
    } catch (const std::exception&) {
    }
  }
  throw ValidationError("unknown model code '" + code + "' (expected M1..M11)");
}

CovariateSet parse_covariates(const std::string& code) {
  const std::string c = upper(strip(code));
  if (c == "C1") return CovariateSet::C1;
  if (c == "C2") return CovariateSet::C2;
  if (c == "C3") return CovariateSet::C3;
  if (c == "CM") return CovariateSet::CM;
  throw ValidationError("unknown covariate code '" + code + "' (expected C1, C2, C3 or CM)");
}

std::vector<std::string> Coefficients::present() const {
  std::vector<std::string> out;
  if (gamma) out.push_back("gamma");
  if (gamma1) out.push_back("gamma1");
  if (gamma2) out.push_back("gamma2");
  if (eta) out.push_back("eta");
  if (phi) out.push_back("phi");
  return out;
}

Coefficients coefficient_preset(const std::string& code) {
  std::string c = upper(strip(code));
  c.erase(std::remove_if(c.begin(), c.end(), [](char ch) { return ch == '(' || ch == ')'; }), c.end());
  std::size_t digits = 1;
  while (digits < c.size() && std::isdigit(static_cast<unsigned char>(c[digits]))) ++digits;
  if (c.empty() || c[0] != 'P' || digits == 1) {
    throw ValidationError("unknown coefficient preset '" + code + "'");
  }
  const int table = std::stoi(c.substr(1, digits - 1));
  const std::string roman = c.substr(digits);
  static const std::map<std::string, int> numerals{{"", 0}, {"I", 1}, {"II", 2}, {"III", 3}, {"IV", 4}};
  const auto it = numerals.find(roman);
  if (it == numerals.end()) throw ValidationError("unknown coefficient preset '" + code + "'");
  const int variant = it->second;

  Coefficients k;
  const auto need_variant = [&](int count) {
    const int v = variant == 0 ? 1 : variant;
    if (v > count) throw ValidationError("preset '" + code + "' has no such variant");
    return v;
  };
  switch (table) {
    case 1:
      k.phi = std::array<double, 5>{3, 0, 0, 0, 0};
      break;
    case 2:
      k.phi = std::array<double, 5>{1, 0, 0, 0, 0};
      break;
    case 3:
      k.phi = std::array<double, 5>{1, 1, 0, 0, 0};
      break;
    case 4:
      k.gamma = 1.0;
      break;
    case 5: {
      const double g[] = {2.0, 1.0};
      k.gamma = g[need_variant(2) - 1];
      break;
    }
    case 6:
    case 10: {
      const double g1[] = {1.0, 1.0, -1.0, -1.0};
      const double g2[] = {1.0, -1.0, 1.0, -1.0};
      const int v = need_variant(4);
      k.gamma1 = g1[v - 1];
      k.gamma2 = g2[v - 1];
      break;
    }
    case 7: {
      const double g[] = {3.0, 2.0, 1.0};
      k.gamma = g[need_variant(3) - 1];
      break;
    }
    case 8: {
      const double g[] = {2.0, 1.0, 2.0, 1.0};
      const double e[] = {2.0, 2.0, 1.5, 1.5};
      const int v = need_variant(4);
      k.gamma = g[v - 1];
      k.eta = e[v - 1];
      break;
    }
    case 9: {
      const double g1[] = {3.0, 1.0, 3.0, 1.0};
      const double g2[] = {3.0, 1.0, -3.0, -3.0};
      const int v = need_variant(4);
      k.gamma1 = g1[v - 1];
      k.gamma2 = g2[v - 1];
      break;
    }
    case 11: {
      const double g[] = {1.0, 2.0, 6.0};
      k.gamma = g[need_variant(3) - 1];
      break;
    }
    default:
      throw ValidationError("unknown coefficient preset '" + code + "'");
  }
  return k;
}

Coefficients parse_coefficients(const std::string& text) {
  Coefficients k;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = strip(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      const Coefficients preset = coefficient_preset(item);
      if (preset.gamma) k.gamma = preset.gamma;
      if (preset.gamma1) k.gamma1 = preset.gamma1;
      if (preset.gamma2) k.gamma2 = preset.gamma2;
      if (preset.eta) k.eta = preset.eta;
      if (preset.phi) k.phi = preset.phi;
      continue;
    }
    std::string key = strip(item.substr(0, eq));
    for (char& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    const double v = parse_number(strip(item.substr(eq + 1)), key);
    if (key == "gamma") {
      k.gamma = v;
    } else if (key == "gamma1") {
      k.gamma1 = v;
    } else if (key == "gamma2") {
      k.gamma2 = v;
    } else if (key == "eta") {
      k.eta = v;
    } else if (key.size() == 4 && key.rfind("phi", 0) == 0 && key[3] >= '1' && key[3] <= '5') {
      if (!k.phi) k.phi = std::array<double, 5>{0, 0, 0, 0, 0};
      (*k.phi)[static_cast<std::size_t>(key[3] - '1')] = v;
    } else {
      throw ValidationError("unknown coefficient '" + key + "'");
    }
  }
  return k;
}

std::size_t ScenarioSpec::p() const noexcept {
  return covariates == CovariateSet::C3 || covariates == CovariateSet::CM ? 10 : 5;
}

std::vector<ColumnKind> ScenarioSpec::column_kinds() const {
  switch (covariates) {
    case CovariateSet::C1:
      return std::vector<ColumnKind>(5, ColumnKind::binary);
    case CovariateSet::C2:
      return std::vector<ColumnKind>(5, ColumnKind::continuous);
    case CovariateSet::C3:
      return std::vector<ColumnKind>(10, ColumnKind::continuous);
    case CovariateSet::CM: {
      std::vector<ColumnKind> k(5, ColumnKind::continuous);
      k.insert(k.end(), 5, ColumnKind::binary);
      return k;
    }
  }
  return {};
}

namespace {

std::set<std::string> required_coefficients(Model m) {
  switch (m) {
    case Model::M1:
      return {};
    case Model::M2:
      return {"phi"};
    case Model::M3:
    case Model::M4:
    case Model::M6:
    case Model::M10:
      return {"gamma"};
    case Model::M7:
      return {"gamma", "eta"};
    case Model::M5:
    case Model::M8:
    case Model::M9:
    case Model::M11:
      return {"gamma1", "gamma2"};
  }
  return {};
}

}  // namespace

void ScenarioSpec::validate() const {
  const auto required = required_coefficients(model);
  const auto given = coeffs.present();
  for (const auto& name : required) {
    if (std::find(given.begin(), given.end(), name) == given.end()) {
      throw ValidationError("model " + to_string(model) + " requires coefficient '" + name + "'");
    }
  }
  for (const auto& name : given) {
    if (!required.count(name)) {
      throw ValidationError("coefficient '" + name + "' is not used by model " + to_string(model));
    }
  }
  if (n < 4 || n % 2 != 0) throw ValidationError("n must be even and at least 4");
  if (model == Model::M11 && p() < 6) {
    throw ValidationError("model M11 needs 10 covariates (C3 or CM)");
  }
  std::size_t continuous = 0;
  for (ColumnKind k : column_kinds()) continuous += k == ColumnKind::continuous ? 1 : 0;
  const double lower = continuous > 1 ? -1.0 / static_cast<double>(continuous - 1) : -1.0;
  if (!(rho < 1.0 && rho > lower)) {
    throw ValidationError("rho must lie in (" + std::to_string(lower) +
                          ", 1) for an equicorrelation matrix to be positive definite");
  }
}

ScenarioSpec parse_scenario_code(const std::string& code) {
  std::string s = code;
  for (char& c : s) {
    if (c == '(' || c == ')' || c == ',') c = ' ';
  }
  std::stringstream in(s);
  std::string tok;
  ScenarioSpec spec;
  bool have_model = false;
  std::string coeff;
  while (in >> tok) {
    const char head = static_cast<char>(std::toupper(static_cast<unsigned char>(tok[0])));
    if (head == 'M') {
      spec.model = parse_model(tok);
      have_model = true;
    } else if (head == 'C') {
      spec.covariates = parse_covariates(tok);
    } else if (head == 'P') {
      coeff += (coeff.empty() ? "" : ",") + tok;
    } else {
      throw ValidationError("unrecognized scenario code token '" + tok + "'");
    }
  }
  if (!have_model) throw ValidationError("scenario code needs a model (M1..M11)");
  if (!coeff.empty()) {
    spec.coeffs = parse_coefficients(coeff);
    spec.coeff_code = coeff;
  }
  return spec;
}

ScenarioSpec load_scenario_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario config '" + path.string() + "'");
  ScenarioSpec spec;
  std::string line;
  std::size_t lineno = 0;
  std::string coeffs;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("scenario config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    for (char& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (key == "scenario") {
      const ScenarioSpec parsed = parse_scenario_code(value);
      spec.model = parsed.model;
      spec.covariates = parsed.covariates;
      if (!parsed.coeff_code.empty()) coeffs += (coeffs.empty() ? "" : ",") + parsed.coeff_code;
    } else if (key == "model") {
      spec.model = parse_model(value);
    } else if (key == "covariates") {
      spec.covariates = parse_covariates(value);
    } else if (key == "coeffs") {
      coeffs += (coeffs.empty() ? "" : ",") + value;
    } else if (key == "n") {
      const double v = parse_number(value, "n");
      if (v < 0 || v != std::floor(v)) throw ValidationError("n must be a nonnegative integer");
      spec.n = static_cast<std::size_t>(v);
    } else if (key == "rho") {
      spec.rho = parse_number(value, "rho");
    } else if (key == "seed") {
      try {
        spec.seed = std::stoull(value);
      } catch (const std::exception&) {
        throw ValidationError("invalid seed '" + value + "'");
      }
    } else {
      throw ValidationError("scenario config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  spec.coeffs = parse_coefficients(coeffs);
  spec.coeff_code = coeffs;
  return spec;
}

double control_mean(const ScenarioSpec& spec, std::span<const double> x) {
  double mu = kIntercept;
  for (std::size_t m = 0; m < kPrognosticBeta.size() && m < x.size(); ++m) mu += kPrognosticBeta[m] * x[m];
  if (spec.model == Model::M2 && spec.coeffs.phi) {
    for (std::size_t m = 0; m < 5 && m < x.size(); ++m) mu += (*spec.coeffs.phi)[m] * indicator(x[m] > 0.0);
  }
  return mu;
}

double cate(const ScenarioSpec& spec, std::span<const double> x) {
  const auto& k = spec.coeffs;
  const auto g = [](const std::optional<double>& v) { return v.value_or(0.0); };
  const double x1 = x.size() > 0 ? x[0] : 0.0;
  const double x2 = x.size() > 1 ? x[1] : 0.0;
  double h = 0.0;
  switch (spec.model) {
    case Model::M1:
    case Model::M2:
      break;
    case Model::M3:
      h = g(k.gamma) * indicator(x1 > 0.0);
      break;
    case Model::M4:
      h = g(k.gamma) * x1;
      break;
    case Model::M5:
      h = g(k.gamma1) * x1 + g(k.gamma2) * indicator(x1 > 0.0);
      break;
    case Model::M6:
      h = g(k.gamma) * indicator(x1 > -0.5 && x1 < 0.5);
      break;
    case Model::M7:
      h = g(k.gamma) * std::sin(g(k.eta) * x1);
      break;
    case Model::M8:
      h = g(k.gamma1) * indicator(x1 > 0.0) + g(k.gamma2) * indicator(x2 > 0.0);
      break;
    case Model::M9:
      h = g(k.gamma1) * x1 + g(k.gamma2) * indicator(x2 > 0.0);
      break;
    case Model::M10:
      h = g(k.gamma) * std::accumulate(x.begin(), x.end(), 0.0);
      break;
    case Model::M11:
      h = g(k.gamma1) * x1 + g(k.gamma2) * (x.size() > 5 ? x[5] : 0.0);
      break;
  }
  return kMainEffect + h;
}

std::vector<double> true_cate(const ScenarioSpec& spec, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != spec.p()) {
    throw ValidationError("true_cate: expected " + std::to_string(spec.p()) + " covariates, got " +
                          std::to_string(x.cols()));
  }
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) row[static_cast<std::size_t>(c)] = x(r, c);
    out[static_cast<std::size_t>(r)] = cate(spec, row);
  }
  return out;
}

GeneratedData generate_dataset(const ScenarioSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n;
  const std::size_t p = spec.p();
  const std::vector<ColumnKind> kinds = spec.column_kinds();
  std::vector<std::size_t> cont, bin;
  for (std::size_t c = 0; c < p; ++c) (kinds[c] == ColumnKind::continuous ? cont : bin).push_back(c);

  const auto mc = static_cast<Eigen::Index>(cont.size());
  Eigen::MatrixXd chol = Eigen::MatrixXd::Identity(mc, mc);
  if (mc > 0) {
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(mc, mc, spec.rho);
    sigma.diagonal().setOnes();
    const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) throw ValidationError("rho gives a non positive definite covariance");
    chol = llt.matrixL();
  }

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  Rng cov_rng(derive_seed(spec.seed, {0xc0au}));
  Eigen::VectorXd e(mc);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index k = 0; k < mc; ++k) e(k) = cov_rng.normal();
    const Eigen::VectorXd v = chol * e;
    for (Eigen::Index k = 0; k < mc; ++k) x(r, static_cast<Eigen::Index>(cont[static_cast<std::size_t>(k)])) = v(k);
    for (std::size_t c : bin) x(r, static_cast<Eigen::Index>(c)) = cov_rng.bernoulli(0.5) ? 1.0 : 0.0;
  }

  std::vector<int> z(n, 0);
  std::fill(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(n / 2), 1);
  Rng z_rng(derive_seed(spec.seed, {0x2a1u}));
  z_rng.shuffle(z);

  Rng y_rng(derive_seed(spec.seed, {0x71eu}));
  std::vector<double> y(n), effect(n);
  std::vector<double> row(p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < p; ++c) row[c] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    effect[i] = cate(spec, row);
    y[i] = control_mean(spec, row) + z[i] * effect[i] + y_rng.normal();
  }

  std::vector<std::string> names(p);
  for (std::size_t c = 0; c < p; ++c) names[c] = "x" + std::to_string(c + 1);
  return GeneratedData{TrialDataset(std::move(y), std::move(z), std::move(x), std::move(names), kinds),
                       std::move(effect)};
}

std::vector<int> heterogeneity_vars(const ScenarioSpec& spec) {
  const auto& k = spec.coeffs;
  const auto nz = [](const std::optional<double>& v) { return v && *v != 0.0; };
  std::vector<int> out;
  switch (spec.model) {
    case Model::M1:
    case Model::M2:
      break;
    case Model::M3:
    case Model::M4:
    case Model::M6:
      if (nz(k.gamma)) out.push_back(0);
      break;
    case Model::M5:
      if (nz(k.gamma1) || nz(k.gamma2)) out.push_back(0);
      break;
    case Model::M7:
      if (nz(k.gamma) && nz(k.eta)) out.push_back(0);
      break;
    case Model::M8:
    case Model::M9:
      if (nz(k.gamma1)) out.push_back(0);
      if (nz(k.gamma2)) out.push_back(1);
      break;
    case Model::M10:
      if (nz(k.gamma)) {
        for (std::size_t c = 0; c < spec.p(); ++c) out.push_back(static_cast<int>(c));
      }
      break;
    case Model::M11:
      if (nz(k.gamma1)) out.push_back(0);
      if (nz(k.gamma2)) out.push_back(5);
      break;
  }
  return out;
}

}  // namespace tehtree
