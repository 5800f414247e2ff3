#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "hqkd/keyrate.hpp"
#include "hqkd/protocol.hpp"

namespace hqkd::cli {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kDefaultEtaA = 0.6;
constexpr double kDefaultDarkA = 1e-6;
constexpr double kDefaultEtaC = 0.98;

std::string format12(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

// Cell for a quantity that may be undefined.
Cell maybe_number(double x) { return std::isfinite(x) ? number(x) : sentinel("invalid"); }

std::vector<std::pair<std::string, Cell>> protocol_meta(const ProtocolSpec& spec) {
  return {{"protocol", sentinel(std::string(spec.name()))}};
}

void add_response_meta(Document& doc, const RunConfig& cfg, const HeraldResponse& r) {
  doc.meta.emplace_back("source", sentinel(to_string(cfg.source_kind())));
  if (cfg.source_kind() == SourceKind::binary || cfg.source_kind() == SourceKind::multiplexed) {
    const auto det = cfg.detector();
    doc.meta.emplace_back("stages", integer(det.stages));
    doc.meta.emplace_back("eta_a", number(det.eta_a));
    doc.meta.emplace_back("dark_a", number(det.dark_a));
    doc.meta.emplace_back("eta_c", number(det.eta_c));
  }
  doc.meta.emplace_back("q0", number(r.q0));
  doc.meta.emplace_back("q1", number(r.q1));
  doc.meta.emplace_back("q2", number(r.q2));
}

void add_solver_meta(Document& doc, const RunConfig& cfg) {
  doc.meta.emplace_back("dark_b", number(cfg.dark_b));
  doc.meta.emplace_back("lambda_min", number(cfg.solver.bounds.lo));
  doc.meta.emplace_back("lambda_max", number(cfg.solver.bounds.hi));
  doc.meta.emplace_back("grid_points", integer(static_cast<long long>(cfg.solver.grid_points)));
  doc.meta.emplace_back("rel_tol", number(cfg.solver.rel_tol));
}

const std::vector<std::string> kRateColumns{"T",  "lambda_opt", "p_exp",  "qber",
                                            "y",  "key_rate",   "secure", "pns_valid"};

std::vector<Cell> rate_row(double t, double lambda, const KeyRateReport& rep) {
  Cell k;
  if (rep.status == ReportStatus::model_invalid || !rep.pns_valid || !std::isfinite(rep.key_rate)) {
    k = sentinel("invalid");
  } else if (!rep.secure) {
    k = sentinel("insecure");
  } else {
    k = number(rep.key_rate);
  }
  return {number(t),           number(lambda), maybe_number(rep.p_exp), maybe_number(rep.qber),
          maybe_number(rep.y), k,              boolean(rep.secure),     boolean(rep.pns_valid)};
}

void append_json_cell(ordered_json& arr, const Cell& c) {
  if (c.quoted) {
    arr.push_back(c.text);
  } else if (c.text == "true" || c.text == "false") {
    arr.push_back(c.text == "true");
  } else {
    arr.push_back(std::stod(c.text));
  }
}

ordered_json cell_json(const Cell& c) {
  ordered_json arr = ordered_json::array();
  append_json_cell(arr, c);
  return arr.front();
}

ordered_json table_json(const Table& t) {
  ordered_json out;
  out["columns"] = t.columns;
  ordered_json rows = ordered_json::array();
  for (const auto& row : t.rows) {
    ordered_json r = ordered_json::array();
    for (const auto& c : row) append_json_cell(r, c);
    rows.push_back(std::move(r));
  }
  out["rows"] = std::move(rows);
  return out;
}

std::string join_cells(const std::vector<Cell>& row) {
  std::string line;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) line += ',';
    line += row[i].text;
  }
  return line;
}

std::string join(const std::vector<std::string>& parts) {
  std::string line;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) line += ',';
    line += parts[i];
  }
  return line;
}

template <class T>
void take(const ordered_json& j, const char* key, std::optional<T>& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

template <class T>
void take(const ordered_json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace

Cell number(double x) { return Cell{format12(x), false}; }
Cell integer(long long x) { return Cell{std::to_string(x), false}; }
Cell boolean(bool b) { return Cell{b ? "true" : "false", false}; }
Cell sentinel(const std::string& s) { return Cell{s, true}; }

SourceKind parse_source_kind(const std::string& s) {
  if (s == "wcp") return SourceKind::wcp;
  if (s == "binary") return SourceKind::binary;
  if (s == "multiplexed") return SourceKind::multiplexed;
  if (s == "custom") return SourceKind::custom;
  throw std::invalid_argument("unknown source '" + s +
                              "' (expected wcp, binary, multiplexed or custom)");
}

std::string to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::wcp: return "wcp";
    case SourceKind::binary: return "binary";
    case SourceKind::multiplexed: return "multiplexed";
    case SourceKind::custom: return "custom";
  }
  return "wcp";
}

SourceKind RunConfig::source_kind() const {
  if (source) return *source;
  if (q0 || q1 || q2) return SourceKind::custom;
  if (stages && *stages > 0) return SourceKind::multiplexed;
  if (stages || eta_a || dark_a || eta_c) return SourceKind::binary;
  return SourceKind::wcp;
}

void RunConfig::validate_source() const {
  const SourceKind kind = source_kind();
  const bool any_q = q0 || q1 || q2;
  const bool any_detector = stages || eta_a || dark_a || eta_c;
  switch (kind) {
    case SourceKind::wcp:
      if (any_q || any_detector) {
        throw std::invalid_argument("source wcp takes no detector or q parameters");
      }
      break;
    case SourceKind::custom:
      if (!(q0 && q1 && q2)) {
        throw std::invalid_argument("source custom needs all of --q0, --q1, --q2");
      }
      if (any_detector) {
        throw std::invalid_argument("source custom cannot be combined with detector parameters");
      }
      (void)HeraldResponse::custom(*q0, *q1, *q2);
      break;
    case SourceKind::binary:
      if (any_q) throw std::invalid_argument("source binary cannot take --q0/--q1/--q2");
      if (stages && *stages != 0) {
        throw std::invalid_argument("source binary is the N = 0 detector; use multiplexed");
      }
      detector().validate();
      break;
    case SourceKind::multiplexed:
      if (any_q) throw std::invalid_argument("source multiplexed cannot take --q0/--q1/--q2");
      if (!stages) throw std::invalid_argument("source multiplexed needs --stages");
      detector().validate();
      break;
  }
}

void RunConfig::validate_t_range() const {
  if (t) {
    if (!(*t > 0.0 && *t <= 1.0)) throw std::invalid_argument("--t must lie in (0, 1]");
    return;
  }
  if (!(t_lo > 0.0 && t_lo < t_hi && t_hi <= 1.0)) {
    throw std::invalid_argument("T range must satisfy 0 < t-min < t-max <= 1");
  }
  if (points < 2) throw std::invalid_argument("--points must be >= 2 for a T range");
}

MultiplexedDetectorParams RunConfig::detector() const {
  MultiplexedDetectorParams p;
  p.stages = stages.value_or(0);
  p.eta_a = eta_a.value_or(kDefaultEtaA);
  p.dark_a = dark_a.value_or(kDefaultDarkA);
  p.eta_c = eta_c.value_or(kDefaultEtaC);
  return p;
}

HeraldResponse RunConfig::response() const {
  validate_source();
  switch (source_kind()) {
    case SourceKind::wcp: return wcp_response();
    case SourceKind::custom: return HeraldResponse::custom(*q0, *q1, *q2);
    case SourceKind::binary:
    case SourceKind::multiplexed: return multiplexed_response(detector());
  }
  return wcp_response();
}

std::vector<double> RunConfig::t_grid() const {
  validate_t_range();
  if (t) return {*t};
  return log_grid(t_lo, t_hi, static_cast<std::size_t>(points));
}

void load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config file '" + path + "': " + e.what());
  }
  try {
    if (j.contains("protocol")) {
      const auto& p = j.at("protocol");
      cfg.protocol = p.is_string() ? p.get<std::string>() : p.at("name").get<std::string>();
    }
    if (j.contains("detector")) {
      const auto& d = j.at("detector");
      if (d.contains("source")) cfg.source = parse_source_kind(d.at("source").get<std::string>());
      take(d, "stages", cfg.stages);
      take(d, "eta_a", cfg.eta_a);
      take(d, "dark_a", cfg.dark_a);
      take(d, "eta_c", cfg.eta_c);
      take(d, "q0", cfg.q0);
      take(d, "q1", cfg.q1);
      take(d, "q2", cfg.q2);
      take(d, "eta_a_list", cfg.eta_a_list);
      take(d, "n_max", cfg.n_max);
    }
    if (j.contains("channel")) {
      const auto& c = j.at("channel");
      take(c, "dark_b", cfg.dark_b);
      take(c, "t", cfg.t);
      take(c, "t_min", cfg.t_lo);
      take(c, "t_max", cfg.t_hi);
      take(c, "points", cfg.points);
    }
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      take(s, "lambda_min", cfg.solver.bounds.lo);
      take(s, "lambda_max", cfg.solver.bounds.hi);
      take(s, "grid_points", cfg.solver.grid_points);
      take(s, "rel_tol", cfg.solver.rel_tol);
      take(s, "threads", cfg.threads);
      take(s, "lambda", cfg.lambda);
    }
    if (j.contains("contour")) {
      const auto& c = j.at("contour");
      take(c, "q_points", cfg.q_points);
      take(c, "y_points", cfg.y_points);
      take(c, "q_max", cfg.q_max);
    }
    if (j.contains("output")) {
      const auto& o = j.at("output");
      if (o.contains("format")) {
        const auto f = o.at("format").get<std::string>();
        if (f != "csv" && f != "json") throw std::invalid_argument("unknown output format " + f);
        cfg.format = f == "json" ? OutputFormat::json : OutputFormat::csv;
      }
      take(o, "path", cfg.output);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config file '" + path + "': " + e.what());
  }
}

std::string render_csv(const Document& doc) {
  std::ostringstream os;
  os << "# command=" << doc.command << '\n';
  for (const auto& [key, cell] : doc.meta) os << "# " << key << '=' << cell.text << '\n';
  for (const auto& side : doc.side) {
    os << "# series " << side.name << ": " << join(side.columns) << '\n';
    for (const auto& row : side.rows) os << "# " << side.name << ',' << join_cells(row) << '\n';
  }
  os << join(doc.main.columns) << '\n';
  for (const auto& row : doc.main.rows) os << join_cells(row) << '\n';
  return os.str();
}

std::string render_json(const Document& doc) {
  ordered_json j;
  j["command"] = doc.command;
  ordered_json meta = ordered_json::object();
  for (const auto& [key, cell] : doc.meta) meta[key] = cell_json(cell);
  j["meta"] = std::move(meta);
  j[doc.main.name.empty() ? "table" : doc.main.name] = table_json(doc.main);
  ordered_json side = ordered_json::object();
  for (const auto& s : doc.side) side[s.name] = table_json(s);
  j["series"] = std::move(side);
  return j.dump(2) + "\n";
}

Document cmd_threshold(const RunConfig& cfg) {
  const ProtocolSpec spec = ProtocolSpec::from_name(cfg.protocol);
  Document doc;
  doc.command = "threshold";
  doc.meta = protocol_meta(spec);
  doc.main.name = "constants";
  doc.main.columns = {"quantity", "value"};
  doc.main.rows = {
      {sentinel("q_threshold"), number(spec.qber_threshold())},
      {sentinel("xi"), number(spec.xi())},
      {sentinel("eve_info_two"), number(spec.eve_info_two())},
      {sentinel("sift_fraction"), number(spec.sift_fraction())},
      {sentinel("pns_boundary_ratio"), number(pns_boundary_ratio(spec))},
  };
  return doc;
}

Document cmd_detector(const RunConfig& cfg) {
  const HeraldResponse r = cfg.response();
  Document doc;
  doc.command = "detector";
  add_response_meta(doc, cfg, r);
  doc.main.name = "detector";
  doc.main.columns = {"q0", "q1", "q2", "short_distance_factor", "distance_factor"};
  auto guarded = [](auto&& fn) {
    try {
      return number(fn());
    } catch (const SingularityError&) {
      return sentinel("unbounded");
    }
  };
  std::vector<Cell> row{number(r.q0), number(r.q1), number(r.q2),
                        guarded([&] { return short_distance_factor(r); }),
                        guarded([&] { return distance_factor(r); })};

  const SourceKind kind = cfg.source_kind();
  if (kind == SourceKind::binary || kind == SourceKind::multiplexed) {
    const auto det = cfg.detector();
    doc.main.columns.insert(doc.main.columns.end(), {"effective_efficiency",
                                                     "approx_distance_factor",
                                                     "advantage_threshold"});
    row.push_back(number(det.effective_efficiency()));
    row.push_back(det.effective_efficiency() > 0.0 ? number(approx_distance_factor(det))
                                                   : sentinel("invalid"));
    row.push_back(number(advantage_threshold(det.stages)));
    if (cfg.oracle) {
      if (det.stages > 6) throw std::invalid_argument("--oracle supports at most 6 stages");
      const double b0 = brute_force_response(det, 0);
      const double b1 = brute_force_response(det, 1);
      const double b2 = brute_force_response(det, 2);
      const double delta =
          std::max({std::abs(b0 - r.q0), std::abs(b1 - r.q1), std::abs(b2 - r.q2)});
      doc.main.columns.insert(doc.main.columns.end(),
                              {"oracle_q0", "oracle_q1", "oracle_q2", "max_abs_delta"});
      row.insert(row.end(), {number(b0), number(b1), number(b2), number(delta)});
    }
  } else if (cfg.oracle) {
    throw std::invalid_argument("--oracle needs a binary or multiplexed detector");
  }
  doc.main.rows.push_back(std::move(row));
  return doc;
}

Document cmd_keyrate(const RunConfig& cfg) {
  if (!cfg.t) throw std::invalid_argument("keyrate needs --t");
  const ProtocolSpec spec = ProtocolSpec::from_name(cfg.protocol);
  const HeraldResponse r = cfg.response();
  const ChannelParams ch{*cfg.t, cfg.dark_b};
  ch.validate();
  Document doc;
  doc.command = "keyrate";
  doc.meta = protocol_meta(spec);
  add_response_meta(doc, cfg, r);
  add_solver_meta(doc, cfg);
  doc.main.name = "points";
  doc.main.columns = kRateColumns;
  if (cfg.lambda) {
    SourceParams src{*cfg.lambda};
    src.validate();
    KeyRateReport rep;
    try {
      rep = key_rate(spec, src.statistics(), r, ch);
    } catch (const UndefinedRateError&) {
      rep.status = ReportStatus::model_invalid;
      rep.key_rate = std::nan("");
      rep.p_exp = 0.0;
      rep.qber = std::nan("");
      rep.y = std::nan("");
    }
    doc.meta.emplace_back("mode", sentinel("fixed_lambda"));
    doc.meta.emplace_back("perturbative_advisory", boolean(src.perturbative_advisory()));
    doc.main.rows.push_back(rate_row(*cfg.t, *cfg.lambda, rep));
  } else {
    const OptimizationResult res = optimize_lambda(spec, r, ch, cfg.solver);
    doc.meta.emplace_back("mode", sentinel("optimized"));
    doc.meta.emplace_back("converged", boolean(res.converged));
    doc.meta.emplace_back("evaluations", integer(res.evaluations));
    doc.main.rows.push_back(rate_row(*cfg.t, res.lambda_opt, res.report));
  }
  doc.meta.emplace_back("dark_count_advisory", boolean(ch.dark_count_advisory()));
  return doc;
}

namespace {

void add_tmin_meta(Document& doc, const ProtocolSpec& spec, const HeraldResponse& r,
                   const RunConfig& cfg) {
  doc.meta.emplace_back("t_min_single_photon", number(tmin_single_photon(spec, cfg.dark_b)));
  const WcpMinimum wcp = tmin_wcp(spec, cfg.dark_b);
  doc.meta.emplace_back("t_min_wcp", number(wcp.t_min));
  doc.meta.emplace_back("lambda_opt_wcp", number(wcp.lambda_opt));
  try {
    doc.meta.emplace_back("distance_factor", number(distance_factor(r)));
    doc.meta.emplace_back("t_min_heralded", number(tmin_heralded(spec, r, cfg.dark_b)));
  } catch (const SingularityError&) {
    doc.meta.emplace_back("distance_factor", sentinel("invalid"));
    doc.meta.emplace_back("t_min_heralded", sentinel("invalid"));
  }
  try {
    doc.meta.emplace_back("lambda_opt_heralded", number(lambda_opt_heralded(spec, r, cfg.dark_b)));
  } catch (const SingularityError&) {
    doc.meta.emplace_back("lambda_opt_heralded", sentinel("unbounded"));
  }
  try {
    doc.meta.emplace_back("t_min_numerical",
                          number(tmin_numerical(spec, r, cfg.dark_b, cfg.solver)));
  } catch (const std::exception&) {
    doc.meta.emplace_back("t_min_numerical", sentinel("invalid"));
  }
}

}  // namespace

Document cmd_scan(const RunConfig& cfg) {
  const ProtocolSpec spec = ProtocolSpec::from_name(cfg.protocol);
  const HeraldResponse r = cfg.response();
  const std::vector<double> grid = cfg.t_grid();
  const ScanSeries series = scan_key_rate(spec, r, cfg.dark_b, grid, cfg.solver, cfg.threads);

  Document doc;
  doc.command = "scan";
  doc.meta = protocol_meta(spec);
  add_response_meta(doc, cfg, r);
  add_solver_meta(doc, cfg);
  if (cfg.dark_b > 0.0) add_tmin_meta(doc, spec, r, cfg);

  doc.main.name = "points";
  doc.main.columns = kRateColumns;
  for (const auto& p : series.points) {
    doc.main.rows.push_back(rate_row(p.transmission, p.result.lambda_opt, p.result.report));
  }

  Table approx;
  approx.name = "short_distance_approx";
  approx.columns = {"T", "key_rate"};
  for (double t : grid) {
    Cell k = sentinel("invalid");
    if (spec.eve_info_two() - 2.0 * t > 0.0) {
      try {
        k = number(short_distance_approx_rate(spec, r, t));
      } catch (const SingularityError&) {
      }
    }
    approx.rows.push_back({number(t), k});
  }
  doc.side.push_back(std::move(approx));
  return doc;
}

Document cmd_tmin(const RunConfig& cfg) {
  const ProtocolSpec spec = ProtocolSpec::from_name(cfg.protocol);
  const HeraldResponse r = cfg.response();
  if (!(cfg.dark_b > 0.0 && cfg.dark_b < 1.0)) {
    throw std::invalid_argument("tmin needs --dark-b in (0, 1)");
  }
  Document doc;
  doc.command = "tmin";
  doc.meta = protocol_meta(spec);
  add_response_meta(doc, cfg, r);
  add_solver_meta(doc, cfg);
  Document tmp;
  add_tmin_meta(tmp, spec, r, cfg);
  doc.main.name = "minimum_transmission";
  doc.main.columns = {"quantity", "value"};
  double analytic = std::nan("");
  double numeric = std::nan("");
  for (const auto& [key, cell] : tmp.meta) {
    doc.main.rows.push_back({sentinel(key), cell});
    if (!cell.quoted && key == "t_min_heralded") analytic = std::stod(cell.text);
    if (!cell.quoted && key == "t_min_numerical") numeric = std::stod(cell.text);
  }
  doc.main.rows.push_back(
      {sentinel("relative_discrepancy"), maybe_number(analytic / numeric - 1.0)});
  return doc;
}

Document cmd_contour(const RunConfig& cfg) {
  const ProtocolSpec spec = ProtocolSpec::from_name(cfg.protocol);
  if (cfg.q_points < 2 || cfg.y_points < 1) {
    throw std::invalid_argument("contour needs --q-points >= 2 and --y-points >= 1");
  }
  if (!(cfg.q_max > 0.0 && cfg.q_max <= 0.25)) {
    throw std::invalid_argument("contour --q-max must lie in (0, 0.25]");
  }
  Document doc;
  doc.command = "contour";
  doc.meta = protocol_meta(spec);
  doc.meta.emplace_back("q_threshold", number(spec.qber_threshold()));
  doc.meta.emplace_back("xi", number(spec.xi()));
  doc.meta.emplace_back("pns_boundary_ratio", number(pns_boundary_ratio(spec)));
  doc.main.name = "grid";
  doc.main.columns = {"Q", "y", "renormalized_key_rate"};

  std::vector<double> ys;
  for (int k = 1; k <= cfg.y_points; ++k) ys.push_back(static_cast<double>(k) / cfg.y_points);
  for (double y : ys) {
    for (int i = 0; i < cfg.q_points; ++i) {
      const double q = cfg.q_max * static_cast<double>(i) / (cfg.q_points - 1);
      const auto value = renormalized_key_rate(spec, q, y);
      doc.main.rows.push_back({number(q), number(y), value ? number(*value) : sentinel("invalid")});
    }
  }

  Table bound;
  bound.name = "linearized_bound";
  bound.columns = {"y", "Q"};
  for (double y : ys) {
    const double q = spec.qber_threshold() * (1.0 - spec.xi() * (1.0 - y));
    if (q >= 0.0) bound.rows.push_back({number(y), number(q)});
  }
  doc.side.push_back(std::move(bound));
  return doc;
}

Document cmd_compare_stages(const RunConfig& cfg) {
  const ProtocolSpec spec = ProtocolSpec::from_name(cfg.protocol);
  if (cfg.n_max < 0) throw std::invalid_argument("--n-max must be >= 0");
  if (cfg.eta_a_list.empty()) throw std::invalid_argument("--eta-a-list is empty");
  const double eta_c = cfg.eta_c.value_or(kDefaultEtaC);
  const double dark_a = cfg.dark_a.value_or(kDefaultDarkA);

  Document doc;
  doc.command = "compare-stages";
  doc.meta = protocol_meta(spec);
  doc.meta.emplace_back("eta_c", number(eta_c));
  doc.meta.emplace_back("dark_a", number(dark_a));
  doc.meta.emplace_back("dark_b", number(cfg.dark_b));
  doc.meta.emplace_back("n_max", integer(cfg.n_max));
  doc.main.name = "ratios";
  doc.main.columns = {"eta_a", "stages", "factor", "factor_ratio", "optimal", "fitted_ratio"};

  std::vector<double> grid;
  if (cfg.fit) grid = cfg.t_grid();

  for (double eta_a : cfg.eta_a_list) {
    const MultiplexedDetectorParams binary{0, eta_a, dark_a, eta_c};
    binary.validate();
    const double base = short_distance_factor(multiplexed_response(binary));
    const int best = optimal_stage_count(eta_a, eta_c, dark_a, cfg.n_max);

    Cell fitted = sentinel("not_fitted");
    if (cfg.fit) {
      const MultiplexedDetectorParams mux{best, eta_a, dark_a, eta_c};
      try {
        const auto fb = fit_power_law(
            scan_key_rate(spec, multiplexed_response(binary), cfg.dark_b, grid, cfg.solver,
                          cfg.threads));
        const auto fm = fit_power_law(scan_key_rate(spec, multiplexed_response(mux), cfg.dark_b,
                                                    grid, cfg.solver, cfg.threads),
                                      fb.window);
        fitted = number(fm.quadratic_prefactor / fb.quadratic_prefactor);
      } catch (const InsufficientDataError&) {
        fitted = sentinel("insecure");
      }
    }

    for (int n = 0; n <= cfg.n_max; ++n) {
      const double f = short_distance_factor(multiplexed_response({n, eta_a, dark_a, eta_c}));
      doc.main.rows.push_back({number(eta_a), integer(n), number(f), number(f / base),
                               boolean(n == best), n == best ? fitted : sentinel("not_fitted")});
    }
  }
  return doc;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Key rates and secure distances for QKD with heralded single-photon sources"};
  app.require_subcommand(1);

  struct Flags {
    std::optional<std::string> protocol;
    std::optional<std::string> source;
    std::optional<int> stages;
    std::optional<double> eta_a, eta_c, dark_a, dark_b, q0, q1, q2;
    std::optional<double> t, t_lo, t_hi, lambda, lambda_min, lambda_max, rel_tol, q_max;
    std::optional<int> points, grid_points, q_points, y_points, n_max;
    std::optional<unsigned> threads;
    std::optional<std::string> format, output, config;
    std::optional<std::vector<double>> eta_a_list;
    bool oracle = false;
    bool fit = false;
  } f;

  auto add_common = [&f](CLI::App* sub) {
    sub->add_option("--protocol", f.protocol, "bb84 or sarg04");
    sub->add_option("--source", f.source, "wcp, binary, multiplexed or custom");
    sub->add_option("--stages", f.stages, "Number of coupler stages N");
    sub->add_option("--eta-a", f.eta_a, "Heralding detector efficiency");
    sub->add_option("--eta-c", f.eta_c, "Per-stage coupler transmission");
    sub->add_option("--dark-a", f.dark_a, "Heralding detector dark-count probability");
    sub->add_option("--dark-b", f.dark_b, "Bob's dark-count probability per detector");
    sub->add_option("--q0", f.q0, "Custom herald response q0");
    sub->add_option("--q1", f.q1, "Custom herald response q1");
    sub->add_option("--q2", f.q2, "Custom herald response q2");
    sub->add_option("--t", f.t, "Single channel transmission");
    sub->add_option("--t-min", f.t_lo, "Lower end of the T range");
    sub->add_option("--t-max", f.t_hi, "Upper end of the T range");
    sub->add_option("--points", f.points, "Number of log-spaced T points");
    sub->add_option("--lambda", f.lambda, "Evaluate at this lambda instead of optimizing");
    sub->add_option("--lambda-min", f.lambda_min, "Lower lambda search bound");
    sub->add_option("--lambda-max", f.lambda_max, "Upper lambda search bound");
    sub->add_option("--grid-points", f.grid_points, "Coarse lambda grid size");
    sub->add_option("--rel-tol", f.rel_tol, "Relative lambda tolerance");
    sub->add_option("--threads", f.threads, "Worker threads for scans");
    sub->add_option("--format", f.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--output", f.output, "Write to this file instead of stdout");
    sub->add_option("--config", f.config, "JSON config file; flags override it");
    sub->add_flag("--oracle", f.oracle, "Cross-check the detector by enumeration");
  };

  std::vector<std::pair<CLI::App*, Document (*)(const RunConfig&)>> commands;
  auto add_cmd = [&](const char* name, const char* help, Document (*fn)(const RunConfig&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub);
    commands.emplace_back(sub, fn);
    return sub;
  };
  add_cmd("threshold", "Print Q^th, xi, I_AE^(2) and p_sift", cmd_threshold);
  add_cmd("detector", "Herald response and figures of merit", cmd_detector);
  add_cmd("keyrate", "Key rate at one transmission", cmd_keyrate);
  add_cmd("scan", "Optimized key rate over a T range", cmd_scan);
  add_cmd("tmin", "Minimum secure transmission, analytic and numerical", cmd_tmin);
  CLI::App* contour = add_cmd("contour", "Renormalized key rate over (Q, y)", cmd_contour);
  contour->add_option("--q-points", f.q_points, "Q grid points on [0, q-max]");
  contour->add_option("--y-points", f.y_points, "y grid points on (0, 1]");
  contour->add_option("--q-max", f.q_max, "Largest Q in the grid (<= 0.25)");
  CLI::App* stages =
      add_cmd("compare-stages", "Multiplexed versus binary key-rate ratios", cmd_compare_stages);
  stages->add_option("--eta-a-list", f.eta_a_list, "Comma-separated heralding efficiencies")
      ->delimiter(',');
  stages->add_option("--n-max", f.n_max, "Largest stage count");
  stages->add_flag("--fit", f.fit, "Also fit numerical scans to K ~ T^2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg;
    if (f.config) load_config_file(*f.config, cfg);
    if (f.protocol) cfg.protocol = *f.protocol;
    if (f.source) cfg.source = parse_source_kind(*f.source);
    if (f.stages) cfg.stages = f.stages;
    if (f.eta_a) cfg.eta_a = f.eta_a;
    if (f.eta_c) cfg.eta_c = f.eta_c;
    if (f.dark_a) cfg.dark_a = f.dark_a;
    if (f.dark_b) cfg.dark_b = *f.dark_b;
    if (f.q0) cfg.q0 = f.q0;
    if (f.q1) cfg.q1 = f.q1;
    if (f.q2) cfg.q2 = f.q2;
    if (f.t) cfg.t = f.t;
    if (f.t_lo) cfg.t_lo = *f.t_lo;
    if (f.t_hi) cfg.t_hi = *f.t_hi;
    if (f.points) cfg.points = *f.points;
    if (f.lambda) cfg.lambda = f.lambda;
    if (f.lambda_min) cfg.solver.bounds.lo = *f.lambda_min;
    if (f.lambda_max) cfg.solver.bounds.hi = *f.lambda_max;
    if (f.grid_points) {
      if (*f.grid_points < 3) throw std::invalid_argument("--grid-points must be >= 3");
      cfg.solver.grid_points = static_cast<std::size_t>(*f.grid_points);
    }
    if (f.rel_tol) cfg.solver.rel_tol = *f.rel_tol;
    if (f.threads) cfg.threads = *f.threads;
    if (f.format) cfg.format = *f.format == "json" ? OutputFormat::json : OutputFormat::csv;
    if (f.output) cfg.output = *f.output;
    if (f.q_points) cfg.q_points = *f.q_points;
    if (f.y_points) cfg.y_points = *f.y_points;
    if (f.q_max) cfg.q_max = *f.q_max;
    if (f.eta_a_list) cfg.eta_a_list = *f.eta_a_list;
    if (f.n_max) cfg.n_max = *f.n_max;
    cfg.oracle = cfg.oracle || f.oracle;
    cfg.fit = cfg.fit || f.fit;
    if (!(cfg.dark_b >= 0.0 && cfg.dark_b < 1.0)) {
      throw std::invalid_argument("--dark-b must lie in [0, 1)");
    }
    cfg.solver.validate();

    Document doc;
    for (const auto& [sub, fn] : commands) {
      if (sub->parsed()) doc = fn(cfg);
    }
    const std::string text =
        cfg.format == OutputFormat::json ? render_json(doc) : render_csv(doc);
    if (cfg.output.empty()) {
      out << text;
    } else {
      std::ofstream file(cfg.output, std::ios::binary);
      if (!file || !(file << text)) {
        throw std::runtime_error("cannot write output file '" + cfg.output + "'");
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace hqkd::cli
