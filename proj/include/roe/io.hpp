#pragma once

// File formats: annotation CSV (+ optional JSON sidecar), matrix/solution
// JSON, trace and report CSV. Every writer takes the resolved run
// configuration and embeds it: a "config" field in JSON, a leading
// "# config: {...}" line in CSV (comment lines are skipped by the loader).

#include "roe/baselines.hpp"
#include "roe/comparison_graph.hpp"
#include "roe/datagen.hpp"
#include "roe/solver.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace roe {

using Json = nlohmann::ordered_json;

// ------------------------------------------------------------ config JSON

inline Json to_json(const SolverConfig& c) {
  return Json{{"lambda", c.lambda},
              {"p", c.p},
              {"margin", c.margin},
              {"L0", c.L0},
              {"eta", c.eta},
              {"max_iter", c.max_iter},
              {"tol_obj", c.tol_obj},
              {"tol_obj_window", c.tol_obj_window},
              {"tol_iter", c.tol_iter},
              {"rank_mode", to_string(c.rank_mode)},
              {"rank_period", c.rank_period},
              {"seed", c.seed},
              {"max_backtracks", c.max_backtracks},
              {"lambda_start", c.lambda_start},
              {"lambda_factor", c.lambda_factor},
              {"stage_max_iter", c.stage_max_iter},
              {"rank_reduction_budget", c.rank_reduction_budget}};
}

/// Overrides fields of `c` present in `j`; unknown keys are rejected.
inline void apply_json(SolverConfig& c, const Json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "lambda") c.lambda = value.get<double>();
    else if (key == "p") c.p = value.get<Index>();
    else if (key == "margin") c.margin = value.get<double>();
    else if (key == "L0") c.L0 = value.get<double>();
    else if (key == "eta") c.eta = value.get<double>();
    else if (key == "max_iter") c.max_iter = value.get<int>();
    else if (key == "tol_obj") c.tol_obj = value.get<double>();
    else if (key == "tol_obj_window") c.tol_obj_window = value.get<int>();
    else if (key == "tol_iter") c.tol_iter = value.get<double>();
    else if (key == "rank_mode") c.rank_mode = parse_rank_mode(value.get<std::string>());
    else if (key == "rank_period") c.rank_period = value.get<int>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "max_backtracks") c.max_backtracks = value.get<int>();
    else if (key == "lambda_start") c.lambda_start = value.get<double>();
    else if (key == "lambda_factor") c.lambda_factor = value.get<double>();
    else if (key == "stage_max_iter") c.stage_max_iter = value.get<int>();
    else if (key == "rank_reduction_budget") c.rank_reduction_budget = value.get<double>();
    else throw std::invalid_argument("unknown solver config key '" + key + "'");
  }
}

inline Json to_json(const SyntheticSpec& s) {
  return Json{{"n", s.n},
              {"dim", s.dim},
              {"variance", s.variance},
              {"train_size", s.train_size},
              {"validation_size", s.validation_size},
              {"s_min", s.s_min},
              {"s_max", s.s_max},
              {"outlier_ratio", s.outlier_ratio},
              {"flip_mode", to_string(s.flip_mode)},
              {"noise_sigma", s.noise_sigma},
              {"seed", s.seed}};
}

inline Json to_json(const BaselineSpec& s) {
  return Json{{"method", to_string(s.method)}, {"p", s.p},
              {"hinge_margin", s.hinge_margin}, {"mu0", s.mu0},
              {"trace_weight", s.trace_weight}, {"init_scale", s.init_scale},
              {"max_iter", s.max_iter}, {"step0", s.step0},
              {"armijo", s.armijo}, {"tol", s.tol},
              {"tol_window", s.tol_window}, {"seed", s.seed}};
}

inline Json to_json(const Summary& s) {
  return Json{{"min", s.min}, {"median", s.median}, {"max", s.max},
              {"std", s.stddev}, {"mean", s.mean}, {"count", s.count}};
}

// ------------------------------------------------------------ annotation CSV

enum class CsvLayout { automatic, triple, quadruple };

struct LoadedAnnotations {
  std::vector<Annotation> annotations;
  std::optional<Index> n;  // from the JSON sidecar, if any
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

inline bool is_header(const std::vector<std::string_view>& fields) {
  for (auto f : fields) {
    if (!f.empty() && (std::isalpha(static_cast<unsigned char>(f.front())) || f.front() == '_')) return true;
  }
  return false;
}

}  // namespace detail

/// `path` with its extension replaced by .json.
inline std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p.replace_extension(".json");
  return p;
}

/// Parses annotation lines from a stream.
///
/// Columns are either named by a header row (any of i, j, k, l, count) or
/// inferred from the field count: 3 -> i,j,k; 4 -> i,j,l,k; 5 -> i,j,l,k,count.
/// A triple with a count needs a header row or `layout = triple`, where 4
/// fields read as i,j,k,count. Errors name the 1-based line number.
inline std::vector<Annotation> parse_annotations(std::istream& in, CsvLayout layout = CsvLayout::automatic) {
  std::vector<Annotation> out;
  std::optional<std::vector<std::string>> header;
  std::string raw;
  std::size_t line_no = 0;
  bool seen_data = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = detail::split_fields(line);
    if (!seen_data && !header && detail::is_header(fields)) {
      header.emplace();
      for (auto f : fields) {
        std::string name(f);
        if (name != "i" && name != "j" && name != "k" && name != "l" && name != "count") {
          throw InputError("line " + std::to_string(line_no) + ": unknown column '" + name + "'", line_no);
        }
        header->push_back(std::move(name));
      }
      for (const char* required : {"i", "j", "k"}) {
        if (std::find(header->begin(), header->end(), required) == header->end()) {
          throw InputError("line " + std::to_string(line_no) + ": header lacks column '" + required + "'", line_no);
        }
      }
      continue;
    }
    seen_data = true;
    std::vector<long long> values(fields.size());
    for (std::size_t f = 0; f < fields.size(); ++f) {
      if (!detail::parse_number(fields[f], values[f])) {
        throw InputError("line " + std::to_string(line_no) + ": field " + std::to_string(f + 1) + " ('" +
                             std::string(fields[f]) + "') is not an integer",
                         line_no);
      }
    }
    Index i = -1, j = -1, l = -1, k = -1;
    long long count = 1;
    if (header) {
      if (header->size() != values.size()) {
        throw InputError("line " + std::to_string(line_no) + ": expected " + std::to_string(header->size()) +
                             " fields, got " + std::to_string(values.size()),
                         line_no);
      }
      for (std::size_t f = 0; f < values.size(); ++f) {
        const auto& name = (*header)[f];
        if (name == "i") i = values[f];
        else if (name == "j") j = values[f];
        else if (name == "k") k = values[f];
        else if (name == "l") l = values[f];
        else count = values[f];
      }
      if (std::find(header->begin(), header->end(), "l") == header->end()) l = i;
    } else {
      const bool triple_layout =
          layout == CsvLayout::triple || (layout == CsvLayout::automatic && values.size() == 3);
      if (triple_layout) {
        if (values.size() != 3 && values.size() != 4) {
          throw InputError("line " + std::to_string(line_no) + ": triple lines need 3 or 4 fields", line_no);
        }
        i = values[0], j = values[1], l = values[0], k = values[2];
        if (values.size() == 4) count = values[3];
      } else {
        if (values.size() != 4 && values.size() != 5) {
          throw InputError("line " + std::to_string(line_no) + ": expected 3, 4 or 5 fields, got " +
                               std::to_string(values.size()),
                           line_no);
        }
        i = values[0], j = values[1], l = values[2], k = values[3];
        if (values.size() == 5) count = values[4];
      }
    }
    if (count < 0) throw InputError("line " + std::to_string(line_no) + ": negative count", line_no);
    Annotation a{{i, j, l, k}, static_cast<std::uint64_t>(count), {}};
    try {
      detail::validate(a.tuple, std::nullopt, line_no);
    } catch (const InputError& e) {
      throw InputError("line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline LoadedAnnotations load_annotations(const std::filesystem::path& path, CsvLayout layout = CsvLayout::automatic) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  LoadedAnnotations out;
  try {
    out.annotations = parse_annotations(in, layout);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what(), e.record());
  }
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    std::ifstream s(side);
    const Json j = Json::parse(s);
    if (j.contains("n")) out.n = j.at("n").get<Index>();
  }
  return out;
}

/// Loads, validates against the declared n (if any) and aggregates.
inline ComparisonGraph load_graph(const std::filesystem::path& path, double margin = 1.0,
                                  CsvLayout layout = CsvLayout::automatic) {
  auto loaded = load_annotations(path, layout);
  return ingest(loaded.annotations, loaded.n, margin);
}

/// Comparison list of a CSV file (counts ignored), e.g. a test split.
inline std::vector<Quadruple> load_comparisons(const std::filesystem::path& path,
                                               CsvLayout layout = CsvLayout::automatic) {
  std::vector<Quadruple> out;
  for (const auto& a : load_annotations(path, layout).annotations) out.push_back(a.tuple);
  return out;
}

// ------------------------------------------------------------ writers

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  return out;
}

inline void write_config_line(std::ostream& out, const Json& config) { out << "# config: " << config.dump() << '\n'; }

}  // namespace detail

inline void write_json(const std::filesystem::path& path, const Json& j) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Row-major nested arrays.
inline Json matrix_to_json(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  Json rows = Json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const Json& j) {
  const auto rows = static_cast<Index>(j.size());
  const auto cols = rows ? static_cast<Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    if (static_cast<Index>(j.at(r).size()) != cols) throw std::invalid_argument("ragged matrix in JSON");
    for (Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

inline Json vector_to_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline void write_matrix_csv(const std::filesystem::path& path, const Eigen::Ref<const Eigen::MatrixXd>& m,
                             const Json& config) {
  auto out = detail::open_out(path);
  detail::write_config_line(out, config);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
    out << '\n';
  }
}

/// Gram or embedding matrix with its n/p metadata.
inline void write_embedding_json(const std::filesystem::path& path, const Embedding& x, const Json& config) {
  write_json(path, Json{{"config", config}, {"n", x.size()}, {"p", x.dim()}, {"x", matrix_to_json(x.x)}});
}

inline Json rank_step_to_json(const RankStepReport& r) {
  return Json{{"rank_in", r.rank_in}, {"rank_reduced", r.rank_reduced}, {"reduction_loops", r.reduction_loops},
              {"reduction_skipped", r.reduction_skipped}, {"rounded", r.rounded}, {"rank_out", r.rank_out}};
}

inline Json solution_to_json(const RoeSolution& sol, const ComparisonGraph& graph, const Json& config) {
  Json outliers = Json::array();
  for (auto c : sol.outliers) {
    const auto& q = graph.edge(c).tuple;
    outliers.push_back(Json{{"edge", c}, {"tuple", {q.i, q.j, q.l, q.k}}, {"weight", graph.edge(c).weight},
                            {"gamma", sol.gamma[static_cast<Index>(c)]}});
  }
  Json trace = Json::array();
  for (const auto& t : sol.trace) trace.push_back(t.objective);
  Json j{{"config", config},
         {"n", sol.g.rows()},
         {"p", sol.x.dim()},
         {"lambda", sol.lambda},
         {"objective", sol.objective},
         {"iterations", sol.iterations},
         {"rank", sol.rank},
         {"converged", sol.converged},
         {"diverged", sol.diverged},
         {"diagnostic", sol.diagnostic},
         {"rank_bound_applicable", sol.rank_bound_applicable},
         {"support_threshold", sol.support_threshold},
         {"outliers", outliers},
         {"G", matrix_to_json(sol.g)},
         {"X", matrix_to_json(sol.x.x)},
         {"gamma", vector_to_json(sol.gamma)},
         {"objective_trace", trace}};
  if (sol.final_rank_step) j["final_rank_step"] = rank_step_to_json(*sol.final_rank_step);
  return j;
}

inline void write_trace_csv(const std::filesystem::path& path, const RoeSolution& sol, const Json& config) {
  auto out = detail::open_out(path);
  detail::write_config_line(out, config);
  out << "iteration,lambda,objective,lipschitz,backtracks,restarted,rank,rank_in,rank_reduced,reduction_loops,"
         "reduction_skipped,rounded\n";
  for (const auto& t : sol.trace) {
    out << t.iteration << ',' << t.lambda << ',' << t.objective << ',' << t.lipschitz << ',' << t.backtracks << ','
        << (t.restarted ? 1 : 0) << ',' << t.rank;
    if (t.rank_step) {
      const auto& r = *t.rank_step;
      out << ',' << r.rank_in << ',' << r.rank_reduced << ',' << r.reduction_loops << ','
          << (r.reduction_skipped ? 1 : 0) << ',' << (r.rounded ? 1 : 0);
    } else {
      out << ",,,,,";
    }
    out << '\n';
  }
}

/// Annotation CSV with an explicit header; `count` column always present.
inline void write_annotations_csv(const std::filesystem::path& path, const std::vector<Annotation>& annotations,
                                  const Json& config) {
  auto out = detail::open_out(path);
  detail::write_config_line(out, config);
  const bool triples = std::all_of(annotations.begin(), annotations.end(),
                                   [](const Annotation& a) { return a.tuple.shares_anchor(); });
  out << (triples ? "i,j,k,count\n" : "i,j,l,k,count\n");
  for (const auto& a : annotations) {
    const auto& q = a.tuple;
    if (triples) {
      out << q.i << ',' << q.j << ',' << q.k << ',' << a.count << '\n';
    } else {
      out << q.i << ',' << q.j << ',' << q.l << ',' << q.k << ',' << a.count << '\n';
    }
  }
}

inline void write_triplets_csv(const std::filesystem::path& path, const std::vector<Triple>& triplets,
                               const Json& config) {
  std::vector<Annotation> a;
  a.reserve(triplets.size());
  for (const auto& t : triplets) a.push_back(Annotation::triple(t.i, t.j, t.k));
  write_annotations_csv(path, a, config);
}

// ------------------------------------------------------------ reports

/// Per-method error lists over trials plus optional detection scores.
struct EvalReport {
  struct Row {
    std::string method;
    std::string setting;  // e.g. "q=0.25" or "lambda=1"
    std::vector<double> errors;
  };
  std::vector<Row> rows;
  std::optional<DetectionScore> detection;
};

inline Json to_json(const EvalReport& r, const Json& config) {
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    rows.push_back(Json{{"method", row.method}, {"setting", row.setting}, {"errors", row.errors},
                        {"summary", to_json(summarize(row.errors))}});
  }
  Json j{{"config", config}, {"rows", rows}};
  if (r.detection) {
    j["detection"] = Json{{"precision", r.detection->precision}, {"recall", r.detection->recall},
                          {"true_positives", r.detection->true_positives}, {"predicted", r.detection->predicted},
                          {"actual", r.detection->actual}};
  }
  return j;
}

/// min / median / max / std table, one row per (method, setting).
inline void write_report_csv(const std::filesystem::path& path, const EvalReport& r, const Json& config) {
  auto out = detail::open_out(path);
  detail::write_config_line(out, config);
  out << "method,setting,min,median,max,std,mean,trials\n";
  for (const auto& row : r.rows) {
    const auto s = summarize(row.errors);
    out << row.method << ',' << row.setting << ',' << s.min << ',' << s.median << ',' << s.max << ',' << s.stddev
        << ',' << s.mean << ',' << s.count << '\n';
  }
}

}  // namespace roe
