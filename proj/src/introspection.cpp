#include "chomsky/introspection.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace chomsky {

Trace record_trace(SequenceModel<float>& model, TaskId task, const Tokens& input, const BatchOptions& options,
                   Matrix<float>* logits) {
  TaskSample s;
  s.task = task;
  s.input = input;
  s.target = ground_truth(task, input);
  s.length = s.requested_length = static_cast<int>(input.size());
  const EncodedBatch batch = encode_batch(task, {s}, options);

  Trace trace;
  Graph<float> g(false);
  ForwardContext<float> ctx;
  ctx.trace = &trace;
  Var<float> out = model.forward(g, batch.seq, ctx);
  if (logits) *logits = out.value();
  return trace;
}

SymmetricEigen jacobi_eigen(const TraceMatrix& symmetric, double tolerance, int max_sweeps) {
  const Index n = symmetric.rows();
  if (symmetric.cols() != n) throw InvalidInput("jacobi_eigen: matrix must be square");
  TraceMatrix a = 0.5 * (symmetric + symmetric.transpose());
  TraceMatrix v = TraceMatrix::Identity(n, n);
  const double scale = std::max(1.0, a.norm());

  auto off_diagonal = [&] {
    double worst = 0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) worst = std::max(worst, std::abs(a(p, q)));
    return worst;
  };
  for (int sweep = 0; sweep < max_sweeps && off_diagonal() > tolerance * scale; ++sweep) {
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return a(i, i) > a(j, j); });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    out.values(i) = a(order[i], order[i]);
    out.vectors.col(i) = v.col(order[i]);
  }
  return out;
}

Pca pca(const TraceMatrix& points, Index k) {
  const Index n = points.rows(), d = points.cols();
  if (n < 2) throw InvalidInput("pca: need at least two points");
  if (k < 1 || k > std::min(n, d)) throw InvalidInput("pca: k must be in [1, min(n, d)]");
  Pca out;
  out.mean = points.colwise().mean();
  const TraceMatrix centered = points.rowwise() - out.mean;
  const TraceMatrix covariance = (centered.transpose() * centered) / static_cast<double>(n);
  out.total_variance = covariance.trace();

  const SymmetricEigen eig = jacobi_eigen(covariance);
  out.components.resize(k, d);
  out.explained_variance.resize(k);
  for (Index i = 0; i < k; ++i) {
    Eigen::RowVectorXd c = eig.vectors.col(i).transpose();
    Index largest = 0;
    c.cwiseAbs().maxCoeff(&largest);
    if (c(largest) < 0) c = -c;
    out.components.row(i) = c;
    out.explained_variance(i) = std::max(0.0, eig.values(i));
  }
  out.projection = centered * out.components.transpose();
  return out;
}

int cluster_count(const TraceMatrix& points, double radius_fraction) {
  const Index n = points.rows();
  if (n == 0) return 0;
  double diameter = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) diameter = std::max(diameter, (points.row(i) - points.row(j)).norm());
  const double radius = radius_fraction * diameter;

  std::vector<Index> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), Index{0});
  auto root = [&](Index i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  int clusters = static_cast<int>(n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      if ((points.row(i) - points.row(j)).norm() > radius) continue;
      const Index a = root(i), b = root(j);
      if (a != b) {
        parent[a] = b;
        --clusters;
      }
    }
  return clusters;
}

TraceMatrix hidden_states(const Trace& trace) {
  if (trace.steps.empty()) return {};
  const Index h = static_cast<Index>(trace.steps.front().hidden.size());
  TraceMatrix out(static_cast<Index>(trace.steps.size()), h);
  for (std::size_t t = 0; t < trace.steps.size(); ++t)
    out.row(static_cast<Index>(t)) = Eigen::Map<const Eigen::RowVectorXd>(trace.steps[t].hidden.data(), h);
  return out;
}

// ---- CSV bundle ---------------------------------------------------------------

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  return out;
}

void header(std::ostream& out, std::initializer_list<const char*> fixed, const char* prefix, std::size_t count) {
  bool first = true;
  for (const char* f : fixed) {
    out << (first ? "" : ",") << f;
    first = false;
  }
  for (std::size_t i = 0; i < count; ++i) out << ',' << prefix << i;
  out << '\n';
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    rows.push_back(std::move(fields));
  }
  return rows;
}

double number(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw InvalidInput("trace csv: bad number '" + s + "'");
  return v;
}

}  // namespace

void export_trace(const Trace& trace, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::size_t hidden = 0, logits = 0, actions = 0, width = 0;
  for (const auto& s : trace.steps) {
    hidden = std::max(hidden, s.hidden.size());
    logits = std::max(logits, s.logits.size());
    actions = std::max(actions, s.actions.size());
    width = std::max(width, static_cast<std::size_t>(s.memory.cols()));
  }

  {
    auto out = open_out(dir / "states.csv");
    out << "step,token";
    for (std::size_t i = 0; i < hidden; ++i) out << ",h" << i;
    for (std::size_t i = 0; i < logits; ++i) out << ",logit" << i;
    out << '\n';
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
      const auto& s = trace.steps[t];
      out << t << ',' << s.token;
      for (std::size_t i = 0; i < hidden; ++i) out << ',' << s.hidden.at(i);
      for (std::size_t i = 0; i < logits; ++i) {
        out << ',';
        if (!s.logits.empty()) out << s.logits.at(i);
      }
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "actions.csv");
    header(out, {"step"}, "a", actions);
    for (std::size_t t = 0; t < trace.steps.size() && actions > 0; ++t) {
      out << t;
      for (double a : trace.steps[t].actions) out << ',' << a;
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "memory.csv");
    header(out, {"step", "row", "head"}, "c", width);
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
      const auto& s = trace.steps[t];
      for (Index r = 0; r < s.memory.rows(); ++r) {
        out << t << ',' << r << ',';
        if (!s.head.empty()) out << s.head.at(static_cast<std::size_t>(r));
        for (Index c = 0; c < s.memory.cols(); ++c) out << ',' << s.memory(r, c);
        out << '\n';
      }
    }
  }
  if (!trace.layer_activations.empty()) {
    auto out = open_out(dir / "layers.csv");
    header(out, {"layer", "position"}, "x", static_cast<std::size_t>(trace.layer_activations.front().cols()));
    for (std::size_t l = 0; l < trace.layer_activations.size(); ++l) {
      const auto& m = trace.layer_activations[l];
      for (Index p = 0; p < m.rows(); ++p) {
        out << l << ',' << p;
        for (Index c = 0; c < m.cols(); ++c) out << ',' << m(p, c);
        out << '\n';
      }
    }
  }
  nlohmann::ordered_json meta;
  meta["architecture"] = trace.architecture;
  meta["steps"] = trace.steps.size();
  meta["hidden"] = hidden;
  meta["layers"] = trace.layer_activations.size();
  auto out = open_out(dir / "trace.json");
  out << meta.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed in " + dir.string());
}

Trace import_trace(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "trace.json");
  if (!meta_in) throw std::runtime_error("cannot open " + (dir / "trace.json").string());
  const auto meta = nlohmann::json::parse(meta_in);
  Trace trace;
  trace.architecture = meta.at("architecture").get<std::string>();
  const auto hidden = meta.at("hidden").get<std::size_t>();
  trace.steps.resize(meta.at("steps").get<std::size_t>());

  for (const auto& row : read_rows(dir / "states.csv")) {
    auto& s = trace.steps.at(std::stoul(row.at(0)));
    s.token = std::stoi(row.at(1));
    for (std::size_t i = 0; i < hidden; ++i) s.hidden.push_back(number(row.at(2 + i)));
    for (std::size_t i = 2 + hidden; i < row.size(); ++i)
      if (!row[i].empty()) s.logits.push_back(number(row[i]));
  }
  for (const auto& row : read_rows(dir / "actions.csv")) {
    auto& s = trace.steps.at(std::stoul(row.at(0)));
    for (std::size_t i = 1; i < row.size(); ++i) s.actions.push_back(number(row[i]));
  }
  std::vector<std::vector<std::vector<double>>> memory(trace.steps.size());
  for (const auto& row : read_rows(dir / "memory.csv")) {
    const std::size_t t = std::stoul(row.at(0));
    auto& s = trace.steps.at(t);
    if (!row.at(2).empty()) s.head.push_back(number(row[2]));
    std::vector<double> cells;
    for (std::size_t i = 3; i < row.size(); ++i) cells.push_back(number(row[i]));
    memory[t].push_back(std::move(cells));
  }
  for (std::size_t t = 0; t < memory.size(); ++t) {
    const auto& rows = memory[t];
    if (rows.empty()) continue;
    auto& m = trace.steps[t].memory;
    m.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  const auto layers = meta.at("layers").get<std::size_t>();
  if (layers > 0) {
    std::vector<std::vector<std::vector<double>>> acts(layers);
    for (const auto& row : read_rows(dir / "layers.csv")) {
      std::vector<double> v;
      for (std::size_t i = 2; i < row.size(); ++i) v.push_back(number(row[i]));
      acts.at(std::stoul(row.at(0))).push_back(std::move(v));
    }
    for (const auto& rows : acts) {
      TraceMatrix m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
      for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
      trace.layer_activations.push_back(std::move(m));
    }
  }
  return trace;
}

}  // namespace chomsky
