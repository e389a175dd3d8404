#include "mmm/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "mmm/errors.hpp"

namespace mmm {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

void check_spd(const Eigen::MatrixXd& m, const std::string& what) {
  if (m.rows() != m.cols()) throw ValidationError(what + " must be square");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    throw ValidationError(what + " must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw ValidationError(what + " must be positive definite");
  }
}

}  // namespace

void CategoricalDataset::validate() const {
  if (n() < 1 || p() < 1) throw ValidationError("dataset must have n >= 1 and p >= 1");
  if (int(levels.size()) != p() || int(names.size()) != p()) {
    throw ValidationError("levels/names size must equal the number of variables");
  }
  if (!var_epoch.empty() && int(var_epoch.size()) != p()) {
    throw ValidationError("var_epoch size must equal the number of variables");
  }
  for (int j = 0; j < p(); ++j) {
    if (levels[j] < 2) {
      throw ValidationError("variable '" + names[j] + "' must have at least 2 levels");
    }
    for (int i = 0; i < n(); ++i) {
      const int c = codes(i, j);
      if (c < 0 || c >= levels[j]) {
        throw ValidationError("code out of range at row " + std::to_string(i + 1) +
                              ", column '" + names[j] + "'");
      }
    }
  }
}

GroupPartition GroupPartition::from_assignment(const std::vector<int>& assignment_zero_based,
                                               int num_groups) {
  GroupPartition part;
  part.assignment = assignment_zero_based;
  part.num_groups = num_groups;
  part.group_sizes.assign(std::size_t(num_groups), 0);
  for (int g : assignment_zero_based) {
    if (g < 0 || g >= num_groups) {
      throw ValidationError("group index " + std::to_string(g + 1) + " outside 1.." +
                            std::to_string(num_groups));
    }
    ++part.group_sizes[std::size_t(g)];
  }
  return part;
}

std::vector<int> GroupPartition::variables_in_group(int g) const {
  std::vector<int> vars;
  for (int j = 0; j < int(assignment.size()); ++j) {
    if (assignment[std::size_t(j)] == g) vars.push_back(j);
  }
  return vars;
}

void validate_partition(const CategoricalDataset& dataset, const GroupPartition& partition) {
  if (int(partition.assignment.size()) != dataset.p()) {
    throw ValidationError("partition length " + std::to_string(partition.assignment.size()) +
                          " does not match variable count " + std::to_string(dataset.p()));
  }
  if (partition.num_groups < 1) throw ValidationError("partition must have at least one group");
  std::vector<int> counts(std::size_t(partition.num_groups), 0);
  for (int g : partition.assignment) {
    if (g < 0 || g >= partition.num_groups) {
      throw ValidationError("group index out of range in partition");
    }
    ++counts[std::size_t(g)];
  }
  for (int g = 0; g < partition.num_groups; ++g) {
    if (counts[std::size_t(g)] == 0) {
      throw ValidationError("group " + std::to_string(g + 1) + " has no variables");
    }
  }
}

void Hyperparams::validate(const CategoricalDataset& dataset,
                           const GroupPartition& partition) const {
  const int G = partition.num_groups;
  if (int(alpha.size()) != dataset.p()) {
    throw ValidationError("alpha must have one vector per variable");
  }
  for (int j = 0; j < dataset.p(); ++j) {
    if (alpha[std::size_t(j)].size() != dataset.levels[std::size_t(j)]) {
      throw ValidationError("alpha length mismatch for variable " + dataset.names[std::size_t(j)]);
    }
    if ((alpha[std::size_t(j)].array() <= 0.0).any()) {
      throw ValidationError("alpha entries must be positive");
    }
  }
  if (mu0.size() != G) throw ValidationError("mu0 must have length G");
  check_spd(sigma0, "Sigma0");
  check_spd(psi0, "Psi0");
  if (sigma0.rows() != G || psi0.rows() != G) {
    throw ValidationError("Sigma0/Psi0 must be G x G");
  }
  if (!(nu0 > G - 1)) throw ValidationError("nu0 must exceed G - 1");
}

Hyperparams default_hyperparams(const CategoricalDataset& dataset,
                                const GroupPartition& partition) {
  const int G = partition.num_groups;
  Hyperparams hyper;
  hyper.alpha.reserve(std::size_t(dataset.p()));
  for (int j = 0; j < dataset.p(); ++j) {
    const int d = dataset.levels[std::size_t(j)];
    hyper.alpha.push_back(Eigen::VectorXd::Constant(d, 1.0 / d));
  }
  hyper.mu0 = Eigen::VectorXd::Zero(G);
  hyper.sigma0 = Eigen::MatrixXd::Identity(G, G);
  hyper.nu0 = double(G);
  hyper.psi0 = Eigen::MatrixXd::Identity(G, G);
  return hyper;
}

std::vector<int> SpaceTimeCovariates::subjects_in_epoch(int t) const {
  std::vector<int> subjects;
  for (int i = 0; i < int(time_id.size()); ++i) {
    if (time_id[std::size_t(i)] == t) subjects.push_back(i);
  }
  return subjects;
}

void SpaceTimeCovariates::validate(int n) const {
  if (int(time_id.size()) != n || coords.rows() != n) {
    throw ValidationError("covariates must cover every subject");
  }
  std::vector<int> counts(std::size_t(num_epochs()), 0);
  for (int t : time_id) {
    if (t < 0 || t >= num_epochs()) throw ValidationError("epoch index out of range");
    ++counts[std::size_t(t)];
  }
  for (int t = 0; t < num_epochs(); ++t) {
    if (counts[std::size_t(t)] == 0) {
      throw ValidationError("epoch " + std::to_string(epoch_labels[std::size_t(t)]) +
                            " has no subjects");
    }
  }
  if (!coords.allFinite()) throw ValidationError("coordinates must be finite");
}

DatasetSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open schema file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("schema " + path.string() + ": " + e.what());
  }
  DatasetSchema schema;
  if (!doc.contains("variables") || !doc["variables"].is_array()) {
    throw ParseError("schema " + path.string() + ": missing 'variables' array");
  }
  for (const auto& v : doc["variables"]) {
    VariableSpec spec;
    spec.name = v.at("name").get<std::string>();
    spec.levels = v.at("levels").get<int>();
    spec.group = v.at("group").get<int>();
    spec.missing_category = v.value("missing", false);
    spec.epoch = v.value("epoch", -1);
    schema.variables.push_back(spec);
  }
  schema.time_column = doc.value("time_column", "");
  schema.x_column = doc.value("x_column", "");
  schema.y_column = doc.value("y_column", "");
  return schema;
}

void save_schema(const DatasetSchema& schema, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["variables"] = nlohmann::json::array();
  for (const auto& v : schema.variables) {
    nlohmann::json entry;
    entry["name"] = v.name;
    entry["levels"] = v.levels;
    entry["group"] = v.group;
    if (v.missing_category) entry["missing"] = true;
    if (v.epoch >= 0) entry["epoch"] = v.epoch;
    doc["variables"].push_back(entry);
  }
  if (!schema.time_column.empty()) doc["time_column"] = schema.time_column;
  if (!schema.x_column.empty()) doc["x_column"] = schema.x_column;
  if (!schema.y_column.empty()) doc["y_column"] = schema.y_column;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write schema file " + path.string());
  out << doc.dump(2) << "\n";
}

LoadedData load_dataset(const std::filesystem::path& csv_path, const DatasetSchema& schema) {
  std::ifstream in(csv_path);
  if (!in) throw ParseError("cannot open dataset file " + csv_path.string());

  std::string header;
  if (!std::getline(in, header)) throw ParseError(csv_path.string() + ": empty file");
  const std::vector<std::string> columns = split_csv_line(header);
  std::map<std::string, int> column_index;
  for (int c = 0; c < int(columns.size()); ++c) {
    column_index[trim(columns[std::size_t(c)])] = c;
  }

  std::vector<int> var_col;
  for (const auto& v : schema.variables) {
    auto it = column_index.find(v.name);
    if (it == column_index.end()) {
      throw ParseError(csv_path.string() + ": missing column '" + v.name + "'");
    }
    var_col.push_back(it->second);
    if (v.levels < 2) {
      throw ValidationError("variable '" + v.name + "' declares fewer than 2 levels");
    }
  }
  int time_col = -1, x_col = -1, y_col = -1;
  const bool want_cov = schema.has_covariates();
  if (want_cov) {
    auto need = [&](const std::string& nm) {
      auto it = column_index.find(nm);
      if (it == column_index.end()) {
        throw ParseError(csv_path.string() + ": missing covariate column '" + nm + "'");
      }
      return it->second;
    };
    if (schema.time_column.empty() || schema.x_column.empty() || schema.y_column.empty()) {
      throw ValidationError("schema covariates require time, x and y columns");
    }
    time_col = need(schema.time_column);
    x_col = need(schema.x_column);
    y_col = need(schema.y_column);
  }

  const int p = int(schema.variables.size());
  std::vector<int> codes_flat;
  std::vector<int> raw_time;
  std::vector<double> raw_x, raw_y;
  std::string line;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (int(cells.size()) < int(columns.size())) {
      throw ParseError(csv_path.string() + ": row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(columns.size()));
    }
    for (int j = 0; j < p; ++j) {
      const VariableSpec& v = schema.variables[std::size_t(j)];
      const std::string cell = trim(cells[std::size_t(var_col[std::size_t(j)])]);
      int code;
      if (cell.empty()) {
        if (!v.missing_category) {
          throw ValidationError(csv_path.string() + ": blank cell at row " + std::to_string(row) +
                                ", column '" + v.name + "' but missing category is not enabled");
        }
        code = v.levels;  // last declared level is the missing category
      } else {
        try {
          std::size_t pos = 0;
          code = std::stoi(cell, &pos);
          if (pos != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
          throw ParseError(csv_path.string() + ": non-integer cell '" + cell + "' at row " +
                           std::to_string(row) + ", column '" + v.name + "'");
        }
        if (code < 1 || code > v.levels) {
          throw ValidationError(csv_path.string() + ": code " + std::to_string(code) +
                                " outside [1," + std::to_string(v.levels) + "] at row " +
                                std::to_string(row) + ", column '" + v.name + "'");
        }
      }
      codes_flat.push_back(code - 1);
    }
    if (want_cov) {
      auto numeric = [&](int col, const char* what) {
        const std::string cell = trim(cells[std::size_t(col)]);
        try {
          return std::stod(cell);
        } catch (const std::exception&) {
          throw ParseError(csv_path.string() + ": non-numeric " + std::string(what) +
                           " at row " + std::to_string(row));
        }
      };
      raw_time.push_back(int(numeric(time_col, "time")));
      raw_x.push_back(numeric(x_col, "x coordinate"));
      raw_y.push_back(numeric(y_col, "y coordinate"));
    }
  }

  const int n = int(codes_flat.size()) / std::max(p, 1);
  if (n == 0) throw ValidationError(csv_path.string() + ": no subject rows");

  LoadedData loaded;
  loaded.dataset.codes.resize(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) {
      loaded.dataset.codes(i, j) = codes_flat[std::size_t(i) * std::size_t(p) + std::size_t(j)];
    }
  }
  int max_group = 0;
  std::vector<int> assignment;
  bool any_epoch = false;
  for (const auto& v : schema.variables) {
    loaded.dataset.levels.push_back(v.levels);
    loaded.dataset.names.push_back(v.name);
    assignment.push_back(v.group - 1);
    max_group = std::max(max_group, v.group);
    if (v.epoch >= 0) any_epoch = true;
  }
  if (any_epoch) {
    for (const auto& v : schema.variables) loaded.dataset.var_epoch.push_back(v.epoch);
  }
  loaded.dataset.validate();
  loaded.partition = GroupPartition::from_assignment(assignment, max_group);
  validate_partition(loaded.dataset, loaded.partition);

  if (want_cov) {
    SpaceTimeCovariates cov;
    std::vector<int> labels = raw_time;
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    cov.epoch_labels = labels;
    cov.time_id.reserve(raw_time.size());
    for (int t : raw_time) {
      cov.time_id.push_back(
          int(std::lower_bound(labels.begin(), labels.end(), t) - labels.begin()));
    }
    cov.coords.resize(n, 2);
    for (int i = 0; i < n; ++i) {
      cov.coords(i, 0) = raw_x[std::size_t(i)];
      cov.coords(i, 1) = raw_y[std::size_t(i)];
    }
    cov.validate(n);
    loaded.covariates = std::move(cov);
  }
  return loaded;
}

void save_dataset(const CategoricalDataset& dataset,
                  const std::optional<SpaceTimeCovariates>& covariates,
                  const DatasetSchema& schema, const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw ParseError("cannot write dataset file " + csv_path.string());
  for (int j = 0; j < dataset.p(); ++j) {
    if (j) out << ',';
    out << dataset.names[std::size_t(j)];
  }
  if (covariates) {
    out << ',' << schema.time_column << ',' << schema.x_column << ',' << schema.y_column;
  }
  out << '\n';
  for (int i = 0; i < dataset.n(); ++i) {
    for (int j = 0; j < dataset.p(); ++j) {
      if (j) out << ',';
      out << dataset.codes(i, j) + 1;
    }
    if (covariates) {
      out << ',' << covariates->epoch_labels[std::size_t(covariates->time_id[std::size_t(i)])]
          << ',' << covariates->coords(i, 0) << ',' << covariates->coords(i, 1);
    }
    out << '\n';
  }
}

std::string fnv1a_hex(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 0xCBF29CE484222325ull;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001B3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return std::string(buf);
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file for digest: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  return fnv1a_hex(bytes.data(), bytes.size());
}

std::string dataset_digest(const CategoricalDataset& dataset) {
  std::ostringstream ss;
  for (int j = 0; j < dataset.p(); ++j) {
    ss << dataset.names[std::size_t(j)] << ':' << dataset.levels[std::size_t(j)] << ';';
  }
  ss << '\n';
  for (int i = 0; i < dataset.n(); ++i) {
    for (int j = 0; j < dataset.p(); ++j) ss << dataset.codes(i, j) << ',';
    ss << '\n';
  }
  const std::string bytes = ss.str();
  return fnv1a_hex(bytes.data(), bytes.size());
}

}  // namespace mmm
