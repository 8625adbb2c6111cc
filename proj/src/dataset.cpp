#include "deminf/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "deminf/error.hpp"

namespace deminf {
namespace {

using json = nlohmann::json;

Matrix parse_matrix(const json& j, const char* field, std::size_t line) {
  const std::string where = " at line " + std::to_string(line);
  if (!j.is_array()) throw ParseError(std::string("'") + field + "' must be an array" + where);
  const std::size_t rows = j.size();
  std::size_t cols = 0;
  std::vector<double> data;
  for (std::size_t r = 0; r < rows; ++r) {
    const json& row = j[r];
    if (!row.is_array()) throw ParseError(std::string("'") + field + "' rows must be arrays" + where);
    if (r == 0) {
      cols = row.size();
      data.reserve(rows * cols);
    } else if (row.size() != cols) {
      throw ParseError("ragged trajectory at line " + std::to_string(line) + ": '" + field +
                       "' row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                       " entries, expected " + std::to_string(cols));
    }
    for (const json& v : row) {
      if (!v.is_number()) throw ParseError(std::string("non-numeric entry in '") + field + "'" + where);
      data.push_back(v.get<double>());
    }
  }
  return Matrix(rows, cols, std::move(data));
}

bool all_finite(const Matrix& m) {
  for (double v : m.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

json matrix_to_json(const Matrix& m) {
  json out = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    out.push_back(json(std::vector<double>(row.begin(), row.end())));
  }
  return out;
}

}  // namespace

DemoDataset::DemoDataset(std::vector<Trajectory> trajectories) : trajs_(std::move(trajectories)) {
  std::unordered_set<std::string> ids;
  std::size_t row = 0;
  for (std::size_t i = 0; i < trajs_.size(); ++i) {
    const Trajectory& tr = trajs_[i];
    if (tr.states.rows() == 0) throw ParseError("trajectory '" + tr.id + "' is empty");
    if (tr.states.rows() != tr.actions.rows()) {
      throw ParseError("ragged trajectory '" + tr.id + "': " + std::to_string(tr.states.rows()) +
                       " states vs " + std::to_string(tr.actions.rows()) + " actions");
    }
    if (!all_finite(tr.states) || !all_finite(tr.actions) ||
        (tr.quality && !std::isfinite(*tr.quality))) {
      throw ParseError("trajectory '" + tr.id + "' contains NaN or Inf");
    }
    if (i == 0) {
      state_dim_ = tr.states.cols();
      action_dim_ = tr.actions.cols();
    } else if (tr.states.cols() != state_dim_ || tr.actions.cols() != action_dim_) {
      throw ParseError("trajectory '" + tr.id + "' has inconsistent state/action dimension");
    }
    if (!ids.insert(tr.id).second) throw ParseError("duplicate trajectory id '" + tr.id + "'");
    offsets_.push_back(row);
    for (std::size_t t = 0; t < tr.length(); ++t) index_.push_back({i, t});
    row += tr.length();
  }
}

std::size_t DemoDataset::row_of(std::size_t traj, std::size_t t) const {
  if (traj >= trajs_.size() || t >= trajs_[traj].length()) {
    throw std::out_of_range("row_of: step out of range");
  }
  return offsets_[traj] + t;
}

DemoDataset DemoDataset::subset(std::span<const std::size_t> traj_indices) const {
  std::vector<Trajectory> out;
  out.reserve(traj_indices.size());
  for (std::size_t i : traj_indices) out.push_back(trajs_.at(i));
  return DemoDataset(std::move(out));
}

DemoDataset parse_jsonl(const std::string& text) {
  std::vector<Trajectory> trajs;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("invalid JSON at line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("states") || !j.contains("actions")) {
      throw ParseError("line " + std::to_string(line_no) + " must be an object with id, states, actions");
    }
    for (const auto& [key, _] : j.items()) {
      if (key != "id" && key != "states" && key != "actions" && key != "quality") {
        throw ParseError("unknown field '" + key + "' at line " + std::to_string(line_no));
      }
    }
    Trajectory tr;
    if (!j["id"].is_string()) throw ParseError("'id' must be a string at line " + std::to_string(line_no));
    tr.id = j["id"].get<std::string>();
    tr.states = parse_matrix(j["states"], "states", line_no);
    tr.actions = parse_matrix(j["actions"], "actions", line_no);
    if (tr.states.rows() != tr.actions.rows()) {
      throw ParseError("ragged trajectory at line " + std::to_string(line_no) + ": " +
                       std::to_string(tr.states.rows()) + " states vs " +
                       std::to_string(tr.actions.rows()) + " actions");
    }
    if (j.contains("quality") && !j["quality"].is_null()) {
      if (!j["quality"].is_number()) {
        throw ParseError("'quality' must be a number at line " + std::to_string(line_no));
      }
      tr.quality = j["quality"].get<double>();
    }
    if (!all_finite(tr.states) || !all_finite(tr.actions)) {
      throw ParseError("NaN or Inf at line " + std::to_string(line_no));
    }
    if (!ids.insert(tr.id).second) {
      throw ParseError("duplicate trajectory id '" + tr.id + "' at line " + std::to_string(line_no));
    }
    trajs.push_back(std::move(tr));
  }
  return DemoDataset(std::move(trajs));
}

DemoDataset load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_jsonl(buf.str());
}

std::string to_jsonl(const DemoDataset& dataset) {
  std::string out;
  for (const Trajectory& tr : dataset.trajectories()) {
    nlohmann::ordered_json j;
    j["id"] = tr.id;
    j["states"] = matrix_to_json(tr.states);
    j["actions"] = matrix_to_json(tr.actions);
    if (tr.quality) j["quality"] = *tr.quality;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_jsonl(const DemoDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_jsonl(dataset);
}

Matrix chunk_actions(const Trajectory& traj, std::size_t chunk) {
  if (chunk == 0) throw std::invalid_argument("chunk_actions: chunk must be >= 1");
  const std::size_t T = traj.actions.rows();
  const std::size_t d = traj.actions.cols();
  Matrix out(T, chunk * d);
  for (std::size_t t = 0; t < T; ++t) {
    auto dst = out.row(t);
    for (std::size_t c = 0; c < chunk; ++c) {
      const auto src = traj.actions.row(std::min(t + c, T - 1));
      std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(c * d));
    }
  }
  return out;
}

std::pair<Matrix, Matrix> flatten(const DemoDataset& dataset, std::size_t chunk) {
  const std::size_t n = dataset.num_steps();
  Matrix S(n, dataset.state_dim());
  Matrix A(n, chunk * dataset.action_dim());
  std::size_t row = 0;
  for (const Trajectory& tr : dataset.trajectories()) {
    const Matrix chunked = chunk_actions(tr, chunk);
    for (std::size_t t = 0; t < tr.length(); ++t, ++row) {
      std::copy(tr.states.row(t).begin(), tr.states.row(t).end(), S.row(row).begin());
      std::copy(chunked.row(t).begin(), chunked.row(t).end(), A.row(row).begin());
    }
  }
  return {std::move(S), std::move(A)};
}

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  const std::size_t d = x.cols();
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 1.0);
  if (x.rows() == 0) return s;
  const double n = static_cast<double>(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) s.mean[c] += x(r, c);
  }
  for (double& m : s.mean) m /= n;
  std::vector<double> var(d, 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double dv = x(r, c) - s.mean[c];
      var[c] += dv * dv;
    }
  }
  for (std::size_t c = 0; c < d; ++c) {
    const double sd = std::sqrt(var[c] / n);
    s.scale[c] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

Standardizer Standardizer::identity(std::size_t dim) {
  return Standardizer{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.size()) throw std::invalid_argument("Standardizer: dimension mismatch");
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - mean[c]) / scale[c];
  }
  return out;
}

void to_json(nlohmann::json& j, const Standardizer& s) {
  j = nlohmann::json{{"mean", s.mean}, {"scale", s.scale}};
}

void from_json(const nlohmann::json& j, Standardizer& s) {
  s.mean = j.at("mean").get<std::vector<double>>();
  s.scale = j.at("scale").get<std::vector<double>>();
  if (s.mean.size() != s.scale.size()) throw ParseError("standardizer: mean/scale size mismatch");
}

void CurationConfig::validate() const {
  if (k_list.empty()) throw std::invalid_argument("config: k_list must not be empty");
  for (std::size_t k : k_list) {
    if (k == 0) throw std::invalid_argument("config: every k must be positive");
    if (2 * k >= batch_size) throw std::invalid_argument("config: every k must be < batch_size/2");
  }
  if (batch_size == 0 || passes == 0 || z_s_dim == 0 || z_a_dim == 0 || train_steps == 0 ||
      chunk == 0 || hidden_width == 0 || train_batch_size == 0) {
    throw std::invalid_argument("config: sizes and counts must be positive");
  }
  if (!(beta >= 0.0)) throw std::invalid_argument("config: beta must be >= 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate must be > 0");
  if (!(clip_lo >= 0.0 && clip_hi <= 100.0 && clip_lo < clip_hi)) {
    throw std::invalid_argument("config: need 0 <= clip_lo < clip_hi <= 100");
  }
  if (!(eta > 0.0) || !(lambda > 0.0)) throw std::invalid_argument("config: eta and lambda must be > 0");
}

std::size_t CurationConfig::max_k() const {
  std::size_t m = 0;
  for (std::size_t k : k_list) m = std::max(m, k);
  return m;
}

nlohmann::json CurationConfig::to_json() const {
  return json{{"seed", seed},
              {"k_list", k_list},
              {"batch_size", batch_size},
              {"passes", passes},
              {"z_s_dim", z_s_dim},
              {"z_a_dim", z_a_dim},
              {"beta", beta},
              {"learning_rate", learning_rate},
              {"train_steps", train_steps},
              {"chunk", chunk},
              {"clip_lo", clip_lo},
              {"clip_hi", clip_hi},
              {"hidden_width", hidden_width},
              {"train_batch_size", train_batch_size},
              {"eta", eta},
              {"lambda", lambda}};
}

CurationConfig CurationConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("config must be a JSON object");
  CurationConfig c;
  auto count = [](const json& v, const std::string& key) -> std::size_t {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ParseError("config: '" + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
  };
  auto real = [](const json& v, const std::string& key) -> double {
    if (!v.is_number()) throw ParseError("config: '" + key + "' must be a number");
    return v.get<double>();
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") c.seed = count(v, key);
    else if (key == "k_list") {
      if (!v.is_array()) throw ParseError("config: 'k_list' must be an array");
      c.k_list.clear();
      for (const json& k : v) c.k_list.push_back(count(k, key));
    } else if (key == "batch_size") c.batch_size = count(v, key);
    else if (key == "passes") c.passes = count(v, key);
    else if (key == "z_s_dim") c.z_s_dim = count(v, key);
    else if (key == "z_a_dim") c.z_a_dim = count(v, key);
    else if (key == "beta") c.beta = real(v, key);
    else if (key == "learning_rate") c.learning_rate = real(v, key);
    else if (key == "train_steps") c.train_steps = count(v, key);
    else if (key == "chunk") c.chunk = count(v, key);
    else if (key == "clip_lo") c.clip_lo = real(v, key);
    else if (key == "clip_hi") c.clip_hi = real(v, key);
    else if (key == "hidden_width") c.hidden_width = count(v, key);
    else if (key == "train_batch_size") c.train_batch_size = count(v, key);
    else if (key == "eta") c.eta = real(v, key);
    else if (key == "lambda") c.lambda = real(v, key);
    else throw ParseError("config: unknown key '" + key + "'");
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
  return c;
}

CurationConfig CurationConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("invalid config JSON: " + std::string(e.what()));
  }
  return from_json(j);
}

std::string CurationConfig::hash() const {
  const std::string canon = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace deminf
