#include "deminf/curation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "deminf/error.hpp"
#include "deminf/numerics.hpp"

namespace deminf::curation {

est::StepScores clip_scores(const est::StepScores& steps, double lo, double hi, ClipBounds* bounds) {
  if (steps.values.empty()) throw std::invalid_argument("clip_scores: no step scores");
  if (!(lo <= hi)) throw std::invalid_argument("clip_scores: lo must not exceed hi");
  const double vlo = percentile(steps.values, lo);
  const double vhi = percentile(steps.values, hi);
  est::StepScores out = steps;
  for (double& v : out.values) v = std::clamp(v, vlo, vhi);
  if (bounds != nullptr) *bounds = {vlo, vhi};
  return out;
}

std::vector<std::size_t> TrajScores::by_rank() const {
  std::vector<std::size_t> order(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) order.at(entries[i].rank - 1) = i;
  return order;
}

std::vector<double> TrajScores::scores() const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.score);
  return out;
}

std::vector<double> TrajScores::labels() const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    if (!e.quality) throw std::invalid_argument("trajectory '" + e.id + "' has no quality label");
    out.push_back(*e.quality);
  }
  return out;
}

void assign_ranks(TrajScores& scores) {
  std::vector<std::size_t> order(scores.entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores.entries[a].score > scores.entries[b].score;
  });
  for (std::size_t r = 0; r < order.size(); ++r) scores.entries[order[r]].rank = r + 1;
}

TrajScores trajectory_scores(const est::StepScores& steps, const DemoDataset& dataset) {
  if (steps.values.size() != dataset.num_steps()) {
    throw std::invalid_argument("trajectory_scores: " + std::to_string(steps.values.size()) +
                                " step scores for " + std::to_string(dataset.num_steps()) + " steps");
  }
  TrajScores out;
  for (std::size_t i = 0; i < dataset.num_trajectories(); ++i) {
    const Trajectory& tr = dataset.trajectory(i);
    double s = 0.0;
    for (std::size_t t = 0; t < tr.length(); ++t) s += steps.values[dataset.offset(i) + t];
    out.entries.push_back({tr.id, s / static_cast<double>(tr.length()), 0, tr.quality});
  }
  assign_ranks(out);
  return out;
}

namespace {

void check_alignment(const DemoDataset& dataset, const TrajScores& scores) {
  if (scores.size() != dataset.num_trajectories()) {
    throw std::invalid_argument("scores cover " + std::to_string(scores.size()) + " trajectories, dataset has " +
                                std::to_string(dataset.num_trajectories()));
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores.entries[i].id != dataset.trajectory(i).id) {
      throw std::invalid_argument("scores and dataset disagree on trajectory " + std::to_string(i) + " ('" +
                                  scores.entries[i].id + "' vs '" + dataset.trajectory(i).id + "')");
    }
  }
}

}  // namespace

DemoDataset filter(const DemoDataset& dataset, const TrajScores& scores, double kappa) {
  check_alignment(dataset, scores);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores.entries[i].score > kappa) keep.push_back(i);
  }
  return dataset.subset(keep);
}

DemoDataset keep_top_fraction(const DemoDataset& dataset, const TrajScores& scores, double fraction) {
  check_alignment(dataset, scores);
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("keep fraction must lie in [0, 1]");
  const auto n_keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(scores.size()) - 1e-9));
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores.entries[i].rank <= n_keep) keep.push_back(i);
  }
  return dataset.subset(keep);
}

namespace {

// Suffix means of `labels` taken in `order` (lowest first): out[m] = mean of order[m..].
std::vector<double> remaining_means(const std::vector<double>& labels, const std::vector<std::size_t>& order) {
  const std::size_t n = order.size();
  std::vector<double> out(n);
  double s = 0.0;
  for (std::size_t m = n; m-- > 0;) {
    s += labels[order[m]];
    out[m] = s / static_cast<double>(n - m);
  }
  return out;
}

}  // namespace

std::vector<CurvePoint> quality_curve(const TrajScores& scores) {
  const auto labels = scores.labels();
  const std::size_t n = labels.size();
  if (n == 0) throw std::invalid_argument("quality_curve: no trajectories");
  // Lowest-scored first = reverse rank order.
  auto by_score = scores.by_rank();
  std::reverse(by_score.begin(), by_score.end());
  std::vector<std::size_t> by_label(n);
  std::iota(by_label.begin(), by_label.end(), std::size_t{0});
  std::stable_sort(by_label.begin(), by_label.end(),
                   [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
  const auto method = remaining_means(labels, by_score);
  const auto oracle = remaining_means(labels, by_label);
  const double overall = mean(labels);
  std::vector<CurvePoint> curve;
  for (std::size_t m = 0; m < n; ++m) curve.push_back({m, method[m], oracle[m], overall});
  return curve;
}

nlohmann::json Report::to_json() const {
  nlohmann::json c = nlohmann::json::array();
  for (const auto& p : curve) {
    c.push_back({{"num_filtered", p.num_filtered},
                 {"mean_quality", p.mean_quality},
                 {"oracle_mean_quality", p.oracle_mean_quality},
                 {"random_mean_quality", p.random_mean_quality}});
  }
  return {{"spearman", spearman},
          {"area_vs_random", area_vs_random},
          {"oracle_area_vs_random", oracle_area_vs_random},
          {"curve", c}};
}

Report evaluate(const TrajScores& scores) {
  Report r;
  const auto labels = scores.labels();
  r.spearman = spearman(scores.scores(), labels);
  r.curve = quality_curve(scores);
  for (const auto& p : r.curve) {
    r.area_vs_random += p.mean_quality - p.random_mean_quality;
    r.oracle_area_vs_random += p.oracle_mean_quality - p.random_mean_quality;
  }
  r.area_vs_random /= static_cast<double>(r.curve.size());
  r.oracle_area_vs_random /= static_cast<double>(r.curve.size());
  return r;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string step_scores_csv(const est::StepScores& steps, const DemoDataset& dataset) {
  if (steps.values.size() != dataset.num_steps()) throw std::invalid_argument("step_scores_csv: size mismatch");
  std::string out = "row,traj_id,t,score\n";
  for (std::size_t r = 0; r < steps.values.size(); ++r) {
    const StepRef ref = dataset.step(r);
    out += std::to_string(r) + ',' + dataset.trajectory(ref.traj).id + ',' + std::to_string(ref.t) + ',' +
           format_double(steps.values[r]) + '\n';
  }
  return out;
}

std::string traj_scores_csv(const TrajScores& scores) {
  std::string out = "traj_id,score,rank,quality\n";
  for (const auto& e : scores.entries) {
    out += e.id + ',' + format_double(e.score) + ',' + std::to_string(e.rank) + ',' +
           (e.quality ? format_double(*e.quality) : std::string()) + '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("bad number '" + s + "' at CSV line " + std::to_string(line));
  }
  return v;
}

}  // namespace

TrajScores parse_traj_scores_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"traj_id", "score", "rank", "quality"}) {
    throw ParseError("trajectory score CSV must start with header traj_id,score,rank,quality");
  }
  TrajScores out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw ParseError("expected 4 fields at CSV line " + std::to_string(line_no));
    TrajScore e;
    e.id = f[0];
    e.score = parse_double(f[1], line_no);
    e.rank = static_cast<std::size_t>(parse_double(f[2], line_no));
    if (!f[3].empty()) e.quality = parse_double(f[3], line_no);
    out.entries.push_back(std::move(e));
  }
  std::vector<bool> seen(out.size() + 1, false);
  for (const auto& e : out.entries) {
    if (e.rank == 0 || e.rank > out.size() || seen[e.rank]) throw ParseError("ranks must be a permutation of 1..n");
    seen[e.rank] = true;
  }
  return out;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "num_filtered,mean_quality,oracle_mean_quality,random_mean_quality\n";
  for (const auto& p : curve) {
    out += std::to_string(p.num_filtered) + ',' + format_double(p.mean_quality) + ',' +
           format_double(p.oracle_mean_quality) + ',' + format_double(p.random_mean_quality) + '\n';
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace deminf::curation
