#include "acsr/ctc.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "acsr/error.hpp"
#include "acsr/math.hpp"

namespace acsr {

namespace {
constexpr double kProbFloor = 1e-30;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

int PhoneInventory::class_of(const std::string& symbol) const {
  for (std::size_t i = 0; i < phones.size(); ++i)
    if (phones[i] == symbol) return static_cast<int>(i) + 1;
  return -1;
}

const std::string& PhoneInventory::symbol(int cls) const {
  static const std::string blank = "<blank>";
  if (cls == kBlank) return blank;
  if (cls < 1 || cls > static_cast<int>(phones.size())) throw MalformedInput("class index out of range");
  return phones[static_cast<std::size_t>(cls - 1)];
}

void PhoneInventory::validate() const {
  std::set<std::string> seen;
  for (const auto& p : phones) {
    if (p.empty() || p == "<blank>") throw MalformedInput("invalid phone symbol '" + p + "'");
    if (!seen.insert(p).second) throw MalformedInput("duplicate phone symbol '" + p + "'");
  }
}

PhoneInventory parse_inventory(std::istream& in) {
  PhoneInventory inv;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    inv.phones.push_back(line.substr(b, e - b + 1));
  }
  inv.validate();
  return inv;
}

PhoneInventory read_inventory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedInput("cannot open inventory " + path);
  return parse_inventory(in);
}

void write_inventory(const PhoneInventory& inv, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MalformedInput("cannot write " + path);
  for (const auto& p : inv.phones) out << p << '\n';
}

void Posteriorgram::validate() const {
  if (probs.rows() < 1 || probs.cols() < 2) throw MalformedInput("posteriorgram needs >= 1 frame and >= 2 classes");
  if (blank_index < 0 || blank_index >= probs.cols()) throw MalformedInput("blank index out of range");
  if (!probs.allFinite() || (probs.array() < 0).any()) throw MalformedInput("posteriorgram entries must be finite and >= 0");
  for (Eigen::Index t = 0; t < probs.rows(); ++t)
    if (std::abs(probs.row(t).sum() - 1.0) > 1e-6)
      throw MalformedInput("posteriorgram row " + std::to_string(t) + " does not sum to 1");
}

Eigen::Index ctc_min_frames(const LabelSequence& labels) {
  Eigen::Index n = static_cast<Eigen::Index>(labels.size());
  for (std::size_t i = 1; i < labels.size(); ++i)
    if (labels[i] == labels[i - 1]) ++n;
  return n;
}

CtcLoss ctc_loss(const Posteriorgram& post, const LabelSequence& labels) {
  post.validate();
  const Eigen::Index T = post.frames();
  const Eigen::Index C = post.classes();
  const int blank = post.blank_index;
  for (int l : labels)
    if (l < 0 || l >= C || l == blank) throw MalformedInput("label outside inventory or equal to blank");
  if (T < ctc_min_frames(labels))
    throw InfeasibleAlignment("T=" + std::to_string(T) + " is shorter than the " +
                              std::to_string(ctc_min_frames(labels)) + " frames the labels need");

  // Blank-augmented label sequence: b l1 b l2 ... lN b.
  const Eigen::Index S = 2 * static_cast<Eigen::Index>(labels.size()) + 1;
  std::vector<int> ext(static_cast<std::size_t>(S), blank);
  for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  auto skip_allowed = [&](Eigen::Index s) {  // may jump from s - 2 to s
    return s >= 2 && ext[static_cast<std::size_t>(s)] != blank &&
           ext[static_cast<std::size_t>(s)] != ext[static_cast<std::size_t>(s - 2)];
  };

  const Eigen::MatrixXd logy = post.probs.cwiseMax(kProbFloor).array().log().matrix();
  auto ly = [&](Eigen::Index t, Eigen::Index s) { return logy(t, ext[static_cast<std::size_t>(s)]); };

  Eigen::MatrixXd alpha = Eigen::MatrixXd::Constant(T, S, kNegInf);
  alpha(0, 0) = ly(0, 0);
  if (S > 1) alpha(0, 1) = ly(0, 1);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
      if (skip_allowed(s)) a = log_add(a, alpha(t - 1, s - 2));
      alpha(t, s) = a + ly(t, s);
    }
  }

  // beta(t, s): log probability of the remaining frames after t given state s at t.
  Eigen::MatrixXd beta = Eigen::MatrixXd::Constant(T, S, kNegInf);
  beta(T - 1, S - 1) = 0.0;
  if (S > 1) beta(T - 1, S - 2) = 0.0;
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      double b = beta(t + 1, s) + ly(t + 1, s);
      if (s + 1 < S) b = log_add(b, beta(t + 1, s + 1) + ly(t + 1, s + 1));
      if (s + 2 < S && skip_allowed(s + 2)) b = log_add(b, beta(t + 1, s + 2) + ly(t + 1, s + 2));
      beta(t, s) = b;
    }
  }

  double log_p = alpha(T - 1, S - 1);
  if (S > 1) log_p = log_add(log_p, alpha(T - 1, S - 2));

  CtcLoss out;
  out.loss = -log_p;
  out.grad = post.probs;
  Eigen::MatrixXd occupancy = Eigen::MatrixXd::Constant(T, C, kNegInf);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index s = 0; s < S; ++s) {
      const int c = ext[static_cast<std::size_t>(s)];
      occupancy(t, c) = log_add(occupancy(t, c), alpha(t, s) + beta(t, s));
    }
  out.grad -= (occupancy.array() - log_p).exp().matrix();
  return out;
}

LabelSequence ctc_collapse(const std::vector<int>& frame_classes, int blank_index) {
  LabelSequence out;
  int prev = -1;
  for (int c : frame_classes) {
    if (c != prev && c != blank_index) out.push_back(c);
    prev = c;
  }
  return out;
}

LabelSequence ctc_greedy_decode(const Posteriorgram& post) {
  std::vector<int> best(static_cast<std::size_t>(post.frames()));
  for (Eigen::Index t = 0; t < post.frames(); ++t) {
    Eigen::Index arg = 0;
    for (Eigen::Index c = 1; c < post.classes(); ++c)
      if (post.probs(t, c) > post.probs(t, arg)) arg = c;
    best[static_cast<std::size_t>(t)] = static_cast<int>(arg);
  }
  return ctc_collapse(best, post.blank_index);
}

double ctc_path_oracle(const Posteriorgram& post, const LabelSequence& labels) {
  const Eigen::Index T = post.frames();
  const Eigen::Index C = post.classes();
  if (T > 8 || C > 5) throw OracleLimit("path enumeration limited to T <= 8 and 5 classes");
  std::vector<int> path(static_cast<std::size_t>(T), 0);
  double total = 0.0;
  while (true) {
    if (ctc_collapse(path, post.blank_index) == labels) {
      double p = 1.0;
      for (Eigen::Index t = 0; t < T; ++t) p *= post.probs(t, path[static_cast<std::size_t>(t)]);
      total += p;
    }
    Eigen::Index t = 0;
    while (t < T && ++path[static_cast<std::size_t>(t)] == C) path[static_cast<std::size_t>(t++)] = 0;
    if (t == T) break;
  }
  return total;
}

}  // namespace acsr
