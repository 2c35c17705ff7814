#include "depvec/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "depvec/adam.hpp"
#include "depvec/compose.hpp"
#include "depvec/depgraph.hpp"
#include "depvec/gnn.hpp"
#include "depvec/lexical.hpp"

namespace depvec::tasks {

const char* task_name(Task t) {
  switch (t) {
    case Task::SolutionClass: return "solution-class";
    case Task::Clone: return "clone";
    case Task::NamePred: return "name-pred";
  }
  return "?";
}

Task task_from_name(const std::string& name) {
  for (Task t : {Task::SolutionClass, Task::Clone, Task::NamePred})
    if (name == task_name(t)) return t;
  throw std::invalid_argument("unknown task: " + name);
}

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::Both: return "both";
    case Mode::Lexical: return "lexical";
    case Mode::Dependence: return "dependence";
  }
  return "?";
}

Mode mode_from_name(const std::string& name) {
  for (Mode m : {Mode::Both, Mode::Lexical, Mode::Dependence})
    if (name == mode_name(m)) return m;
  throw std::invalid_argument("unknown mode: " + name);
}

std::int64_t feature_width(const model::Model& m, Mode mode) {
  switch (mode) {
    case Mode::Lexical: return m.width();
    case Mode::Dependence: return m.readout_dim();
    case Mode::Both: break;
  }
  return m.embedding_dim();
}

void TaskHead::collect(
    std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back("head.task.W", W);
  out.emplace_back("head.task.b", b);
}

namespace {

constexpr std::uint64_t kFnvBasis = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) h = (h ^ p[i]) * kFnvPrime;
  return h;
}

Tensor linear_init(std::int64_t in, std::int64_t out, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  return Tensor::param({in, out}, rng, -s, s);
}

// mode-masked code embedding, [1, lex width + readout width]; the masked
// half is a constant zero block so no gradient flows into it
Tensor embed(const model::Model& m, const mir::Program& p, Mode mode,
             Rng* dropout_rng) {
  const std::int64_t lw = m.width();
  const std::int64_t dw = m.readout_dim();
  Tensor lex, dep;
  if (mode != Mode::Dependence)
    lex = lexical::lexical_embedding(m.lex, p);
  else
    lex = Tensor::zeros({1, lw});
  if (mode != Mode::Lexical) {
    auto g = depgraph::build_program_graph(p, m.lex);
    dep = gnn::attention_readout(m.readout, m.stack.encode(g, g.X, dropout_rng));
  } else {
    dep = Tensor::zeros({1, dw});
  }
  return concat({lex, dep}, 1);
}

// stable cross-entropy of one logits row against one label index
Tensor ce_row(const Tensor& logits, std::int64_t label) {
  const std::int64_t c = logits.shape()[1];
  const double* row = logits.data();
  double mx = row[0];
  for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
  std::vector<double> onehot(static_cast<std::size_t>(c), 0.0);
  onehot[static_cast<std::size_t>(label)] = 1.0;
  Tensor maxc = Tensor::from({1, 1}, {mx});
  Tensor lse = add(log(sum(exp(sub(logits, maxc)), 1)), maxc);
  Tensor picked = sum(mul(logits, Tensor::from({1, c}, onehot)), 1);
  return mean(sub(lse, picked));
}

// binary cross-entropy of one pair logit against y in {0, 1}
Tensor bce_logit(const Tensor& logit, int y) {
  Tensor t = y ? softplus(smul(logit, -1.0)) : softplus(logit);
  return mean(t);
}

// per-subword binary cross-entropy over the whole vocabulary row
Tensor multilabel_bce(const Tensor& logits,
                      const std::vector<std::int64_t>& targets) {
  const std::int64_t v = logits.shape()[1];
  std::vector<double> y(static_cast<std::size_t>(v), 0.0);
  std::vector<double> ny(static_cast<std::size_t>(v), 1.0);
  for (std::int64_t id : targets) {
    y[static_cast<std::size_t>(id)] = 1.0;
    ny[static_cast<std::size_t>(id)] = 0.0;
  }
  Tensor pos = mul(softplus(smul(logits, -1.0)), Tensor::from({1, v}, y));
  Tensor neg = mul(softplus(logits), Tensor::from({1, v}, ny));
  return mean(add(pos, neg));
}

std::int64_t argmax_row(const Tensor& logits) {
  const std::int64_t c = logits.shape()[1];
  const double* row = logits.data();
  std::int64_t best = 0;
  for (std::int64_t j = 1; j < c; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

// distinct record labels in sorted order; every record must carry one
std::vector<std::string> label_space(const std::vector<mir::Record>& dataset) {
  std::set<std::string> seen;
  for (const auto& r : dataset) {
    if (!r.program.label)
      throw std::invalid_argument("record '" + r.id + "' has no label");
    seen.insert(*r.program.label);
  }
  return {seen.begin(), seen.end()};
}

std::int64_t label_index(const std::vector<std::string>& labels,
                         const std::string& label) {
  auto it = std::lower_bound(labels.begin(), labels.end(), label);
  if (it == labels.end() || *it != label)
    throw std::invalid_argument("label \"" + label + "\" not in the head");
  return it - labels.begin();
}

// sorted unique subword ids of a method name
std::vector<std::int64_t> name_targets(const std::string& name,
                                       const lexical::SubwordVocab& vocab) {
  auto ids = lexical::tokenize_text(name, vocab);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(i));
    std::swap(idx[i - 1], idx[j]);
  }
}

Tensor pair_features(const Tensor& e1, const Tensor& e2) {
  Tensor d = sub(e1, e2);
  Tensor absd = add(relu(d), relu(smul(d, -1.0)));
  return concat({e1, e2, absd, mul(e1, e2)}, 1);
}

void register_params(Adam& opt, model::Model& m, TaskHead& head, Mode mode) {
  std::vector<std::pair<std::string, Tensor>> named;
  // the lexical mode never evaluates the GNN, so its params would see no
  // gradient; the dependence mode still trains the lexical encoder through
  // the node features
  if (mode == Mode::Lexical)
    m.lex.collect(named);
  else
    m.collect(named);
  head.collect(named);
  for (const auto& [name, t] : named) opt.add(name, t);
}

struct Split {
  std::vector<std::size_t> train, test;
};

template <typename Id>
Split split_by_id(const std::vector<Id>& ids) {
  Split s;
  for (std::size_t i = 0; i < ids.size(); ++i)
    (held_out(ids[i]) ? s.test : s.train).push_back(i);
  if (s.train.empty()) throw std::runtime_error("training split is empty");
  if (s.test.empty()) throw std::runtime_error("held-out split is empty");
  return s;
}

}  // namespace

TaskHead make_head(Task task, const model::Model& m,
                   const std::vector<mir::Record>& dataset, Rng& rng) {
  TaskHead head;
  head.task = task;
  const std::int64_t d = m.embedding_dim();
  switch (task) {
    case Task::SolutionClass: {
      head.labels = label_space(dataset);
      if (head.labels.size() < 2)
        throw std::invalid_argument(
            "degenerate label space: dataset has " +
            std::to_string(head.labels.size()) +
            " distinct label(s); need at least 2");
      head.W = linear_init(d, static_cast<std::int64_t>(head.labels.size()), rng);
      break;
    }
    case Task::Clone: {
      head.labels = {"clone", "non-clone"};
      head.W = linear_init(4 * d, 1, rng);
      break;
    }
    case Task::NamePred: {
      label_space(dataset);  // still demands labels on every record
      head.W = linear_init(d, m.lex.vocab.size(), rng);
      break;
    }
  }
  head.b = Tensor::param({1, head.W.shape()[1]}, rng, 0.0, 0.0);
  return head;
}

void fill_micro(MetricsReport& report) {
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (const auto& c : report.per_class) {
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
  }
  report.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  report.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  const double pr = report.precision + report.recall;
  report.f1 = pr > 0 ? 2.0 * report.precision * report.recall / pr : 0.0;
}

bool held_out(const std::string& id) {
  return fnv1a(kFnvBasis, id.data(), id.size()) % 5 == 4;
}

std::vector<PairSample> make_clone_pairs(
    const std::vector<mir::Record>& records, std::uint64_t seed) {
  const auto n = static_cast<std::int64_t>(records.size());
  std::vector<PairSample> out;
  for (std::int64_t i = 0; i < n; ++i) {
    if (!records[static_cast<std::size_t>(i)].program.group) continue;
    for (std::int64_t j = i + 1; j < n; ++j) {
      const auto& a = records[static_cast<std::size_t>(i)];
      const auto& b = records[static_cast<std::size_t>(j)];
      if (b.program.group && *a.program.group == *b.program.group)
        out.push_back({a.id + "|" + b.id, i, j, 1});
    }
  }
  const std::size_t positives = out.size();
  if (positives == 0)
    throw std::invalid_argument(
        "degenerate label space: no same-group pairs in the clone dataset");

  Rng rng = Rng::seeded(seed).fork(11);
  std::set<std::pair<std::int64_t, std::int64_t>> used;
  std::size_t attempts = 0;
  const std::size_t cap = 1000 * positives + 1000;
  while (out.size() < 2 * positives) {
    if (++attempts > cap)
      throw std::runtime_error(
          "could not sample enough cross-group clone pairs");
    auto i = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    auto j = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    if (i == j) continue;
    if (i > j) std::swap(i, j);
    const auto& a = records[static_cast<std::size_t>(i)];
    const auto& b = records[static_cast<std::size_t>(j)];
    if (a.program.group && b.program.group &&
        *a.program.group == *b.program.group)
      continue;
    if (!used.insert({i, j}).second) continue;
    out.push_back({a.id + "|" + b.id, i, j, 0});
  }
  return out;
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["task"] = task;
  j["mode"] = mode;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  if (accuracy) j["accuracy"] = *accuracy;
  j["seed"] = seed;
  j["checkpoint"] = checkpoint;
  return j.dump();
}

std::string MetricsReport::to_table() const {
  std::ostringstream os;
  os << "task " << task << "  mode " << mode << "  seed " << seed << "\n";
  char line[160];
  std::snprintf(line, sizeof(line),
                "micro  precision %.4f  recall %.4f  f1 %.4f", precision,
                recall, f1);
  os << line;
  if (accuracy) {
    std::snprintf(line, sizeof(line), "  accuracy %.4f", *accuracy);
    os << line;
  }
  os << "\n";
  for (const auto& c : per_class) {
    std::snprintf(line, sizeof(line), "%-24s tp %5lld  fp %5lld  fn %5lld\n",
                  c.label.c_str(), static_cast<long long>(c.tp),
                  static_cast<long long>(c.fp), static_cast<long long>(c.fn));
    os << line;
  }
  return os.str();
}

namespace {

FinetuneResult finetune_classify(const std::vector<mir::Record>& dataset,
                                 model::Model& m, TaskHead& head,
                                 const FinetuneConfig& cfg) {
  std::vector<std::string> ids;
  std::vector<std::int64_t> y;
  for (const auto& r : dataset) {
    ids.push_back(r.id);
    y.push_back(label_index(head.labels, *r.program.label));
  }
  Split split = split_by_id(ids);

  std::set<std::int64_t> train_labels;
  for (std::size_t i : split.train) train_labels.insert(y[i]);
  for (const auto& label : head.labels)
    if (!train_labels.count(label_index(head.labels, label)))
      throw std::runtime_error("label \"" + label +
                               "\" missing from the training split");

  Rng root = Rng::seeded(cfg.seed);
  Rng order = root.fork(1);
  Rng drop = root.fork(2);
  Adam opt(cfg.lr);
  register_params(opt, m, head, cfg.mode);

  FinetuneResult res;
  for (std::int64_t e = 0; e < cfg.epochs; ++e) {
    shuffle_indices(split.train, order);
    double total = 0;
    for (std::size_t i : split.train) {
      Tape tape;
      double item;
      {
        TapeScope scope(tape);
        Tensor emb = embed(m, dataset[i].program, cfg.mode, &drop);
        Tensor logits = add(matmul(emb, head.W), head.b);
        Tensor loss = ce_row(logits, y[i]);
        item = loss.item();
        backward(loss, tape);
      }
      total += item;
      opt.step();
    }
    res.epoch_loss.push_back(total / static_cast<double>(split.train.size()));
  }

  res.metrics.per_class.resize(head.labels.size());
  for (std::size_t c = 0; c < head.labels.size(); ++c)
    res.metrics.per_class[c].label = head.labels[c];
  std::int64_t correct = 0;
  for (std::size_t i : split.test) {
    Tensor emb = embed(m, dataset[i].program, cfg.mode, nullptr);
    Tensor logits = add(matmul(emb, head.W), head.b);
    const std::int64_t pred = argmax_row(logits);
    if (pred == y[i]) {
      ++res.metrics.per_class[static_cast<std::size_t>(pred)].tp;
      ++correct;
    } else {
      ++res.metrics.per_class[static_cast<std::size_t>(pred)].fp;
      ++res.metrics.per_class[static_cast<std::size_t>(y[i])].fn;
    }
  }
  res.metrics.accuracy =
      static_cast<double>(correct) / static_cast<double>(split.test.size());
  return res;
}

FinetuneResult finetune_clone(const std::vector<mir::Record>& dataset,
                              model::Model& m, TaskHead& head,
                              const FinetuneConfig& cfg) {
  auto pairs = make_clone_pairs(dataset, cfg.seed);
  std::vector<std::string> ids;
  for (const auto& p : pairs) ids.push_back(p.id);
  Split split = split_by_id(ids);

  std::set<int> train_labels;
  for (std::size_t i : split.train) train_labels.insert(pairs[i].label);
  for (int lab : {1, 0})
    if (!train_labels.count(lab))
      throw std::runtime_error(
          std::string("label \"") + (lab ? "clone" : "non-clone") +
          "\" missing from the training split");

  Rng root = Rng::seeded(cfg.seed);
  Rng order = root.fork(1);
  Rng drop = root.fork(2);
  Adam opt(cfg.lr);
  register_params(opt, m, head, cfg.mode);

  FinetuneResult res;
  for (std::int64_t e = 0; e < cfg.epochs; ++e) {
    shuffle_indices(split.train, order);
    double total = 0;
    for (std::size_t i : split.train) {
      const auto& p = pairs[i];
      Tape tape;
      double item;
      {
        TapeScope scope(tape);
        Tensor e1 = embed(m, dataset[static_cast<std::size_t>(p.a)].program,
                          cfg.mode, &drop);
        Tensor e2 = embed(m, dataset[static_cast<std::size_t>(p.b)].program,
                          cfg.mode, &drop);
        Tensor logit = add(matmul(pair_features(e1, e2), head.W), head.b);
        Tensor loss = bce_logit(logit, p.label);
        item = loss.item();
        backward(loss, tape);
      }
      total += item;
      opt.step();
    }
    res.epoch_loss.push_back(total / static_cast<double>(split.train.size()));
  }

  res.metrics.per_class = {{"clone", 0, 0, 0}, {"non-clone", 0, 0, 0}};
  std::int64_t correct = 0;
  for (std::size_t i : split.test) {
    const auto& p = pairs[i];
    Tensor e1 =
        embed(m, dataset[static_cast<std::size_t>(p.a)].program, cfg.mode, nullptr);
    Tensor e2 =
        embed(m, dataset[static_cast<std::size_t>(p.b)].program, cfg.mode, nullptr);
    Tensor logit = add(matmul(pair_features(e1, e2), head.W), head.b);
    const int pred = logit.data()[0] > 0 ? 1 : 0;
    auto& cls = res.metrics.per_class[pred ? 0 : 1];
    if (pred == p.label) {
      ++cls.tp;
      ++correct;
    } else {
      ++cls.fp;
      ++res.metrics.per_class[p.label ? 0 : 1].fn;
    }
  }
  res.metrics.accuracy =
      static_cast<double>(correct) / static_cast<double>(split.test.size());
  return res;
}

FinetuneResult finetune_names(const std::vector<mir::Record>& dataset,
                              model::Model& m, TaskHead& head,
                              const FinetuneConfig& cfg) {
  std::vector<std::string> ids;
  std::vector<std::vector<std::int64_t>> targets;
  for (const auto& r : dataset) {
    if (!r.program.label)
      throw std::invalid_argument("record '" + r.id + "' has no label");
    ids.push_back(r.id);
    targets.push_back(name_targets(*r.program.label, m.lex.vocab));
  }
  Split split = split_by_id(ids);

  Rng root = Rng::seeded(cfg.seed);
  Rng order = root.fork(1);
  Rng drop = root.fork(2);
  Adam opt(cfg.lr);
  register_params(opt, m, head, cfg.mode);

  FinetuneResult res;
  for (std::int64_t e = 0; e < cfg.epochs; ++e) {
    shuffle_indices(split.train, order);
    double total = 0;
    for (std::size_t i : split.train) {
      Tape tape;
      double item;
      {
        TapeScope scope(tape);
        Tensor emb = embed(m, dataset[i].program, cfg.mode, &drop);
        Tensor logits = add(matmul(emb, head.W), head.b);
        Tensor loss = multilabel_bce(logits, targets[i]);
        item = loss.item();
        backward(loss, tape);
      }
      total += item;
      opt.step();
    }
    res.epoch_loss.push_back(total / static_cast<double>(split.train.size()));
  }

  // micro counts over (record, subword) decisions; per-class rows only for
  // subwords that actually appeared in a prediction or a target
  std::map<std::int64_t, ClassStats> stats;
  for (std::size_t i : split.test) {
    Tensor emb = embed(m, dataset[i].program, cfg.mode, nullptr);
    Tensor logits = add(matmul(emb, head.W), head.b);
    std::set<std::int64_t> truth(targets[i].begin(), targets[i].end());
    const double* row = logits.data();
    for (std::int64_t j = 0; j < logits.shape()[1]; ++j) {
      const bool pred = row[j] > 0;
      const bool is_true = truth.count(j) > 0;
      if (!pred && !is_true) continue;
      auto& s = stats[j];
      if (s.label.empty())
        s.label = m.lex.vocab.id_to_token[static_cast<std::size_t>(j)];
      if (pred && is_true)
        ++s.tp;
      else if (pred)
        ++s.fp;
      else
        ++s.fn;
    }
  }
  for (auto& [id, s] : stats) res.metrics.per_class.push_back(s);
  return res;
}

}  // namespace

FinetuneResult finetune(const std::vector<mir::Record>& dataset,
                        model::Model& m, TaskHead& head,
                        const FinetuneConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("dataset is empty");
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  FinetuneResult res;
  switch (head.task) {
    case Task::SolutionClass: res = finetune_classify(dataset, m, head, cfg); break;
    case Task::Clone: res = finetune_clone(dataset, m, head, cfg); break;
    case Task::NamePred: res = finetune_names(dataset, m, head, cfg); break;
  }
  res.metrics.task = task_name(head.task);
  res.metrics.mode = mode_name(cfg.mode);
  res.metrics.seed = cfg.seed;
  res.metrics.checkpoint = m.provenance;
  fill_micro(res.metrics);
  return res;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine: length mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

std::vector<double> embed_values(const model::Model& m, const mir::Program& p) {
  Tensor e = gnn::code_embedding(p, m.lex, m.stack, m.readout);
  return {e.data(), e.data() + e.size()};
}

}  // namespace

double clone_cosine(const model::Model& m, const mir::Program& p1,
                    const mir::Program& p2) {
  return cosine(embed_values(m, p1), embed_values(m, p2));
}

double clone_score(const model::Model& m, const TaskHead& head,
                   const mir::Program& p1, const mir::Program& p2) {
  if (head.task != Task::Clone)
    throw std::invalid_argument("clone_score needs a CLONE head");
  const auto e1 = embed_values(m, p1);
  const auto e2 = embed_values(m, p2);
  const std::size_t d = e1.size();
  std::vector<double> f(4 * d);
  for (std::size_t i = 0; i < d; ++i) {
    f[i] = e1[i];
    f[d + i] = e2[i];
    f[2 * d + i] = std::abs(e1[i] - e2[i]);
    f[3 * d + i] = e1[i] * e2[i];
  }
  double z = head.b.data()[0];
  const double* w = head.W.data();
  for (std::size_t i = 0; i < f.size(); ++i) z += f[i] * w[i];
  return 1.0 / (1.0 + std::exp(-z));
}

SubtokenF1 subtoken_f1(const std::vector<std::string>& predicted,
                       const std::vector<std::string>& truth) {
  std::set<std::string> p(predicted.begin(), predicted.end());
  std::set<std::string> t(truth.begin(), truth.end());
  if (p.empty() || t.empty()) return {};
  std::int64_t hit = 0;
  for (const auto& s : p) hit += t.count(s) ? 1 : 0;
  SubtokenF1 out;
  out.precision = static_cast<double>(hit) / static_cast<double>(p.size());
  out.recall = static_cast<double>(hit) / static_cast<double>(t.size());
  const double pr = out.precision + out.recall;
  out.f1 = pr > 0 ? 2.0 * out.precision * out.recall / pr : 0.0;
  return out;
}

std::uint64_t model_hash(const model::Model& m) {
  std::vector<std::pair<std::string, Tensor>> named;
  m.collect(named);
  std::uint64_t h = kFnvBasis;
  for (const auto& [name, t] : named) {
    h = fnv1a(h, name.data(), name.size());
    h = fnv1a(h, t.data(), static_cast<std::size_t>(t.size()) * sizeof(double));
  }
  return h;
}

ProbeResult probe(const std::vector<mir::Record>& dataset,
                  const model::Model& m, Mode feature,
                  const FinetuneConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("dataset is empty");
  ProbeResult res;
  res.hash_before = model_hash(m);

  const auto labels = label_space(dataset);
  if (labels.size() < 2)
    throw std::invalid_argument(
        "degenerate label space: dataset has " +
        std::to_string(labels.size()) + " distinct label(s); need at least 2");

  // frozen embeddings computed once, outside any tape
  const std::int64_t lw = m.width();
  const std::int64_t d = feature_width(m, feature);
  std::vector<std::string> ids;
  std::vector<std::int64_t> y;
  std::vector<std::vector<double>> feats;
  for (const auto& r : dataset) {
    ids.push_back(r.id);
    y.push_back(label_index(labels, *r.program.label));
    const auto full = embed_values(m, r.program);
    std::size_t off = feature == Mode::Dependence ? static_cast<std::size_t>(lw) : 0;
    feats.emplace_back(full.begin() + static_cast<std::ptrdiff_t>(off),
                       full.begin() + static_cast<std::ptrdiff_t>(off) +
                           static_cast<std::ptrdiff_t>(d));
  }
  Split split = split_by_id(ids);
  std::set<std::int64_t> train_labels;
  for (std::size_t i : split.train) train_labels.insert(y[i]);
  for (const auto& label : labels)
    if (!train_labels.count(label_index(labels, label)))
      throw std::runtime_error("label \"" + label +
                               "\" missing from the training split");

  Rng root = Rng::seeded(cfg.seed);
  Rng order = root.fork(1);
  Rng init = root.fork(7);
  const auto c = static_cast<std::int64_t>(labels.size());
  Tensor W = linear_init(d, c, init);
  Tensor b = Tensor::param({1, c}, init, 0.0, 0.0);
  Adam opt(cfg.lr);
  opt.add("probe.W", W);
  opt.add("probe.b", b);

  for (std::int64_t e = 0; e < cfg.epochs; ++e) {
    shuffle_indices(split.train, order);
    double total = 0;
    for (std::size_t i : split.train) {
      Tape tape;
      double item;
      {
        TapeScope scope(tape);
        Tensor x = Tensor::from({1, d}, feats[i]);
        Tensor logits = add(matmul(x, W), b);
        Tensor loss = ce_row(logits, y[i]);
        item = loss.item();
        backward(loss, tape);
      }
      total += item;
      opt.step();
    }
    res.epoch_loss.push_back(total / static_cast<double>(split.train.size()));
  }

  std::int64_t correct = 0;
  for (std::size_t i : split.test) {
    Tensor x = Tensor::from({1, d}, feats[i]);
    const std::int64_t pred = argmax_row(add(matmul(x, W), b));
    if (pred == y[i]) ++correct;
  }
  res.accuracy =
      static_cast<double>(correct) / static_cast<double>(split.test.size());

  res.hash_after = model_hash(m);
  if (res.hash_before != res.hash_after)
    throw std::logic_error("probe mutated the frozen model");
  return res;
}

}  // namespace depvec::tasks
