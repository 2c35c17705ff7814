#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "depvec/mir.hpp"
#include "depvec/model.hpp"
#include "depvec/rng.hpp"
#include "depvec/tensor.hpp"

namespace depvec::tasks {

enum class Task { SolutionClass = 0, Clone = 1, NamePred = 2 };
const char* task_name(Task t);
Task task_from_name(const std::string& name);

// which half of the code embedding stays visible during fine-tuning/probing
enum class Mode { Both = 0, Lexical = 1, Dependence = 2 };
const char* mode_name(Mode m);
Mode mode_from_name(const std::string& name);

// width of the feature slice a mode selects from the code embedding
std::int64_t feature_width(const model::Model& m, Mode mode);

// single decision layer over the code embedding; CLONE scores a pair through
// the symmetric-capable features [e1; e2; |e1-e2|; e1*e2]
struct TaskHead {
  Task task = Task::SolutionClass;
  Tensor W;  // [in, out]
  Tensor b;  // [1, out]
  std::vector<std::string> labels;  // class names; empty for NAME_PRED

  std::int64_t in_width() const { return W.shape()[0]; }
  std::int64_t out_width() const { return W.shape()[1]; }
  void collect(std::vector<std::pair<std::string, Tensor>>& out) const;
};

// label space comes from the dataset (SOLUTION_CLASS), the subword vocab
// (NAME_PRED), or is a single pair logit (CLONE); rejects datasets whose
// label space is degenerate (fewer than two classes)
TaskHead make_head(Task task, const model::Model& m,
                   const std::vector<mir::Record>& dataset, Rng& rng);

struct ClassStats {
  std::string label;
  std::int64_t tp = 0, fp = 0, fn = 0;

  friend bool operator==(const ClassStats&, const ClassStats&) = default;
};

struct MetricsReport {
  std::string task, mode;
  double precision = 0, recall = 0, f1 = 0;  // micro-averaged
  std::optional<double> accuracy;            // balanced single-label tasks only
  std::vector<ClassStats> per_class;
  std::uint64_t seed = 0;
  std::string checkpoint;

  std::string to_json() const;
  std::string to_table() const;
};

// micro P/R/F1 from the per-class confusion counts; f1 = 2PR/(P+R), 0 when
// P+R == 0
void fill_micro(MetricsReport& report);

// stable 80/20 split: FNV-1a of the record id, ids hashing to 4 mod 5 are
// held out; independent of the seed so splits never drift between runs
bool held_out(const std::string& id);

// clone training pairs over grouped records: every unordered same-group pair
// is a positive, and an equal number of cross-group pairs is sampled without
// replacement; pair id is "<id_a>|<id_b>"
struct PairSample {
  std::string id;
  std::int64_t a = 0, b = 0;  // indices into the record vector
  int label = 0;              // 1 clone, 0 non-clone

  friend bool operator==(const PairSample&, const PairSample&) = default;
};
std::vector<PairSample> make_clone_pairs(
    const std::vector<mir::Record>& records, std::uint64_t seed);

struct FinetuneConfig {
  Mode mode = Mode::Both;
  std::int64_t epochs = 5;
  std::uint64_t seed = 0;
  double lr = 1e-3;
};

struct FinetuneResult {
  MetricsReport metrics;           // held-out, after the last epoch
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

// trains the model and head in place on the 80% split and evaluates on the
// rest; the mode masks the lexical or dependence half of the embedding with
// zeros before the head (node features still flow through the GNN, so the
// dependence mode keeps training the lexical encoder underneath it)
FinetuneResult finetune(const std::vector<mir::Record>& dataset,
                        model::Model& m, TaskHead& head,
                        const FinetuneConfig& cfg);

// plain cosine; zero-norm inputs score 0
double cosine(const std::vector<double>& a, const std::vector<double>& b);

// unsupervised clone score: cosine of the two code embeddings, in [-1, 1]
double clone_cosine(const model::Model& m, const mir::Program& p1,
                    const mir::Program& p2);
// supervised clone score: sigmoid of the pair-feature logit, in [0, 1]
double clone_score(const model::Model& m, const TaskHead& head,
                   const mir::Program& p1, const mir::Program& p2);

struct SubtokenF1 {
  double precision = 0, recall = 0, f1 = 0;
};
// set-based subword overlap; an empty prediction or truth scores (0, 0, 0)
SubtokenF1 subtoken_f1(const std::vector<std::string>& predicted,
                       const std::vector<std::string>& truth);

// FNV-1a over every parameter tensor, for frozen-model assertions
std::uint64_t model_hash(const model::Model& m);

struct ProbeResult {
  double accuracy = 0;
  std::uint64_t hash_before = 0, hash_after = 0;
  std::vector<double> epoch_loss;
};

// trains one linear classifier on frozen embeddings restricted to the chosen
// feature slice; the model itself is never touched (hash-verified)
ProbeResult probe(const std::vector<mir::Record>& dataset,
                  const model::Model& m, Mode feature,
                  const FinetuneConfig& cfg);

}  // namespace depvec::tasks
