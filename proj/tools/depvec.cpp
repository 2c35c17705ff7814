// depvec: corpus generation, pre-training, embedding, fine-tuning, probing
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "depvec/corpora.hpp"
#include "depvec/depgraph.hpp"
#include "depvec/gnn.hpp"
#include "depvec/lexical.hpp"
#include "depvec/mir.hpp"
#include "depvec/model.hpp"
#include "depvec/pretrain.hpp"
#include "depvec/rng.hpp"
#include "depvec/tasks.hpp"
#include "depvec/tensor.hpp"

namespace {

using namespace depvec;

struct RunConfig {
  std::string command;
  std::string corpus, out, checkpoint, save_model;
  std::vector<std::string> files;        // positional program files
  std::string gnn = "gat";               // gcn | gin | sage | gat
  std::string strategy = "context";      // node | context | vgae | none
  std::int64_t layers = 5;
  double dropout = 0.2;
  std::uint64_t seed = 0;
  std::int64_t epochs = 0;               // 0 = per-command default
  std::string task = "solution-class";
  std::string mode = "both";
  std::string feature = "both";
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open program file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << text;
}

std::vector<mir::Program> programs_of(const std::vector<mir::Record>& rs) {
  std::vector<mir::Program> out;
  out.reserve(rs.size());
  for (const auto& r : rs) out.push_back(r.program);
  return out;
}

int cmd_gen_corpora(const RunConfig& cfg) {
  auto c = corpora::generate_desk_corpora(cfg.seed);
  corpora::write_corpora(c, cfg.out);
  for (const char* name : {"pretrain", "solution", "clones", "names",
                           "probe_token", "probe_structure"})
    std::printf("%s %zu\n", name, c.by_name(name).size());
  return 0;
}

int cmd_pretrain(const RunConfig& cfg) {
  auto corpus = mir::load_corpus(cfg.corpus);
  model::Model m = model::train_base_model(
      corpus, gnn::arch_from_name(cfg.gnn), cfg.layers, cfg.dropout, cfg.seed);
  if (cfg.strategy != "none") {
    pretrain::PretrainConfig pcfg;
    pcfg.strategy = pretrain::strategy_from_name(cfg.strategy);
    pcfg.epochs = cfg.epochs > 0 ? cfg.epochs : 1;
    pcfg.seed = cfg.seed;
    auto res = pretrain::pretrain(m, programs_of(corpus), pcfg);
    for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
      std::printf("epoch %zu loss %.6f\n", e + 1, res.epoch_loss[e]);
  }
  model::save_checkpoint_file(m, cfg.out);
  std::printf("checkpoint %s provenance %s\n", cfg.out.c_str(),
              m.provenance.c_str());
  return 0;
}

int cmd_embed(const RunConfig& cfg) {
  model::Model m = model::load_checkpoint_file(cfg.checkpoint);
  mir::Program p = mir::parse_program(read_file(cfg.files[0]));
  Tensor e = gnn::code_embedding(p, m.lex, m.stack, m.readout);
  const tasks::Mode mode = tasks::mode_from_name(cfg.mode);
  const std::int64_t lw = m.width();
  for (std::int64_t i = 0; i < e.size(); ++i) {
    const bool masked = (mode == tasks::Mode::Lexical && i >= lw) ||
                        (mode == tasks::Mode::Dependence && i < lw);
    std::printf("%s%.17g", i ? " " : "", masked ? 0.0 : e.data()[i]);
  }
  std::printf("\n");
  return 0;
}

int cmd_finetune(const RunConfig& cfg) {
  model::Model m = model::load_checkpoint_file(cfg.checkpoint);
  auto dataset = mir::load_corpus(cfg.corpus);
  Rng head_rng = Rng::seeded(cfg.seed).fork(21);
  tasks::TaskHead head =
      tasks::make_head(tasks::task_from_name(cfg.task), m, dataset, head_rng);
  tasks::FinetuneConfig fcfg;
  fcfg.mode = tasks::mode_from_name(cfg.mode);
  fcfg.epochs = cfg.epochs > 0 ? cfg.epochs : 5;
  fcfg.seed = cfg.seed;
  tasks::FinetuneResult res = tasks::finetune(dataset, m, head, fcfg);
  for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
    std::printf("epoch %zu loss %.6f\n", e + 1, res.epoch_loss[e]);
  std::printf("%s", res.metrics.to_table().c_str());
  if (!cfg.out.empty()) write_file(cfg.out, res.metrics.to_json() + "\n");
  if (!cfg.save_model.empty()) model::save_checkpoint_file(m, cfg.save_model);
  return 0;
}

int cmd_probe(const RunConfig& cfg) {
  model::Model m = model::load_checkpoint_file(cfg.checkpoint);
  auto dataset = mir::load_corpus(cfg.corpus);
  tasks::FinetuneConfig fcfg;
  fcfg.epochs = cfg.epochs > 0 ? cfg.epochs : 5;
  fcfg.seed = cfg.seed;
  tasks::ProbeResult res =
      tasks::probe(dataset, m, tasks::mode_from_name(cfg.feature), fcfg);
  std::printf("accuracy %.6f\n", res.accuracy);
  std::printf("hash_before %016llx\n",
              static_cast<unsigned long long>(res.hash_before));
  std::printf("hash_after %016llx\n",
              static_cast<unsigned long long>(res.hash_after));
  std::printf("frozen %s\n", res.hash_before == res.hash_after ? "yes" : "no");
  if (!cfg.out.empty()) {
    nlohmann::json j;
    j["accuracy"] = res.accuracy;
    j["epoch_loss"] = res.epoch_loss;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(res.hash_before));
    j["hash_before"] = buf;
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(res.hash_after));
    j["hash_after"] = buf;
    write_file(cfg.out, j.dump(2) + "\n");
  }
  return 0;
}

int cmd_clone_sim(const RunConfig& cfg) {
  model::Model m = model::load_checkpoint_file(cfg.checkpoint);
  mir::Program a = mir::parse_program(read_file(cfg.files[0]));
  mir::Program b = mir::parse_program(read_file(cfg.files[1]));
  std::printf("%.6f\n", tasks::clone_cosine(m, a, b));
  return 0;
}

// ---- selfcheck: fast gradient and graph oracles plus exact invariants ----

model::Model small_model(std::uint64_t seed, gnn::Arch arch) {
  Rng rng = Rng::seeded(seed);
  auto vocab = lexical::train_bpe(
      {"a b c d e f g h i j k l m n o p q r s t u v w x y z 0 1 2 3 "
       "= + - * / % < > ( ) , if goto return call"},
      64);
  Tensor E = Tensor::param({vocab.size(), 6}, rng, -0.5, 0.5);
  return model::make_model(std::move(vocab), E, arch, 2, 4, 8, 0.2, rng);
}

bool check_gradients(std::uint64_t seed) {
  mir::Program p = mir::parse_program(
      "method f(a,b){ x = a + b; L: x = x - 1; if x > 0 goto L; return x; }");
  for (gnn::Arch arch :
       {gnn::Arch::Gcn, gnn::Arch::Gin, gnn::Arch::Sage, gnn::Arch::Gat}) {
    model::Model m = small_model(seed, arch);
    auto g = depgraph::build_program_graph(p, m.lex);
    const Tensor X = g.X;
    auto loss_fn = [&]() {
      return sum(attention_readout(m.readout, m.stack.encode(g, X)));
    };

    std::vector<std::pair<std::string, Tensor>> params;
    m.stack.collect(params);
    m.readout.collect(params);
    for (auto& [name, t] : params) t.zero_grad();
    Tape tape;
    {
      TapeScope scope(tape);
      Tensor loss = loss_fn();
      backward(loss, tape);
    }
    auto eval = [&]() { return loss_fn().item(); };
    for (auto& [name, t] : params) {
      if (!t.has_grad()) return false;
      Tensor fd = finite_difference_gradient(eval, t);
      for (std::int64_t i = 0; i < t.size(); ++i) {
        const double a = t.grad()[i], b = fd.data()[i];
        const double rel = std::fabs(a - b) /
                           std::max(1.0, std::max(std::fabs(a), std::fabs(b)));
        if (!(rel < 1e-4)) return false;
      }
    }
  }
  return true;
}

bool check_dataflow_oracle(const corpora::DeskCorpora& c) {
  int checked = 0;
  for (const auto& r : c.pretrain)
    for (const auto& m : r.program.methods) {
      if (m.instructions.size() > 8) continue;
      if (depgraph::reaching_definitions(m) !=
          depgraph::reaching_definitions_oracle(m))
        return false;
      ++checked;
    }
  return checked > 0;
}

bool check_hop_oracle(const corpora::DeskCorpora& c) {
  int checked = 0;
  for (const auto& r : c.pretrain) {
    auto g = depgraph::build_program_graph(r.program);
    if (g.n_nodes > 10) continue;
    const std::int64_t n = g.n_nodes;
    const std::int64_t inf = 1 << 20;
    std::vector<std::vector<std::int64_t>> d(
        static_cast<std::size_t>(n),
        std::vector<std::int64_t>(static_cast<std::size_t>(n), inf));
    for (std::int64_t v = 0; v < n; ++v) d[v][v] = 0;
    for (const auto& e : g.edges) d[e.src][e.dst] = 1;
    for (std::int64_t k = 0; k < n; ++k)
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j)
          d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
    for (std::int64_t v = 0; v < n; ++v) {
      auto hops = pretrain::hop_distances(gnn::GraphRef(g), v);
      for (std::int64_t u = 0; u < n; ++u) {
        const std::int64_t want = d[v][u] >= inf ? -1 : d[v][u];
        if (hops[u] != want) return false;
      }
    }
    if (++checked >= 10) break;
  }
  return checked > 0;
}

bool check_invariance(std::uint64_t seed) {
  model::Model m = small_model(seed, gnn::Arch::Gat);
  mir::Program p = mir::parse_program(
      "method f(a){ x = a * 2; y = x + 3; z = y - a; return z; }");
  // instruction order must not move a single bit of the lexical embedding
  mir::Program q = p;
  auto& ins = q.methods[0].instructions;
  std::rotate(ins.begin(), ins.begin() + 2, ins.end());
  Tensor ep = lexical::lexical_embedding(m.lex, p);
  Tensor eq = lexical::lexical_embedding(m.lex, q);
  for (std::int64_t i = 0; i < ep.size(); ++i)
    if (ep.data()[i] != eq.data()[i]) return false;

  // node order must not move a single bit of the readout
  Rng rng = Rng::seeded(seed + 1);
  Tensor H = Tensor::param({6, 8}, rng, -1.0, 1.0);
  std::vector<double> rows(H.data(), H.data() + H.size());
  std::vector<std::int64_t> perm = {3, 0, 5, 1, 4, 2};
  Tensor Hp = Tensor::zeros({6, 8});
  for (std::int64_t v = 0; v < 6; ++v)
    for (std::int64_t k = 0; k < 8; ++k)
      Hp.data()[perm[v] * 8 + k] = rows[static_cast<std::size_t>(v * 8 + k)];
  Tensor r1 = gnn::attention_readout(m.readout, H);
  Tensor r2 = gnn::attention_readout(m.readout, Hp);
  for (std::int64_t i = 0; i < r1.size(); ++i)
    if (r1.data()[i] != r2.data()[i]) return false;
  return true;
}

bool check_checkpoint(std::uint64_t seed) {
  model::Model m = small_model(seed, gnn::Arch::Gin);
  const std::string text = model::save_checkpoint(m);
  model::Model back = model::load_checkpoint(text);
  return model::save_checkpoint(back) == text &&
         tasks::model_hash(back) == tasks::model_hash(m);
}

int cmd_selfcheck(const RunConfig& cfg) {
  auto c = corpora::generate_desk_corpora(cfg.seed);
  int failed = 0;
  auto report = [&](const char* name, bool ok) {
    std::printf("%s %s\n", ok ? "ok  " : "FAIL", name);
    if (!ok) ++failed;
  };
  report("gradients vs finite differences (4 architectures)",
         check_gradients(cfg.seed));
  report("reaching definitions vs path-enumeration oracle",
         check_dataflow_oracle(c));
  report("context hops vs all-pairs shortest-path oracle", check_hop_oracle(c));
  report("permutation invariance bit-exact (lexical, readout)",
         check_invariance(cfg.seed));
  report("checkpoint round trip byte-identical", check_checkpoint(cfg.seed));
  std::printf("selfcheck: %d/5 passed\n", 5 - failed);
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"dependence-aware code embeddings over the mini three-address "
               "IR"};
  app.require_subcommand(1);

  const auto gnn_ok = CLI::IsMember({"gcn", "gin", "sage", "gat"});
  const auto strat_ok = CLI::IsMember({"node", "context", "vgae", "none"});
  const auto mode_ok = CLI::IsMember({"both", "lexical", "dependence"});
  const auto task_ok = CLI::IsMember({"solution-class", "clone", "name-pred"});

  auto* gen = app.add_subcommand("gen-corpora",
                                 "write the deterministic desk corpora");
  gen->add_option("--out", cfg.out, "output directory")->required();
  gen->add_option("--seed", cfg.seed, "rng seed");

  auto* pre = app.add_subcommand("pretrain",
                                 "build an encoder and pre-train it");
  pre->add_option("--corpus", cfg.corpus, "JSONL corpus")->required();
  pre->add_option("--out", cfg.out, "checkpoint path")->required();
  pre->add_option("--strategy", cfg.strategy, "pre-training strategy")
      ->check(strat_ok);
  pre->add_option("--gnn", cfg.gnn, "gnn architecture")->check(gnn_ok);
  pre->add_option("--layers", cfg.layers, "gnn layer count");
  pre->add_option("--dropout", cfg.dropout, "dropout ratio");
  pre->add_option("--epochs", cfg.epochs, "pre-training epochs");
  pre->add_option("--seed", cfg.seed, "rng seed");

  auto* emb = app.add_subcommand("embed", "print the code embedding vector");
  emb->add_option("file", cfg.files, "program file")->expected(1);
  emb->add_option("--checkpoint", cfg.checkpoint, "model checkpoint")
      ->required();
  emb->add_option("--mode", cfg.mode, "embedding half to keep")->check(mode_ok);
  emb->add_option("--seed", cfg.seed, "rng seed");

  auto* fin = app.add_subcommand("finetune", "train a task head and evaluate");
  fin->add_option("--task", cfg.task, "downstream task")
      ->required()
      ->check(task_ok);
  fin->add_option("--corpus", cfg.corpus, "JSONL corpus")->required();
  fin->add_option("--checkpoint", cfg.checkpoint, "model checkpoint")
      ->required();
  fin->add_option("--mode", cfg.mode, "embedding half to keep")->check(mode_ok);
  fin->add_option("--epochs", cfg.epochs, "fine-tuning epochs");
  fin->add_option("--seed", cfg.seed, "rng seed");
  fin->add_option("--out", cfg.out, "metrics report JSON path");
  fin->add_option("--save-model", cfg.save_model, "fine-tuned checkpoint path");

  auto* prb = app.add_subcommand("probe",
                                 "train a linear probe on frozen embeddings");
  prb->add_option("--corpus", cfg.corpus, "JSONL corpus")->required();
  prb->add_option("--checkpoint", cfg.checkpoint, "model checkpoint")
      ->required();
  prb->add_option("--feature", cfg.feature, "feature slice")->check(mode_ok);
  prb->add_option("--epochs", cfg.epochs, "probe epochs");
  prb->add_option("--seed", cfg.seed, "rng seed");
  prb->add_option("--out", cfg.out, "probe report JSON path");

  auto* sim = app.add_subcommand("clone-sim",
                                 "cosine similarity of two programs");
  sim->add_option("files", cfg.files, "two program files")->expected(2);
  sim->add_option("--checkpoint", cfg.checkpoint, "model checkpoint")
      ->required();
  sim->add_option("--seed", cfg.seed, "rng seed");

  auto* chk = app.add_subcommand("selfcheck",
                                 "run the gradient and invariant oracle suite");
  chk->add_option("--seed", cfg.seed, "rng seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "depvec: %s\n", e.what());
    std::fprintf(stderr, "%s", app.help().c_str());
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  cfg.command = sub->get_name();
  if (!sub->count("--seed") && sub->get_option_no_throw("--seed")) {
    if (const char* env = std::getenv("DEPVEC_SEED")) {
      try {
        cfg.seed = std::stoull(env);
      } catch (const std::exception&) {
        std::fprintf(stderr, "depvec: DEPVEC_SEED is not an integer: %s\n",
                     env);
        return 2;
      }
    }
  }

  try {
    if (cfg.command == "gen-corpora") return cmd_gen_corpora(cfg);
    if (cfg.command == "pretrain") return cmd_pretrain(cfg);
    if (cfg.command == "embed") return cmd_embed(cfg);
    if (cfg.command == "finetune") return cmd_finetune(cfg);
    if (cfg.command == "probe") return cmd_probe(cfg);
    if (cfg.command == "clone-sim") return cmd_clone_sim(cfg);
    if (cfg.command == "selfcheck") return cmd_selfcheck(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "depvec: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
