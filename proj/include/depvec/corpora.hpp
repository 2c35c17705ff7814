#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "depvec/mir.hpp"

namespace depvec::corpora {

// deterministic desk-scale corpora in the JSON-Lines record format
struct DeskCorpora {
  std::vector<mir::Record> pretrain;   // unlabeled programs, >= 50
  std::vector<mir::Record> solution;   // label: one of 5 behavior classes
  std::vector<mir::Record> clones;     // group: clone triples + control singletons
  std::vector<mir::Record> names;      // label: the method name to predict
  std::vector<mir::Record> probe_token;      // label: identifier family
  std::vector<mir::Record> probe_structure;  // label: original vs shuffled

  const std::vector<mir::Record>& by_name(const std::string& name) const;
};

// every program parses; rename clones are checked graph-isomorphic to their
// source and structure mutants are checked token-multiset-preserving with a
// dependence graph that differs from the source
DeskCorpora generate_desk_corpora(std::uint64_t seed);

std::string to_jsonl(const std::vector<mir::Record>& records);

// writes pretrain/solution/clones/names/probe_token/probe_structure .jsonl
void write_corpora(const DeskCorpora& c, const std::string& dir);

}  // namespace depvec::corpora
