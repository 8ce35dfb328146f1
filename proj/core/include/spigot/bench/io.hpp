#pragma once

// File formats: CoNLL-like trees (index<TAB>form<TAB>head, blank line between
// sentences), JSON-lines datasets, and JSON score files. Parse errors throw
// std::invalid_argument naming the offending line.

#include <string>
#include <vector>

#include "spigot/decode.hpp"
#include "spigot/learn/trainer.hpp"

namespace spigot {

struct ConllSentence {
  std::vector<std::string> forms;
  DepTree tree;
};

std::string write_conll(const DepTree& tree, const std::vector<std::string>& forms = {});
std::vector<ConllSentence> read_conll(const std::string& text);

/// One object per line: {"id", "tokens", "heads"?, "arcs"?, "label"?}, with
/// arcs as [head, mod, label] triples.
std::string write_dataset_jsonl(const Dataset& data);
Dataset read_dataset_jsonl(const std::string& text, int vocab_size = 0);

/// Arc scores for one sentence. Either {"n": n, "scores": [...]} in indexer
/// order (root included, grouped by modifier) or {"matrix": [[...]]} with
/// matrix[head][mod] over nodes 0..n; optional "tokens" gives word forms.
struct ScoreRecord {
  ArcScores scores;
  std::vector<std::string> forms;
};

/// Accepts a single JSON object, a JSON array of objects, or JSON lines.
std::vector<ScoreRecord> read_score_records(const std::string& text);

/// Input of the projection command: {"n", "root"?, "labels"?, "values"}.
struct ProjectionInput {
  int n = 0;
  bool root = true;
  int labels = 0;
  std::vector<double> values;
};

ProjectionInput read_projection_input(const std::string& text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace spigot
