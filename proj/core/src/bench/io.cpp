#include "spigot/bench/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace spigot {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(int line, const std::string& msg) {
  throw std::invalid_argument("line " + std::to_string(line) + ": " + msg);
}

std::vector<std::string> split_tabs(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, '\t')) out.push_back(cur);
  return out;
}

int parse_int(const std::string& s, int line, const char* what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(line, std::string("bad ") + what + " '" + s + "'");
  }
}

ScoreRecord record_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("score record must be a JSON object");
  std::vector<std::string> forms;
  if (j.contains("tokens")) {
    for (const auto& t : j.at("tokens")) forms.push_back(t.is_string() ? t.get<std::string>() : t.dump());
  }
  if (j.contains("matrix")) {
    const auto m = j.at("matrix").get<std::vector<std::vector<double>>>();
    const int n = static_cast<int>(m.size()) - 1;
    if (n < 1) throw std::invalid_argument("score matrix needs at least 2 rows (root plus one word)");
    for (const auto& row : m) {
      if (row.size() != m.size()) throw std::invalid_argument("score matrix must be square (n+1 by n+1)");
    }
    const ArcIndexer idx(n, true);
    std::vector<double> v(idx.size());
    for (std::size_t k = 0; k < v.size(); ++k) {
      const Arc a = idx.arc(k);
      v[k] = m[static_cast<std::size_t>(a.head)][static_cast<std::size_t>(a.mod)];
    }
    if (!forms.empty() && static_cast<int>(forms.size()) != n) throw std::invalid_argument("tokens length differs from n");
    return {ArcScores(idx, std::move(v)), std::move(forms)};
  }
  const int n = j.at("n").get<int>();
  if (n < 1) throw std::invalid_argument("n must be positive");
  const ArcIndexer idx(n, true);
  auto v = j.at("scores").get<std::vector<double>>();
  if (v.size() != idx.size()) {
    throw std::invalid_argument("expected " + std::to_string(idx.size()) + " scores for n = " + std::to_string(n) +
                                ", got " + std::to_string(v.size()));
  }
  if (!forms.empty() && static_cast<int>(forms.size()) != n) throw std::invalid_argument("tokens length differs from n");
  return {ArcScores(idx, std::move(v)), std::move(forms)};
}

}  // namespace

std::string write_conll(const DepTree& tree, const std::vector<std::string>& forms) {
  std::ostringstream out;
  for (int j = 1; j <= tree.length(); ++j) {
    const std::string form = forms.empty() ? "_" : forms.at(static_cast<std::size_t>(j - 1));
    out << j << '\t' << form << '\t' << tree.head(j) << '\n';
  }
  out << '\n';
  return out.str();
}

std::vector<ConllSentence> read_conll(const std::string& text) {
  std::vector<ConllSentence> out;
  std::vector<std::string> forms;
  std::vector<int> heads;
  int start = 0;
  auto flush = [&](int line) {
    if (heads.empty()) return;
    const std::string why = tree_violation(heads);
    if (!why.empty()) fail(start, "sentence ending at line " + std::to_string(line) + " is not a tree: " + why);
    out.push_back({forms, DepTree(heads)});
    forms.clear();
    heads.clear();
  };
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (raw.empty()) {
      flush(line);
      continue;
    }
    if (raw[0] == '#') continue;
    const auto cols = split_tabs(raw);
    if (cols.size() < 3) fail(line, "expected index<TAB>form<TAB>head");
    if (heads.empty()) start = line;
    const int index = parse_int(cols[0], line, "index");
    if (index != static_cast<int>(heads.size()) + 1) fail(line, "token index out of sequence");
    forms.push_back(cols[1]);
    heads.push_back(parse_int(cols[2], line, "head"));
  }
  flush(line + 1);
  return out;
}

std::string write_dataset_jsonl(const Dataset& data) {
  std::string out;
  for (const auto& inst : data) {
    nlohmann::ordered_json j;
    j["id"] = inst.id;
    j["tokens"] = inst.tokens;
    if (inst.gold_tree) j["heads"] = inst.gold_tree->heads();
    if (inst.gold_graph) {
      json arcs = json::array();
      for (const auto& a : inst.gold_graph->arcs()) arcs.push_back({a.head, a.mod, a.label});
      j["arcs"] = arcs;
    }
    if (inst.end_label) j["label"] = *inst.end_label;
    out += j.dump();
    out += '\n';
  }
  return out;
}

Dataset read_dataset_jsonl(const std::string& text, int vocab_size) {
  Dataset out;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(raw);
      SentenceInstance inst;
      inst.id = j.value("id", static_cast<int>(out.size()));
      inst.tokens = j.at("tokens").get<std::vector<int>>();
      const int n = inst.length();
      if (j.contains("heads")) inst.gold_tree = DepTree(j.at("heads").get<std::vector<int>>());
      if (j.contains("arcs")) {
        std::vector<LabeledArc> arcs;
        for (const auto& a : j.at("arcs")) {
          const auto t = a.get<std::vector<int>>();
          if (t.size() != 3) throw std::invalid_argument("arcs must be [head, mod, label] triples");
          arcs.push_back({t[0], t[1], t[2]});
        }
        inst.gold_graph = SemGraph(n, std::move(arcs));
      }
      if (j.contains("label")) inst.end_label = j.at("label").get<int>();
      if (vocab_size > 0) inst.validate(vocab_size);
      else if (n < 1) throw std::invalid_argument("empty sentence");
      if (inst.gold_tree && inst.gold_tree->length() != n) throw std::invalid_argument("heads length differs from tokens");
      out.push_back(std::move(inst));
    } catch (const json::exception& e) {
      fail(line, e.what());
    } catch (const std::invalid_argument& e) {
      fail(line, e.what());
    }
  }
  return out;
}

std::vector<ScoreRecord> read_score_records(const std::string& text) {
  std::vector<ScoreRecord> out;
  auto add = [&](const json& j, int line) {
    try {
      out.push_back(record_from_json(j));
    } catch (const json::exception& e) {
      fail(line, e.what());
    } catch (const std::invalid_argument& e) {
      fail(line, e.what());
    }
  };
  try {
    const json whole = json::parse(text);
    if (whole.is_array()) {
      for (const auto& j : whole) add(j, 1);
    } else {
      add(whole, 1);
    }
    return out;
  } catch (const json::parse_error&) {
    // Fall through to JSON lines.
  }
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(raw);
    } catch (const json::parse_error& e) {
      fail(line, e.what());
    }
    add(j, line);
  }
  if (out.empty()) throw std::invalid_argument("no score records found");
  return out;
}

ProjectionInput read_projection_input(const std::string& text) {
  try {
    const json j = json::parse(text);
    ProjectionInput p;
    p.n = j.at("n").get<int>();
    p.root = j.value("root", true);
    p.labels = j.value("labels", 0);
    p.values = j.at("values").get<std::vector<double>>();
    if (p.n < 1) throw std::invalid_argument("n must be positive");
    for (double v : p.values) {
      if (!std::isfinite(v)) throw std::invalid_argument("values must be finite");
    }
    return p;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("projection input: ") + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace spigot
