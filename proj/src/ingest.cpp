// SPDX-License-Identifier: Apache-2.0
#include "proctrack/ingest.hpp"

#include <cctype>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "proctrack/errors.hpp"

namespace proctrack {

using nlohmann::json;

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::vector<std::string> tokenize_text(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      tokens.push_back(std::string(1, static_cast<char>(std::tolower(c))));
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

int Vocab::id(const std::string& token) const {
  if (buckets <= 4) throw ValidationError("E_VOCAB", "vocab needs more than 4 buckets");
  return 4 + static_cast<int>(fnv1a(token) % static_cast<uint64_t>(buckets - 4));
}

std::vector<int> Vocab::ids(const std::string& text) const {
  std::vector<int> out;
  for (const auto& tok : tokenize_text(text)) out.push_back(id(tok));
  return out;
}

SplitStats compute_procedural_stats(const std::vector<ProceduralExample>& examples) {
  SplitStats s;
  s.paragraphs = static_cast<int>(examples.size());
  if (examples.empty()) return s;
  double ents = 0, sents = 0;
  for (const auto& ex : examples) {
    ents += static_cast<double>(ex.entities.size());
    sents += static_cast<double>(ex.sentences.size());
  }
  s.mean_entities = ents / s.paragraphs;
  s.mean_sentences = sents / s.paragraphs;
  return s;
}

SplitStats compute_story_stats(const std::vector<StoryPair>& pairs) {
  SplitStats s;
  s.paragraphs = static_cast<int>(pairs.size());
  if (pairs.empty()) return s;
  double ents = 0, sents = 0;
  for (const auto& p : pairs) {
    ents += (static_cast<double>(p.stories[0].entities.size()) +
             static_cast<double>(p.stories[1].entities.size())) /
            2.0;
    sents += (static_cast<double>(p.stories[0].sentences.size()) +
              static_cast<double>(p.stories[1].sentences.size())) /
             2.0;
  }
  s.mean_entities = ents / s.paragraphs;
  s.mean_sentences = sents / s.paragraphs;
  return s;
}

namespace {

[[noreturn]] void line_error(const std::string& path, size_t line, const std::string& msg) {
  throw ValidationError("E_PARSE", path + ":" + std::to_string(line) + ": " + msg);
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path,
                size_t line) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) line_error(path, line, "unknown key '" + it.key() + "'");
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("E_OPEN", "cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("E_OPEN", "cannot write " + path);
  return out;
}

// Best-effort character offsets: locate the span text (case-folded) inside
// the stated sentence, offset into the space-joined paragraph.
void fill_offsets(Span& span, int sent, const std::vector<std::string>& sentences) {
  span.begin = span.end = -1;
  if (sent < 0 || sent >= static_cast<int>(sentences.size())) return;
  const std::string hay = fold_case(sentences[sent]);
  const std::string needle = fold_case(span.text);
  const size_t pos = hay.find(needle);
  if (pos == std::string::npos) return;
  size_t base = 0;
  for (int i = 0; i < sent; ++i) base += sentences[i].size() + 1;
  span.begin = static_cast<int>(base + pos);
  span.end = static_cast<int>(base + pos + needle.size());
}

int sentence_of_span(const Span& span, const std::vector<std::string>& sentences) {
  const std::string needle = fold_case(span.text);
  for (size_t i = 0; i < sentences.size(); ++i)
    if (fold_case(sentences[i]).find(needle) != std::string::npos) return static_cast<int>(i);
  return -1;
}

EntityState state_from_json(const json& js, const std::vector<std::string>& sentences,
                            const std::string& path, size_t line) {
  if (!js.is_object()) line_error(path, line, "state must be an object");
  check_keys(js, {"tag", "span"}, path, line);
  const std::string tag = js.value("tag", "");
  if (tag == "none") {
    if (js.contains("span")) line_error(path, line, "'none' state cannot carry a span");
    return EntityState::nonexistence();
  }
  if (tag == "unknown") {
    if (js.contains("span")) line_error(path, line, "'unknown' state cannot carry a span");
    return EntityState::unknown();
  }
  if (tag == "loc") {
    if (!js.contains("span")) line_error(path, line, "'loc' state requires a span");
    const json& sp = js.at("span");
    check_keys(sp, {"text", "sent"}, path, line);
    Span span;
    span.text = sp.value("text", "");
    if (span.text.empty()) line_error(path, line, "span text must be nonempty");
    fill_offsets(span, sp.value("sent", -1), sentences);
    return EntityState::location(std::move(span));
  }
  line_error(path, line, "unknown state tag '" + tag + "'");
}

json state_to_json(const EntityState& st, const std::vector<std::string>& sentences) {
  json js;
  switch (st.tag) {
    case StateTag::NonExistence:
      js["tag"] = "none";
      break;
    case StateTag::UnknownLocation:
      js["tag"] = "unknown";
      break;
    case StateTag::Location:
      js["tag"] = "loc";
      js["span"] = {{"text", st.span->text}, {"sent", sentence_of_span(*st.span, sentences)}};
      break;
  }
  return js;
}

json example_to_json(const ProceduralExample& ex) {
  bool annotated = true;
  bool any_annotated = false;
  bool pseudo = true;
  bool any_pseudo = false;
  for (const auto& e : ex.entities) {
    annotated = annotated && e.annotated;
    any_annotated = any_annotated || e.annotated;
    pseudo = pseudo && e.pseudo;
    any_pseudo = any_pseudo || e.pseudo;
  }
  if (any_annotated && !annotated)
    throw ValidationError("E_MIXED_ANNOTATION",
                          "example '" + ex.para_id + "': entities mix annotated and unannotated");
  if (any_pseudo && !pseudo)
    throw ValidationError("E_MIXED_ANNOTATION",
                          "example '" + ex.para_id + "': entities mix pseudo and human labels");
  annotated = ex.entities.empty() || annotated;
  pseudo = !ex.entities.empty() && pseudo;
  json js;
  js["para_id"] = ex.para_id;
  js["sentences"] = ex.sentences;
  js["annotated"] = annotated;
  if (pseudo) js["pseudo"] = true;
  json ents = json::array();
  for (const auto& e : ex.entities) {
    json je;
    je["name"] = e.name;
    if (annotated) {
      json states = json::array();
      for (const auto& st : e.timeline.states) states.push_back(state_to_json(st, ex.sentences));
      je["states"] = states;
    }
    ents.push_back(je);
  }
  js["entities"] = ents;
  return js;
}

}  // namespace

ProceduralSplit load_procedural_jsonl(const std::string& path, const std::string& split_name) {
  auto in = open_input(path);
  ProceduralSplit split;
  split.name = split_name;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json js;
    try {
      js = json::parse(line);
    } catch (const json::exception& e) {
      line_error(path, lineno, std::string("bad JSON: ") + e.what());
    }
    check_keys(js, {"para_id", "sentences", "annotated", "pseudo", "entities"}, path, lineno);
    ProceduralExample ex;
    ex.para_id = js.value("para_id", "");
    if (ex.para_id.empty()) line_error(path, lineno, "para_id missing or empty");
    if (!js.contains("sentences") || !js["sentences"].is_array() || js["sentences"].empty())
      line_error(path, lineno, "sentences must be a nonempty array");
    for (const auto& s : js["sentences"]) ex.sentences.push_back(s.get<std::string>());
    const bool annotated = js.value("annotated", true);
    const bool pseudo = js.value("pseudo", false);
    if (pseudo && !annotated)
      line_error(path, lineno, "pseudo labels require annotated: true");
    for (const auto& je : js.value("entities", json::array())) {
      check_keys(je, {"name", "states"}, path, lineno);
      TrackedEntity ent;
      ent.name = je.value("name", "");
      ent.annotated = annotated;
      ent.pseudo = pseudo;
      if (annotated) {
        if (!je.contains("states")) line_error(path, lineno, "annotated entity lacks states");
        ent.timeline.entity = ent.name;
        for (const auto& jst : je["states"])
          ent.timeline.states.push_back(state_from_json(jst, ex.sentences, path, lineno));
        if (ent.timeline.states.size() != ex.sentences.size() + 1)
          line_error(path, lineno, "entity '" + ent.name + "' has " +
                                       std::to_string(ent.timeline.states.size()) +
                                       " states for " + std::to_string(ex.sentences.size()) +
                                       " sentences");
        try {
          ent.timeline.actions = derive_actions(ent.timeline.states);
        } catch (const ValidationError& e) {
          line_error(path, lineno, std::string("entity '") + ent.name + "': " + e.what());
        }
      } else if (je.contains("states")) {
        line_error(path, lineno, "unannotated example carries states");
      }
      ex.entities.push_back(std::move(ent));
    }
    try {
      validate_example(ex);
    } catch (const ValidationError& e) {
      line_error(path, lineno, e.what());
    }
    split.examples.push_back(std::move(ex));
  }
  split.stats = compute_procedural_stats(split.examples);
  return split;
}

void save_procedural_jsonl(const std::vector<ProceduralExample>& examples, const std::string& path) {
  auto out = open_output(path);
  for (const auto& ex : examples) out << example_to_json(ex).dump() << "\n";
  if (!out) throw IoError("E_WRITE", "failed writing " + path);
}

ProceduralSplit load_procedural_grid(const std::string& path, const std::string& split_name) {
  auto in = open_input(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  if (rows.size() < 2) throw ValidationError("E_PARSE", path + ": grid needs a header and at least one entity row");

  ProceduralExample ex;
  const auto slash = path.find_last_of('/');
  std::string stem = slash == std::string::npos ? path : path.substr(slash + 1);
  const auto dot = stem.find_last_of('.');
  ex.para_id = dot == std::string::npos ? stem : stem.substr(0, dot);

  const auto& header = rows[0];
  if (header.size() < 2) throw ValidationError("E_PARSE", path + ":1: header needs sentences");
  ex.sentences.assign(header.begin() + 1, header.end());
  const size_t n = ex.sentences.size();

  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() != n + 2)
      throw ValidationError("E_PARSE", path + ":" + std::to_string(r + 1) + ": expected " +
                                           std::to_string(n + 2) + " cells, got " +
                                           std::to_string(cells.size()));
    TrackedEntity ent;
    ent.name = cells[0];
    ent.timeline.entity = ent.name;
    for (size_t i = 1; i < cells.size(); ++i) {
      const std::string& c = cells[i];
      if (c == "-") {
        ent.timeline.states.push_back(EntityState::nonexistence());
      } else if (c == "?") {
        ent.timeline.states.push_back(EntityState::unknown());
      } else {
        Span span;
        span.text = c;
        const int sent = sentence_of_span(span, ex.sentences);
        fill_offsets(span, sent, ex.sentences);
        ent.timeline.states.push_back(EntityState::location(std::move(span)));
      }
    }
    ent.timeline.actions = derive_actions(ent.timeline.states);
    ex.entities.push_back(std::move(ent));
  }
  validate_example(ex);

  ProceduralSplit split;
  split.name = split_name;
  split.examples.push_back(std::move(ex));
  split.stats = compute_procedural_stats(split.examples);
  return split;
}

namespace {

StoryEntityStates story_entity_from_json(const json& je, const std::string& path, size_t line) {
  check_keys(je, {"name", "pre", "eff"}, path, line);
  StoryEntityStates ent;
  ent.name = je.value("name", "");
  if (ent.name.empty()) line_error(path, line, "story entity name missing");
  for (const auto& row : je.value("pre", json::array()))
    ent.pre.push_back(row.get<std::vector<int>>());
  for (const auto& row : je.value("eff", json::array()))
    ent.eff.push_back(row.get<std::vector<int>>());
  return ent;
}

json story_entity_to_json(const StoryEntityStates& ent) {
  return json{{"name", ent.name}, {"pre", ent.pre}, {"eff", ent.eff}};
}

}  // namespace

StorySplit load_story_jsonl(const std::string& path, const std::string& split_name) {
  auto in = open_input(path);
  StorySplit split;
  split.name = split_name;
  std::string line;
  size_t lineno = 0;

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json js;
    try {
      js = json::parse(line);
    } catch (const json::exception& e) {
      line_error(path, lineno, std::string("bad JSON: ") + e.what());
    }
    if (split.attributes.empty() && js.contains("attributes")) {
      check_keys(js, {"attributes"}, path, lineno);
      for (const auto& ja : js["attributes"]) {
        check_keys(ja, {"name", "labels"}, path, lineno);
        AttributeDef def{ja.value("name", ""), ja.value("labels", 0)};
        if (def.name.empty() || def.labels < 2)
          line_error(path, lineno, "attribute needs a name and >= 2 labels");
        split.attributes.push_back(std::move(def));
      }
      if (split.attributes.empty()) line_error(path, lineno, "empty attribute registry");
      continue;
    }
    if (split.attributes.empty())
      line_error(path, lineno, "first line must declare the attribute registry");

    check_keys(js, {"pair_id", "stories", "plausible", "conflict", "entities"}, path, lineno);
    StoryPair pair;
    pair.pair_id = js.value("pair_id", "");
    if (pair.pair_id.empty()) line_error(path, lineno, "pair_id missing");
    if (!js.contains("stories") || js["stories"].size() != 2)
      line_error(path, lineno, "stories must hold exactly two sentence lists");
    for (int s = 0; s < 2; ++s)
      for (const auto& sent : js["stories"][s]) pair.stories[s].sentences.push_back(sent.get<std::string>());
    pair.plausible_index = js.value("plausible", -1);
    if (!js.contains("conflict") || js["conflict"].size() != 2)
      line_error(path, lineno, "conflict must be [c1, c2]");
    pair.conflict_c1 = js["conflict"][0].get<int>();
    pair.conflict_c2 = js["conflict"][1].get<int>();
    if (!js.contains("entities") || js["entities"].size() != 2)
      line_error(path, lineno, "entities must hold per-story lists");
    for (int s = 0; s < 2; ++s)
      for (const auto& je : js["entities"][s])
        pair.stories[s].entities.push_back(story_entity_from_json(je, path, lineno));
    try {
      validate_story_pair(pair, split.attributes);
    } catch (const ValidationError& e) {
      line_error(path, lineno, e.what());
    }
    split.pairs.push_back(std::move(pair));
  }
  if (split.attributes.empty())
    throw ValidationError("E_PARSE", path + ": missing attribute registry header");
  split.stats = compute_story_stats(split.pairs);
  return split;
}

void save_story_jsonl(const StorySplit& split, const std::string& path) {
  auto out = open_output(path);
  json header;
  header["attributes"] = json::array();
  for (const auto& a : split.attributes)
    header["attributes"].push_back({{"name", a.name}, {"labels", a.labels}});
  out << header.dump() << "\n";
  for (const auto& pair : split.pairs) {
    json js;
    js["pair_id"] = pair.pair_id;
    js["stories"] = {pair.stories[0].sentences, pair.stories[1].sentences};
    js["plausible"] = pair.plausible_index;
    js["conflict"] = {pair.conflict_c1, pair.conflict_c2};
    json ents = json::array();
    for (int s = 0; s < 2; ++s) {
      json se = json::array();
      for (const auto& ent : pair.stories[s].entities) se.push_back(story_entity_to_json(ent));
      ents.push_back(se);
    }
    js["entities"] = ents;
    out << js.dump() << "\n";
  }
  if (!out) throw IoError("E_WRITE", "failed writing " + path);
}

uint64_t dataset_hash(const std::vector<ProceduralExample>& examples) {
  std::string buf;
  for (const auto& ex : examples) {
    buf += example_to_json(ex).dump();
    buf += '\n';
  }
  return fnv1a(buf);
}

uint64_t dataset_hash(const StorySplit& split) {
  std::string buf;
  for (const auto& a : split.attributes) buf += a.name + ":" + std::to_string(a.labels) + ";";
  for (const auto& pair : split.pairs) {
    json js;
    js["pair_id"] = pair.pair_id;
    js["stories"] = {pair.stories[0].sentences, pair.stories[1].sentences};
    js["plausible"] = pair.plausible_index;
    js["conflict"] = {pair.conflict_c1, pair.conflict_c2};
    buf += js.dump();
    buf += '\n';
  }
  return fnv1a(buf);
}

bool structurally_equal(const ProceduralExample& a, const ProceduralExample& b) {
  if (a.para_id != b.para_id || a.sentences != b.sentences ||
      a.entities.size() != b.entities.size())
    return false;
  for (size_t i = 0; i < a.entities.size(); ++i) {
    const auto &ea = a.entities[i], &eb = b.entities[i];
    if (ea.name != eb.name || ea.annotated != eb.annotated || ea.pseudo != eb.pseudo)
      return false;
    if (ea.timeline.actions != eb.timeline.actions) return false;
    if (ea.timeline.states.size() != eb.timeline.states.size()) return false;
    for (size_t t = 0; t < ea.timeline.states.size(); ++t) {
      const auto &sa = ea.timeline.states[t], &sb = eb.timeline.states[t];
      if (sa.tag != sb.tag) return false;
      if (sa.tag == StateTag::Location && sa.span->text != sb.span->text) return false;
    }
  }
  return true;
}

bool structurally_equal(const StorySplit& a, const StorySplit& b) {
  if (a.attributes.size() != b.attributes.size() || a.pairs.size() != b.pairs.size()) return false;
  for (size_t i = 0; i < a.attributes.size(); ++i)
    if (a.attributes[i].name != b.attributes[i].name ||
        a.attributes[i].labels != b.attributes[i].labels)
      return false;
  for (size_t i = 0; i < a.pairs.size(); ++i) {
    const auto &pa = a.pairs[i], &pb = b.pairs[i];
    if (pa.pair_id != pb.pair_id || pa.plausible_index != pb.plausible_index ||
        pa.conflict_c1 != pb.conflict_c1 || pa.conflict_c2 != pb.conflict_c2)
      return false;
    for (int s = 0; s < 2; ++s) {
      if (pa.stories[s].sentences != pb.stories[s].sentences) return false;
      if (pa.stories[s].entities.size() != pb.stories[s].entities.size()) return false;
      for (size_t e = 0; e < pa.stories[s].entities.size(); ++e) {
        const auto &ea = pa.stories[s].entities[e], &eb = pb.stories[s].entities[e];
        if (ea.name != eb.name || ea.pre != eb.pre || ea.eff != eb.eff) return false;
      }
    }
  }
  return true;
}

}  // namespace proctrack
