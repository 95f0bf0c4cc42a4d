/* Copyright 2026 The dialearn Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dialearn/embedding.hpp"
#include "dialearn/error.hpp"
#include "dialearn/task.hpp"

namespace dialearn {

struct ParserConfig {
  std::size_t k = 10;          // neighbours consulted per chunk
  std::size_t max_chunk = 4;   // longest span considered, in words
  double null_score = 0.05;    // score of the "no concept" reading of a span
  double reject_decay = 0.5;   // multiplier applied to a rejected coefficient
  SimilarityKind similarity = SimilarityKind::cosine;
};

// Half-open word interval [start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool overlaps(const Span& o) const { return start < o.end && o.start < end; }
  auto operator<=>(const Span&) const = default;
};

//------------------------------------------------------------------------------
// Knowledge base: lexical chunk exemplars with per-pattern coefficients.

struct KbRow {
  std::string chunk;
  Vec vector;
  std::map<std::string, double> coefficients;  // pattern -> [0,1]
};

class KnowledgeBase {
 public:
  KnowledgeBase(std::shared_ptr<const EmbeddingTable> embeddings, std::set<std::string> patterns)
      : emb_(std::move(embeddings)), patterns_(std::move(patterns)) {
    if (!emb_) fail("knowledge base needs an embedding table");
  }

  // Seeds one row per lexical form and per value name, coefficient 1 on its
  // own pattern.
  static KnowledgeBase from_task(const TaskSpec& task, std::shared_ptr<const EmbeddingTable> emb) {
    std::set<std::string> patterns;
    for (const auto& p : task.ontology.patterns()) patterns.insert(p.str());
    KnowledgeBase kb(std::move(emb), std::move(patterns));
    for (const auto& [pattern, forms] : task.ontology.lexicon)
      for (const auto& form : forms) kb.set_coefficient(form, pattern, 1.0);
    for (const auto& p : task.ontology.patterns())
      if (p.acttype == kValueActtype) kb.set_coefficient(*p.value, p.str(), 1.0);
    return kb;
  }

  const EmbeddingTable& embeddings() const { return *emb_; }
  std::shared_ptr<const EmbeddingTable> embeddings_ptr() const { return emb_; }
  const std::set<std::string>& patterns() const { return patterns_; }
  bool knows_pattern(const std::string& p) const { return patterns_.count(p) > 0; }

  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  const KbRow& row(std::size_t i) const { return rows_.at(i); }
  const std::vector<std::pair<std::size_t, Vec>>& indexed_vectors() const { return index_; }

  std::optional<std::size_t> find(const std::string& chunk) const {
    auto it = by_chunk_.find(chunk);
    if (it == by_chunk_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t find_or_insert(const std::string& chunk) {
    if (auto i = find(chunk)) return *i;
    auto tokens = tokenize(chunk);
    if (tokens.empty()) fail("knowledge base chunk must not be empty");
    const std::string canon = join(tokens);
    if (auto i = find(canon)) return *i;
    KbRow r{canon, emb_->embed_chunk(tokens), {}};
    index_.emplace_back(rows_.size(), r.vector);
    rows_.push_back(std::move(r));
    by_chunk_[canon] = rows_.size() - 1;
    return rows_.size() - 1;
  }

  void set_coefficient(const std::string& chunk, const std::string& pattern, double c) {
    set_coefficient(find_or_insert(chunk), pattern, c);
  }

  void set_coefficient(std::size_t row, const std::string& pattern, double c) {
    if (!knows_pattern(pattern)) fail("unknown DA pattern '", pattern, "'");
    rows_.at(row).coefficients[pattern] = std::clamp(c, 0.0, 1.0);
  }

  void clear_coefficients(std::size_t row) {
    for (auto& [p, c] : rows_.at(row).coefficients) c = 0.0;
  }

  // Same chunks with the same coefficients; vectors are derived data.
  bool same_content(const KnowledgeBase& o) const {
    if (rows_.size() != o.rows_.size()) return false;
    for (std::size_t i = 0; i < rows_.size(); ++i)
      if (rows_[i].chunk != o.rows_[i].chunk || rows_[i].coefficients != o.rows_[i].coefficients)
        return false;
    return true;
  }

 private:
  std::shared_ptr<const EmbeddingTable> emb_;
  std::set<std::string> patterns_;
  std::vector<KbRow> rows_;
  std::vector<std::pair<std::size_t, Vec>> index_;
  std::unordered_map<std::string, std::size_t> by_chunk_;
};

//------------------------------------------------------------------------------
// Chunk scoring

struct Candidate {
  std::string pattern;
  double score = 0.0;
};

// score(d) = sum over the k nearest rows of similarity * coefficient[d],
// floored at 0, sorted descending (ties by pattern).
inline std::vector<Candidate> score_vector(const KnowledgeBase& kb, const Vec& query,
                                           const ParserConfig& cfg) {
  if (kb.empty()) return {};
  auto nn = knn(query, kb.indexed_vectors(), cfg.k, cfg.similarity);
  std::map<std::string, double> acc;
  for (const auto& n : nn)
    for (const auto& [pattern, c] : kb.row(n.id).coefficients) acc[pattern] += n.similarity * c;
  std::vector<Candidate> out;
  out.reserve(acc.size());
  for (const auto& [pattern, s] : acc) out.push_back({pattern, std::max(0.0, s)});
  std::stable_sort(out.begin(), out.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  return out;
}

inline std::vector<Candidate> score_chunk(const KnowledgeBase& kb,
                                          std::span<const std::string> chunk,
                                          const ParserConfig& cfg = {}) {
  if (chunk.empty()) fail("cannot score an empty chunk");
  if (kb.empty()) return {};
  return score_vector(kb, kb.embeddings().embed_chunk(chunk), cfg);
}

//------------------------------------------------------------------------------
// Lattice

struct Arc {
  Span span;
  std::string chunk;
  std::vector<Candidate> candidates;  // concept readings, best first

  // Best reading including the null concept; empty pattern means null.
  Candidate best(double null_score) const {
    if (!candidates.empty() && candidates.front().score > null_score) return candidates.front();
    return {"", null_score};
  }
};

struct ChunkLattice {
  std::size_t n_words = 0;
  std::vector<Arc> arcs;  // ordered by length, then start

  const Arc& arc(std::size_t start, std::size_t end) const {
    // arcs of length l start at offset sum_{m<l}(n - m + 1).
    std::size_t len = end - start, offset = 0;
    for (std::size_t m = 1; m < len; ++m) offset += n_words - m + 1;
    return arcs.at(offset + start);
  }
};

inline ChunkLattice build_lattice(const KnowledgeBase& kb, std::span<const std::string> words,
                                  const ParserConfig& cfg = {}) {
  if (cfg.max_chunk == 0) fail("max_chunk must be >= 1");
  ChunkLattice lat;
  lat.n_words = words.size();
  for (std::size_t len = 1; len <= std::min(cfg.max_chunk, words.size()); ++len)
    for (std::size_t s = 0; s + len <= words.size(); ++s) {
      auto chunk = words.subspan(s, len);
      lat.arcs.push_back({{s, s + len}, join(chunk), score_chunk(kb, chunk, cfg)});
    }
  return lat;
}

//------------------------------------------------------------------------------
// Decoding

struct HypothesisDA {
  DialogueAct act;
  Span span;
  double score = 0.0;
};

struct SemanticHypothesis {
  std::vector<HypothesisDA> das;
  double confidence = 0.0;
  double path_score = 0.0;
  std::size_t n_arcs = 0;

  std::vector<DialogueAct> acts() const {
    std::vector<DialogueAct> out;
    for (const auto& d : das) out.push_back(d.act);
    return out;
  }
};

// Best path over the lattice. The path score is the sum of arc scores,
// accumulated right to left; ties prefer fewer arcs, then a longer leftmost arc.
inline SemanticHypothesis decode_lattice(const ChunkLattice& lat, const ParserConfig& cfg = {}) {
  const std::size_t n = lat.n_words;
  SemanticHypothesis h;
  if (n == 0) return h;

  struct Cell {
    double score = 0.0;
    std::size_t arcs = 0;
    std::size_t next = 0;
  };
  std::vector<Cell> best(n + 1);
  for (std::size_t i = n; i-- > 0;) {
    bool have = false;
    for (std::size_t len = 1; len <= std::min(cfg.max_chunk, n - i); ++len) {
      const std::size_t j = i + len;
      const double s = lat.arc(i, j).best(cfg.null_score).score + best[j].score;
      const std::size_t a = 1 + best[j].arcs;
      if (!have || s > best[i].score || (s == best[i].score && a <= best[i].arcs)) {
        best[i] = {s, a, j};
        have = true;
      }
    }
  }

  h.path_score = best[0].score;
  h.n_arcs = best[0].arcs;
  double conf_sum = 0.0;
  for (std::size_t i = 0; i < n; i = best[i].next) {
    const Arc& arc = lat.arc(i, best[i].next);
    Candidate c = arc.best(cfg.null_score);
    if (c.pattern.empty()) continue;
    h.das.push_back({parse_act(c.pattern), arc.span, c.score});
    conf_sum += std::min(1.0, c.score);
  }
  if (!h.das.empty()) h.confidence = conf_sum / static_cast<double>(h.das.size());
  return h;
}

inline SemanticHypothesis decode(const KnowledgeBase& kb, std::span<const std::string> words,
                                 const ParserConfig& cfg = {}) {
  return decode_lattice(build_lattice(kb, words, cfg), cfg);
}

//------------------------------------------------------------------------------
// Annotation feedback

enum class AnnotationMode { confirm, full };

struct AnnotationItem {
  Span span;
  DialogueAct act;
  bool accepted = true;
};

namespace detail {

inline void check_spans(std::vector<Span> spans, std::size_t n_words) {
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (spans[i].start >= spans[i].end || spans[i].end > n_words)
      fail("annotation span [", spans[i].start, ",", spans[i].end, ") outside a ", n_words,
           "-word utterance");
    if (i && spans[i - 1].overlaps(spans[i]))
      fail("annotation spans [", spans[i - 1].start, ",", spans[i - 1].end, ") and [",
           spans[i].start, ",", spans[i].end, ") overlap");
  }
}

}  // namespace detail

// Validates without touching the knowledge base. Accepted spans must not
// overlap each other, nor may rejected ones; an accepted and a rejected item
// may share a span (a correction).
inline void validate_annotation(const KnowledgeBase& kb, std::span<const std::string> words,
                                std::span<const AnnotationItem> items) {
  std::vector<Span> acc, rej;
  for (const auto& it : items) {
    (it.accepted ? acc : rej).push_back(it.span);
    if (!kb.knows_pattern(it.act.str()))
      fail("annotation uses unknown dialogue act '", it.act.str(), "'");
  }
  detail::check_spans(std::move(acc), words.size());
  detail::check_spans(std::move(rej), words.size());
}

// Confirmed (span, act): the chunk's row gets coefficient 1 on the act (full
// mode also zeroes the row's other coefficients). Rejected (span, act): the
// coefficient is decayed on the chunk's own row, or on the neighbour that
// contributed most to that act when the chunk has no row.
inline void apply_annotation_in_place(KnowledgeBase& kb, std::span<const std::string> words,
                                      std::span<const AnnotationItem> items, AnnotationMode mode,
                                      const ParserConfig& cfg = {}) {
  validate_annotation(kb, words, items);
  for (const auto& it : items) {
    if (it.accepted) continue;
    const std::string pattern = it.act.str();
    auto chunk = words.subspan(it.span.start, it.span.length());
    std::optional<std::size_t> target = kb.find(join(chunk));
    if (!target) {
      double best = 0.0;
      for (const auto& n : knn(kb.embeddings().embed_chunk(chunk), kb.indexed_vectors(), cfg.k,
                               cfg.similarity)) {
        const auto& coeffs = kb.row(n.id).coefficients;
        auto c = coeffs.find(pattern);
        if (c == coeffs.end()) continue;
        if (double contrib = n.similarity * c->second; contrib > best) {
          best = contrib;
          target = n.id;
        }
      }
    }
    if (!target) continue;
    const auto& coeffs = kb.row(*target).coefficients;
    if (auto c = coeffs.find(pattern); c != coeffs.end())
      kb.set_coefficient(*target, pattern, c->second * cfg.reject_decay);
  }
  for (const auto& it : items) {
    if (!it.accepted) continue;
    std::size_t row = kb.find_or_insert(join(words.subspan(it.span.start, it.span.length())));
    if (mode == AnnotationMode::full) kb.clear_coefficients(row);
    kb.set_coefficient(row, it.act.str(), 1.0);
  }
}

inline KnowledgeBase apply_annotation(const KnowledgeBase& kb, std::span<const std::string> words,
                                      std::span<const AnnotationItem> items, AnnotationMode mode,
                                      const ParserConfig& cfg = {}) {
  KnowledgeBase out = kb;
  apply_annotation_in_place(out, words, items, mode, cfg);
  return out;
}

//------------------------------------------------------------------------------
// Quality features for the policy state

struct QualityFeatures {
  double confidence = 0.0;
  double fertility = 0.0;
  bool rare = false;
};

inline QualityFeatures quality_features(const SemanticHypothesis& h, std::size_t n_words) {
  QualityFeatures q;
  if (h.das.empty()) return q;
  if (n_words == 0) fail("a non-empty hypothesis needs n_words >= 1");
  q.confidence = std::clamp(h.confidence, 0.0, 1.0);
  q.fertility = std::clamp(static_cast<double>(h.das.size()) / static_cast<double>(n_words), 0.0, 1.0);
  q.rare = std::any_of(h.das.begin(), h.das.end(),
                       [](const HypothesisDA& d) { return rare_acttypes().count(d.act.acttype) > 0; });
  return q;
}

// 0 all clear, 1 average condition, 2 alarming.
inline int inform_zssp(const QualityFeatures& f) {
  if (f.confidence < 0.5 || f.fertility > 0.7 || f.rare) return 2;
  if (f.confidence >= 0.6 && f.fertility <= 0.2) return 0;
  return 1;
}

//------------------------------------------------------------------------------
// Persistence: header line, then one {chunk, coefficients} object per row.

inline constexpr int kKbFormatVersion = 1;

inline void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(Error::Kind::io, "cannot write knowledge base '", path.string(), "'");
  out << nlohmann::json{{"format", "dialearn-kb"}, {"version", kKbFormatVersion},
                        {"patterns", kb.patterns()}}
             .dump()
      << '\n';
  for (std::size_t i = 0; i < kb.size(); ++i) {
    nlohmann::json row{{"chunk", kb.row(i).chunk}, {"coefficients", kb.row(i).coefficients}};
    out << row.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict) << '\n';
  }
}

inline KnowledgeBase load_kb(const std::filesystem::path& path,
                             std::shared_ptr<const EmbeddingTable> emb) {
  std::ifstream in(path);
  if (!in) fail(Error::Kind::not_found, "cannot open knowledge base '", path.string(), "'");
  std::string line;
  if (!std::getline(in, line)) fail(Error::Kind::format, "knowledge base '", path.string(), "' is empty");
  try {
    auto head = nlohmann::json::parse(line);
    if (head.value("format", "") != "dialearn-kb")
      fail(Error::Kind::format, "'", path.string(), "' is not a knowledge base file");
    if (head.at("version").get<int>() != kKbFormatVersion)
      fail(Error::Kind::format, "knowledge base '", path.string(), "' has version ",
           head.at("version").dump(), ", expected ", kKbFormatVersion);
    KnowledgeBase kb(std::move(emb), head.at("patterns").get<std::set<std::string>>());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      std::size_t r = kb.find_or_insert(j.at("chunk").get<std::string>());
      for (const auto& [p, c] : j.at("coefficients").items()) {
        const double v = c.get<double>();
        if (v < 0.0 || v > 1.0)
          fail(Error::Kind::format, path.string(), ":", lineno, ": coefficient ", v, " outside [0,1]");
        kb.set_coefficient(r, p, v);
      }
    }
    return kb;
  } catch (const nlohmann::json::exception& ex) {
    fail(Error::Kind::format, "corrupt knowledge base '", path.string(), "': ", ex.what());
  }
}

}  // namespace dialearn
