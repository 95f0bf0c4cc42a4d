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
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dialearn/error.hpp"
#include "dialearn/task.hpp"

namespace dialearn {

using Vec = std::vector<double>;

// Splits on runs of ASCII whitespace.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string join(std::span<const std::string> words, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

enum class OovPolicy { zero, hash_random };
enum class SimilarityKind { cosine, dot };

class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 50, OovPolicy oov = OovPolicy::hash_random)
      : dim_(dim), oov_(oov) {
    if (dim == 0) fail("embedding dimension must be >= 1");
  }

  std::size_t dim() const { return dim_; }
  OovPolicy oov_policy() const { return oov_; }
  std::size_t size() const { return vectors_.size(); }
  bool contains(const std::string& token) const { return vectors_.count(token) > 0; }

  void set(const std::string& token, Vec v) {
    if (v.size() != dim_)
      fail("vector for '", token, "' has length ", v.size(), ", table dimension is ", dim_);
    vectors_[token] = std::move(v);
  }

  Vec embed_word(const std::string& token) const {
    if (auto it = vectors_.find(token); it != vectors_.end()) return it->second;
    if (oov_ == OovPolicy::zero) return Vec(dim_, 0.0);
    // FNV-1a keeps the OOV vector stable across runs and platforms.
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : token) {
      h ^= c;
      h *= 1099511628211ull;
    }
    std::mt19937_64 rng(h);
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(dim_)));
    Vec v(dim_);
    for (auto& x : v) x = n(rng);
    return v;
  }

  Vec embed_chunk(std::span<const std::string> tokens) const {
    if (tokens.empty()) fail("cannot embed an empty chunk");
    Vec acc(dim_, 0.0);
    for (const auto& t : tokens) {
      Vec w = embed_word(t);
      for (std::size_t i = 0; i < dim_; ++i) acc[i] += w[i];
    }
    for (auto& x : acc) x /= static_cast<double>(tokens.size());
    return acc;
  }

  // Sorted token list; keeps file output stable.
  std::vector<std::string> tokens() const {
    std::vector<std::string> out;
    out.reserve(vectors_.size());
    for (const auto& [t, v] : vectors_) out.push_back(t);
    std::sort(out.begin(), out.end());
    return out;
  }

  const Vec& at(const std::string& token) const { return vectors_.at(token); }

 private:
  std::size_t dim_;
  OovPolicy oov_;
  std::unordered_map<std::string, Vec> vectors_;
};

inline double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

// Cosine similarity; a zero operand gives 0.
inline double similarity(std::span<const double> u, std::span<const double> v,
                         SimilarityKind kind = SimilarityKind::cosine) {
  if (u.size() != v.size()) fail("similarity of vectors with dims ", u.size(), " and ", v.size());
  double d = dot(u, v);
  if (kind == SimilarityKind::dot) return d;
  double nu = norm(u), nv = norm(v);
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(d / (nu * nv), -1.0, 1.0);
}

struct Neighbour {
  std::size_t id;
  double similarity;
};

// k most similar rows, descending similarity, ties by ascending id.
inline std::vector<Neighbour> knn(std::span<const double> query,
                                  std::span<const std::pair<std::size_t, Vec>> rows,
                                  std::size_t k,
                                  SimilarityKind kind = SimilarityKind::cosine) {
  if (k == 0) fail("knn needs k >= 1");
  std::vector<Neighbour> all;
  all.reserve(rows.size());
  for (const auto& [id, v] : rows) all.push_back({id, similarity(query, v, kind)});
  auto better = [](const Neighbour& a, const Neighbour& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.id < b.id;
  };
  std::size_t take = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), better);
  all.resize(take);
  return all;
}

//------------------------------------------------------------------------------
// Vector files: "token f1 f2 ... fdim" per line, optional "count dim" header.

inline EmbeddingTable load_vectors(const std::filesystem::path& path,
                                   OovPolicy oov = OovPolicy::hash_random) {
  std::ifstream in(path);
  if (!in) fail(Error::Kind::not_found, "cannot open vector file '", path.string(), "'");
  std::vector<std::pair<std::string, Vec>> rows;
  std::string line;
  std::size_t lineno = 0, dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = tokenize(line);
    if (fields.empty()) continue;
    if (lineno == 1 && fields.size() == 2) {
      // "count dim" header: both fields are plain integers.
      auto is_int = [](const std::string& s) {
        return !s.empty() && std::all_of(s.begin(), s.end(), ::isdigit);
      };
      if (is_int(fields[0]) && is_int(fields[1])) {
        dim = std::stoul(fields[1]);
        continue;
      }
    }
    Vec v;
    v.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      try {
        v.push_back(std::stod(fields[i]));
      } catch (const std::exception&) {
        fail(Error::Kind::format, path.string(), ":", lineno, ": bad number '", fields[i], "'");
      }
    }
    if (dim == 0) dim = v.size();
    if (v.size() != dim || dim == 0)
      fail(Error::Kind::format, path.string(), ":", lineno, ": expected ", dim, " values, got ",
           v.size());
    rows.emplace_back(fields[0], std::move(v));
  }
  if (dim == 0) fail(Error::Kind::format, "vector file '", path.string(), "' is empty");
  EmbeddingTable table(dim, oov);
  for (auto& [t, v] : rows) table.set(t, std::move(v));
  return table;
}

inline void save_vectors(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(Error::Kind::io, "cannot write vector file '", path.string(), "'");
  out << table.size() << ' ' << table.dim() << '\n';
  out.precision(17);
  for (const auto& t : table.tokens()) {
    out << t;
    for (double x : table.at(t)) out << ' ' << x;
    out << '\n';
  }
}

//------------------------------------------------------------------------------
// Deterministic synthetic embeddings for a generated task.
//
// Every DA pattern owns a random concept direction in the first
// `dim - filler_dims` coordinates. Lexicon and value words sit near their
// concept with spread `lexicon_noise`; held-out paraphrase words with spread
// `paraphrase_noise`, which sets how well zero-shot matching works. Filler
// words live in the remaining coordinates, orthogonal to all content.

struct SynthesisOptions {
  std::size_t dim = 50;
  std::size_t filler_dims = 10;
  double lexicon_noise = 0.6;
  double paraphrase_noise = 2.0;
  OovPolicy oov = OovPolicy::hash_random;
};

inline EmbeddingTable synthesize_embeddings(const TaskSpec& task, const SynthesisOptions& opt = {}) {
  if (opt.filler_dims >= opt.dim) fail("filler_dims must be smaller than dim");
  const std::size_t content = opt.dim - opt.filler_dims;
  std::mt19937_64 rng(task.seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> n01(0.0, 1.0);

  auto unit = [&](std::size_t from, std::size_t to) {
    Vec v(opt.dim, 0.0);
    for (std::size_t i = from; i < to; ++i) v[i] = n01(rng);
    double nv = norm(v);
    for (auto& x : v) x /= nv;
    return v;
  };
  auto near = [&](const Vec& centre, double spread) {
    Vec noise = unit(0, content);
    Vec v(opt.dim);
    for (std::size_t i = 0; i < opt.dim; ++i) v[i] = centre[i] + spread * noise[i];
    double nv = norm(v);
    for (auto& x : v) x /= nv;
    return v;
  };

  EmbeddingTable table(opt.dim, opt.oov);
  for (const auto& p : task.ontology.patterns()) {
    const std::string key = p.str();
    Vec centre = unit(0, content);
    if (p.acttype == kValueActtype) table.set(*p.value, near(centre, opt.lexicon_noise));
    if (auto it = task.ontology.lexicon.find(key); it != task.ontology.lexicon.end())
      for (const auto& form : it->second)
        for (const auto& w : tokenize(form)) table.set(w, near(centre, opt.lexicon_noise));
    if (auto it = task.paraphrases.find(key); it != task.paraphrases.end())
      for (const auto& w : it->second) table.set(w, near(centre, opt.paraphrase_noise));
  }
  for (const auto& f : task.fillers) table.set(f, unit(content, opt.dim));
  return table;
}

}  // namespace dialearn
