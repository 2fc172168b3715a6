#include "kge/kg_data.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

#include "kge/error.h"
#include "kge/rng.h"

namespace kge {
namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

struct RawTriple {
  std::string head, relation, tail;
};

// Calls f(line_number, RawTriple) for every non-empty line.
template <typename F>
void scan_file(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    RawTriple raw;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
      const auto fields = std::count(line.begin(), line.end(), '\t') + 1;
      throw ParseError(path.string(), line_no, "expected 3 tab-separated fields, got " + std::to_string(fields));
    }
    raw.head = line.substr(0, t1);
    raw.relation = line.substr(t1 + 1, t2 - t1 - 1);
    raw.tail = line.substr(t2 + 1);
    if (raw.head.empty() || raw.relation.empty() || raw.tail.empty()) {
      throw ParseError(path.string(), line_no, "empty field");
    }
    f(line_no, raw);
  }
}

}  // namespace

int Vocabulary::add_entity(const std::string& name) {
  auto [it, inserted] = entity_ids_.emplace(name, static_cast<int>(entity_names_.size()));
  if (inserted) entity_names_.push_back(name);
  return it->second;
}

int Vocabulary::add_relation(const std::string& name) {
  auto [it, inserted] = relation_ids_.emplace(name, static_cast<int>(relation_names_.size()));
  if (inserted) relation_names_.push_back(name);
  return it->second;
}

std::optional<int> Vocabulary::find_entity(const std::string& name) const {
  auto it = entity_ids_.find(name);
  if (it == entity_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> Vocabulary::find_relation(const std::string& name) const {
  auto it = relation_ids_.find(name);
  if (it == relation_ids_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  const auto mix = [&h](const std::vector<std::string>& names) {
    const std::uint64_t n = names.size();
    h = fnv1a(h, &n, sizeof n);
    for (const auto& s : names) {
      h = fnv1a(h, s.data(), s.size());
      h = fnv1a(h, "\n", 1);
    }
  };
  mix(entity_names_);
  mix(relation_names_);
  return h;
}

void Vocabulary::write_entities(std::ostream& os) const {
  for (std::size_t i = 0; i < entity_names_.size(); ++i) os << entity_names_[i] << '\t' << i << '\n';
}

void Vocabulary::write_relations(std::ostream& os) const {
  for (std::size_t i = 0; i < relation_names_.size(); ++i) os << relation_names_[i] << '\t' << i << '\n';
}

std::pair<TripleStore, Vocabulary> load_triples(const std::filesystem::path& path, const Vocabulary* vocab) {
  Vocabulary local;
  const bool fixed = vocab != nullptr;
  if (fixed) local = *vocab;

  TripleStore store;
  std::set<Triple> seen;
  scan_file(path, [&](std::size_t line_no, const RawTriple& raw) {
    Triple t;
    if (fixed) {
      const auto s = local.find_entity(raw.head);
      const auto r = local.find_relation(raw.relation);
      const auto o = local.find_entity(raw.tail);
      if (!s || !r || !o) {
        const std::string& missing = !s ? raw.head : (!r ? raw.relation : raw.tail);
        throw VocabularyError(path.string() + ":" + std::to_string(line_no) + ": unknown " +
                              (!r && s ? "relation" : "entity") + " '" + missing + "'");
      }
      t = {*s, *r, *o};
    } else {
      t.source = local.add_entity(raw.head);
      t.relation = local.add_relation(raw.relation);
      t.target = local.add_entity(raw.tail);
    }
    if (!seen.insert(t).second) {
      ++store.duplicates_dropped;
      return;
    }
    store.triples.push_back(t);
  });
  store.relation_count = local.relation_count();
  return {std::move(store), std::move(local)};
}

Vocabulary build_vocabulary(const std::vector<std::filesystem::path>& paths) {
  Vocabulary vocab;
  for (const auto& p : paths) {
    scan_file(p, [&](std::size_t, const RawTriple& raw) {
      vocab.add_entity(raw.head);
      vocab.add_relation(raw.relation);
      vocab.add_entity(raw.tail);
    });
  }
  return vocab;
}

int inverse_relation(int relation, std::size_t relation_count) {
  const int n = static_cast<int>(relation_count);
  return relation < n ? relation + n : relation - n;
}

TripleStore add_reciprocals(const TripleStore& store, const Vocabulary& vocab) {
  const std::size_t nrel = vocab.relation_count();
  if (store.has_reciprocals) throw ContractError("add_reciprocals: store already holds reciprocal triples");
  for (const Triple& t : store.triples) {
    if (t.relation < 0 || static_cast<std::size_t>(t.relation) >= nrel) {
      throw ContractError("add_reciprocals: relation id " + std::to_string(t.relation) +
                          " is outside the original range [0, " + std::to_string(nrel) + ")");
    }
  }
  TripleStore out;
  out.relation_count = nrel;
  out.has_reciprocals = true;
  out.duplicates_dropped = store.duplicates_dropped;
  out.triples.reserve(store.size() * 2);
  out.triples = store.triples;
  for (const Triple& t : store.triples) {
    out.triples.push_back({t.target, inverse_relation(t.relation, nrel), t.source});
  }
  return out;
}

void FilterIndex::insert(const Triple& t) { targets_[key(t.source, t.relation)].push_back(t.target); }

void FilterIndex::finalize() {
  for (auto& [k, v] : targets_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
}

const std::vector<int>* FilterIndex::find(int source, int relation) const {
  auto it = targets_.find(key(source, relation));
  return it == targets_.end() ? nullptr : &it->second;
}

bool FilterIndex::contains(const Triple& t) const {
  const auto* v = find(t.source, t.relation);
  return v && std::binary_search(v->begin(), v->end(), t.target);
}

FilterIndex build_filter_index(const std::vector<const TripleStore*>& stores) {
  FilterIndex index;
  for (const TripleStore* s : stores) {
    for (const Triple& t : s->triples) index.insert(t);
  }
  index.finalize();
  return index;
}

FilterIndex build_filter_index(const TripleStore& train, const TripleStore& valid, const TripleStore& test) {
  return build_filter_index(std::vector<const TripleStore*>{&train, &valid, &test});
}

std::vector<QueryBatch> batch_queries(const TripleStore& store, std::size_t batch_size, std::uint64_t seed,
                                      std::uint64_t epoch) {
  if (batch_size == 0) throw ParameterError("batch size must be at least 1");
  std::vector<std::size_t> order(store.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, epoch));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  std::vector<QueryBatch> batches;
  batches.reserve((order.size() + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    QueryBatch b;
    b.sources.reserve(end - start);
    b.relations.reserve(end - start);
    b.targets.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      const Triple& t = store.triples[order[i]];
      b.sources.push_back(t.source);
      b.relations.push_back(t.relation);
      b.targets.push_back(t.target);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const std::vector<std::filesystem::path> paths = {dir / "train.txt", dir / "valid.txt", dir / "test.txt"};
  std::string missing;
  for (const auto& p : paths) {
    if (!std::filesystem::is_regular_file(p)) missing += (missing.empty() ? "" : ", ") + p.string();
  }
  if (!missing.empty()) throw IoError("missing dataset files: " + missing);

  Dataset ds;
  ds.name = canonical_dataset_name(std::filesystem::absolute(dir).lexically_normal().filename().string());
  if (ds.name.empty()) ds.name = canonical_dataset_name(std::filesystem::absolute(dir).parent_path().filename().string());
  ds.vocab = build_vocabulary(paths);
  ds.train = load_triples(paths[0], &ds.vocab).first;
  ds.valid = load_triples(paths[1], &ds.vocab).first;
  ds.test = load_triples(paths[2], &ds.vocab).first;
  return ds;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = kFnvOffset;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a(h, buf, static_cast<std::size_t>(in.gcount()));
  }
  return h;
}

std::string canonical_dataset_name(const std::string& name) {
  std::string key;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (key == "fb15k237") return "FB15k-237";
  if (key == "wn18rr") return "WN18RR";
  return name;
}

}  // namespace kge
