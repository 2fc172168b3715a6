#ifndef KGE_KG_DATA_H_
#define KGE_KG_DATA_H_

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace kge {

struct Triple {
  int source = 0;
  int relation = 0;
  int target = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

// Dense, bijective name <-> id maps. Ids are assigned in first-seen order.
class Vocabulary {
 public:
  int add_entity(const std::string& name);
  int add_relation(const std::string& name);

  std::optional<int> find_entity(const std::string& name) const;
  std::optional<int> find_relation(const std::string& name) const;

  const std::string& entity_name(int id) const { return entity_names_.at(static_cast<std::size_t>(id)); }
  const std::string& relation_name(int id) const { return relation_names_.at(static_cast<std::size_t>(id)); }

  std::size_t entity_count() const { return entity_names_.size(); }
  // Original relations only; reciprocal ids extend this range to 2x.
  std::size_t relation_count() const { return relation_names_.size(); }

  // Stable 64-bit digest of both name lists in id order.
  std::uint64_t fingerprint() const;

  // Two-column `name<TAB>id` dumps.
  void write_entities(std::ostream& os) const;
  void write_relations(std::ostream& os) const;

 private:
  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, int> entity_ids_;
  std::unordered_map<std::string, int> relation_ids_;
};

struct TripleStore {
  std::vector<Triple> triples;
  // |R| of the vocabulary the ids refer to (before augmentation).
  std::size_t relation_count = 0;
  bool has_reciprocals = false;
  // Exact duplicate lines dropped while loading.
  std::size_t duplicates_dropped = 0;

  std::size_t size() const { return triples.size(); }
  bool empty() const { return triples.empty(); }
};

// Reads `head<TAB>relation<TAB>tail` lines. Without a vocabulary a fresh one
// is built from the file; with one, unseen names raise VocabularyError.
// Malformed lines raise ParseError carrying the line number.
std::pair<TripleStore, Vocabulary> load_triples(const std::filesystem::path& path,
                                                const Vocabulary* vocab = nullptr);

// Builds one vocabulary over several files in order (train, valid, test).
Vocabulary build_vocabulary(const std::vector<std::filesystem::path>& paths);

// For every (s, r, t) appends (t, r + |R|, s). Throws ContractError if the
// store already holds inverse relation ids.
TripleStore add_reciprocals(const TripleStore& store, const Vocabulary& vocab);

// Inverse relation id of r (either direction) given |R|.
int inverse_relation(int relation, std::size_t relation_count);

// Known targets per (source, relation) key.
class FilterIndex {
 public:
  void insert(const Triple& t);
  // Sorts and deduplicates every target list; call once after inserting.
  void finalize();

  // nullptr when the key was never seen.
  const std::vector<int>* find(int source, int relation) const;
  bool contains(const Triple& t) const;
  std::size_t key_count() const { return targets_.size(); }

  template <typename F>
  void for_each(F&& f) const {
    for (const auto& [key, targets] : targets_) {
      f(static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffffULL), targets);
    }
  }

 private:
  static std::uint64_t key(int source, int relation) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(source)) << 32) |
           static_cast<std::uint32_t>(relation);
  }
  std::unordered_map<std::uint64_t, std::vector<int>> targets_;
};

FilterIndex build_filter_index(const TripleStore& train, const TripleStore& valid, const TripleStore& test);
FilterIndex build_filter_index(const std::vector<const TripleStore*>& stores);

struct QueryBatch {
  std::vector<int> sources;
  std::vector<int> relations;
  std::vector<int> targets;

  std::size_t size() const { return sources.size(); }
};

// Splits a shuffled copy of the store into batches; the permutation depends
// only on (seed, epoch). Every triple lands in exactly one batch.
std::vector<QueryBatch> batch_queries(const TripleStore& store, std::size_t batch_size, std::uint64_t seed,
                                      std::uint64_t epoch = 0);

struct Dataset {
  std::string name;
  Vocabulary vocab;
  TripleStore train;
  TripleStore valid;
  TripleStore test;
};

// Loads train.txt, valid.txt and test.txt from a directory with one
// vocabulary over their union. Missing files are reported together.
Dataset load_dataset(const std::filesystem::path& dir);

// FNV-1a 64 over a file's bytes.
std::uint64_t file_checksum(const std::filesystem::path& path);

// Canonical dataset name ("FB15k-237", "WN18RR") from a directory or free
// text; returns the input unchanged when unrecognized.
std::string canonical_dataset_name(const std::string& name);

}  // namespace kge

#endif  // KGE_KG_DATA_H_
