#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "parley/protocol.hpp"

namespace parley {

struct ChunkSource {
  StageTag stage = StageTag::Recall;
  int iteration = 0;
};

// A sentence-aligned slice of source text. overlap_chars is the length of the
// prefix duplicated from the previous chunk, so stripping it from every chunk
// and concatenating reproduces the source exactly.
struct Chunk {
  std::string text;
  int token_count = 0;
  ChunkSource source;
  int sequence = 0;
  int overlap_chars = 0;
};

// Sentence-aware overlapping windows. Sentences end at a run of ., ! or ?
// followed by whitespace or end of text; a chunk is the shortest run of whole
// sentences reaching max_tokens (the final sentence may overflow). Each chunk
// after the first starts with the previous chunk's shortest whole-sentence
// suffix covering overlap_tokens, never the whole previous chunk.
std::vector<Chunk> chunk_text(const std::string& text, int max_tokens,
                              int overlap_tokens, ChunkSource source = {});

struct PartitionKey {
  int player_id = 0;
  int world_id = 0;

  friend auto operator<=>(const PartitionKey&, const PartitionKey&) = default;
};

struct MemoryRecord {
  PartitionKey key;
  std::uint64_t record_id = 0;
  Chunk chunk;
  std::vector<float> vector;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dim() const = 0;
  // Unit-normalized embedding. Throws EmptyText when the text has no tokens.
  virtual std::vector<float> embed(const std::string& text) const = 0;
};

// Seedless deterministic embedder: word unigrams and bigrams are feature
// hashed into `dim` buckets and the bucket histogram is L2 normalized.
class HashEmbedder : public Embedder {
 public:
  explicit HashEmbedder(int dim = 256);
  int dim() const override { return dim_; }
  std::vector<float> embed(const std::string& text) const override;

 private:
  int dim_;
};

// Client for an embeddings endpoint speaking the de-facto wire shape:
// POST {model, input: [text]} returning {data: [{embedding: [...]}]}.
class RemoteEmbedder : public Embedder {
 public:
  RemoteEmbedder(std::string endpoint, std::string model, int dim,
                 std::string api_key = "");
  int dim() const override { return dim_; }
  std::vector<float> embed(const std::string& text) const override;

 private:
  std::string endpoint_;
  std::string model_;
  int dim_;
  std::string api_key_;
};

struct EmbedderSpec {
  enum class Kind { DeterministicHash, RemoteService };

  Kind kind = Kind::DeterministicHash;
  int dim = 256;
  std::string endpoint;  // RemoteService
  std::string model;     // RemoteService

  void validate() const;  // throws ConfigInvalid
};

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec);

double cosine(const std::vector<float>& a, const std::vector<float>& b);

struct RetrievalHit {
  MemoryRecord record;
  double score = 0.0;
};

// Exact-search vector store partitioned by (player, world). Each partition is
// an append-only record log with its own monotonically increasing record ids.
class MemoryStore {
 public:
  explicit MemoryStore(int dim);

  int dim() const { return dim_; }

  std::uint64_t insert(int player_id, int world_id, const Chunk& chunk,
                       const Embedder& embedder);

  // Top-k by cosine similarity, descending, ties broken by ascending
  // record id. Returns fewer than k when the partition is smaller.
  std::vector<RetrievalHit> retrieve(int player_id, int world_id,
                                     const std::string& query, int k,
                                     const Embedder& embedder) const;

  std::size_t partition_size(int player_id, int world_id) const;
  std::size_t total_records() const;
  std::vector<PartitionKey> partitions() const;

  // Directory layout: manifest.json plus one binary record log per
  // partition, vectors as little-endian 32-bit floats.
  void save(const std::string& dir) const;
  static MemoryStore load(const std::string& dir);

 private:
  int dim_;
  std::map<PartitionKey, std::vector<MemoryRecord>> partitions_;
};

}  // namespace parley
