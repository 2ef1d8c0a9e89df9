#include "parley/memory.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "parley/errors.hpp"

namespace parley {

namespace {

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

// Slices text into sentences. A sentence ends with its terminator run; the
// whitespace between sentences belongs to the following sentence, so the
// concatenation of all slices is the source text byte for byte.
std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    if (is_terminator(text[i])) {
      std::size_t run = i;
      while (run < n && is_terminator(text[run])) ++run;
      if (run >= n || std::isspace(static_cast<unsigned char>(text[run]))) {
        out.push_back(text.substr(start, run - start));
        start = run;
      }
      i = run;
    } else {
      ++i;
    }
  }
  if (start < n) {
    std::string tail = text.substr(start);
    if (approx_token_count(tail) == 0 && !out.empty()) {
      out.back() += tail;  // trailing whitespace stays with the last sentence
    } else {
      out.push_back(std::move(tail));
    }
  }
  return out;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::vector<Chunk> chunk_text(const std::string& text, int max_tokens,
                              int overlap_tokens, ChunkSource source) {
  if (overlap_tokens < 0 || max_tokens <= overlap_tokens) {
    throw ConfigInvalid("chunking requires max_tokens > overlap_tokens >= 0");
  }
  if (text.empty()) return {};

  const auto sentences = split_sentences(text);
  std::vector<int> counts(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    counts[i] = approx_token_count(sentences[i]);
  }

  // Greedy whole-sentence runs: stop a run at the first sentence that lifts
  // it to max_tokens.
  std::vector<std::pair<std::size_t, std::size_t>> runs;  // [first, last]
  std::size_t first = 0;
  int run_tokens = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    run_tokens += counts[i];
    if (run_tokens >= max_tokens) {
      runs.emplace_back(first, i);
      first = i + 1;
      run_tokens = 0;
    }
  }
  if (first < sentences.size()) runs.emplace_back(first, sentences.size() - 1);

  std::vector<Chunk> chunks;
  chunks.reserve(runs.size());
  for (std::size_t k = 0; k < runs.size(); ++k) {
    std::string overlap_text;
    if (k > 0 && overlap_tokens > 0) {
      const auto [pf, pl] = runs[k - 1];
      // Shortest whole-sentence suffix reaching overlap_tokens, never
      // including the previous run's first sentence.
      std::size_t m = pl + 1;
      int got = 0;
      while (m > pf + 1 && got < overlap_tokens) {
        --m;
        got += counts[m];
      }
      for (std::size_t i = m; i <= pl; ++i) overlap_text += sentences[i];
    }
    std::string body;
    for (std::size_t i = runs[k].first; i <= runs[k].second; ++i) {
      body += sentences[i];
    }
    Chunk chunk;
    chunk.overlap_chars = static_cast<int>(overlap_text.size());
    chunk.text = overlap_text + body;
    chunk.token_count = approx_token_count(chunk.text);
    chunk.source = source;
    chunk.sequence = static_cast<int>(k);
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

HashEmbedder::HashEmbedder(int dim) : dim_(dim) {
  if (dim < 1) throw ConfigInvalid("embedder dimension must be positive");
}

std::vector<float> HashEmbedder::embed(const std::string& text) const {
  const auto spans = approx_token_spans(text);
  if (spans.empty()) throw EmptyText("cannot embed text without tokens");

  std::vector<std::string> tokens;
  tokens.reserve(spans.size());
  for (const auto& s : spans) {
    tokens.push_back(lowercase(std::string_view(text).substr(s.begin, s.end - s.begin)));
  }

  std::vector<double> acc(static_cast<std::size_t>(dim_), 0.0);
  auto bump = [&](const std::string& feature) {
    acc[fnv1a(feature) % static_cast<std::uint64_t>(dim_)] += 1.0;
  };
  for (const auto& t : tokens) bump(t);
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    bump(tokens[i] + "\x1f" + tokens[i + 1]);
  }

  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out[i] = static_cast<float>(acc[i] / norm);
  }
  return out;
}

namespace {

// Splits "http://host:port/path" into client base and request path.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  const std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const auto slash = endpoint.find('/', host_start);
  if (slash == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, slash), endpoint.substr(slash)};
}

}  // namespace

RemoteEmbedder::RemoteEmbedder(std::string endpoint, std::string model, int dim,
                               std::string api_key)
    : endpoint_(std::move(endpoint)),
      model_(std::move(model)),
      dim_(dim),
      api_key_(std::move(api_key)) {
  if (dim_ < 1) throw ConfigInvalid("embedder dimension must be positive");
  if (endpoint_.empty()) throw ConfigInvalid("remote embedder needs an endpoint");
}

std::vector<float> RemoteEmbedder::embed(const std::string& text) const {
  if (approx_token_count(text) == 0) throw EmptyText("cannot embed text without tokens");

  const auto [base, path] = split_endpoint(endpoint_);
  httplib::Client client(base);
  client.set_connection_timeout(10);
  client.set_read_timeout(60);

  nlohmann::json payload{{"model", model_}, {"input", {text}}};
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  const auto res = client.Post(path, headers, payload.dump(), "application/json");
  if (!res) throw ServiceUnavailable("embedding endpoint unreachable: " + endpoint_);
  if (res->status != 200) {
    throw ServiceUnavailable("embedding endpoint returned status " +
                             std::to_string(res->status));
  }

  std::vector<float> vec;
  try {
    const auto body = nlohmann::json::parse(res->body);
    const auto& emb = body.at("data").at(0).at("embedding");
    vec.reserve(emb.size());
    for (const auto& v : emb) vec.push_back(v.get<float>());
  } catch (const nlohmann::json::exception& e) {
    throw ServiceUnavailable(std::string("embedding response malformed: ") + e.what());
  }
  if (static_cast<int>(vec.size()) != dim_) {
    throw DimensionMismatch("embedding endpoint returned dimension " +
                            std::to_string(vec.size()) + ", expected " +
                            std::to_string(dim_));
  }

  double norm = 0.0;
  for (float v : vec) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw ServiceUnavailable("embedding endpoint returned a zero vector");
  for (auto& v : vec) v = static_cast<float>(v / norm);
  return vec;
}

void EmbedderSpec::validate() const {
  if (dim < 1) throw ConfigInvalid("embedder dimension must be positive");
  if (kind == Kind::RemoteService && (endpoint.empty() || model.empty())) {
    throw ConfigInvalid("remote embedder needs endpoint and model");
  }
}

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case EmbedderSpec::Kind::DeterministicHash:
      return std::make_unique<HashEmbedder>(spec.dim);
    case EmbedderSpec::Kind::RemoteService:
      return std::make_unique<RemoteEmbedder>(spec.endpoint, spec.model, spec.dim);
  }
  throw ConfigInvalid("unknown embedder kind");
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw DimensionMismatch("cosine dimensions differ");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

MemoryStore::MemoryStore(int dim) : dim_(dim) {
  if (dim < 1) throw ConfigInvalid("store dimension must be positive");
}

std::uint64_t MemoryStore::insert(int player_id, int world_id, const Chunk& chunk,
                                  const Embedder& embedder) {
  if (embedder.dim() != dim_) {
    throw DimensionMismatch("embedder dimension does not match store");
  }
  MemoryRecord record;
  record.key = {player_id, world_id};
  record.chunk = chunk;
  record.vector = embedder.embed(chunk.text);
  if (static_cast<int>(record.vector.size()) != dim_) {
    throw DimensionMismatch("embedding dimension does not match store");
  }
  auto& partition = partitions_[record.key];
  record.record_id = partition.size();
  partition.push_back(std::move(record));
  return partition.back().record_id;
}

std::vector<RetrievalHit> MemoryStore::retrieve(int player_id, int world_id,
                                                const std::string& query, int k,
                                                const Embedder& embedder) const {
  if (k < 1) throw ConfigInvalid("retrieval needs k >= 1");
  if (embedder.dim() != dim_) {
    throw DimensionMismatch("embedder dimension does not match store");
  }
  const auto it = partitions_.find(PartitionKey{player_id, world_id});
  if (it == partitions_.end()) return {};

  const auto query_vec = embedder.embed(query);
  std::vector<RetrievalHit> hits;
  hits.reserve(it->second.size());
  for (const auto& record : it->second) {
    hits.push_back(RetrievalHit{record, cosine(query_vec, record.vector)});
  }
  std::sort(hits.begin(), hits.end(), [](const RetrievalHit& x, const RetrievalHit& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.record.record_id < y.record.record_id;
  });
  if (static_cast<int>(hits.size()) > k) hits.resize(static_cast<std::size_t>(k));
  return hits;
}

std::size_t MemoryStore::partition_size(int player_id, int world_id) const {
  const auto it = partitions_.find(PartitionKey{player_id, world_id});
  return it == partitions_.end() ? 0 : it->second.size();
}

std::size_t MemoryStore::total_records() const {
  std::size_t n = 0;
  for (const auto& [key, records] : partitions_) n += records.size();
  return n;
}

std::vector<PartitionKey> MemoryStore::partitions() const {
  std::vector<PartitionKey> keys;
  keys.reserve(partitions_.size());
  for (const auto& [key, records] : partitions_) keys.push_back(key);
  return keys;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

void put_i32(std::ostream& os, std::int32_t v) {
  put_u32(os, static_cast<std::uint32_t>(v));
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("truncated record log");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is) {
  const std::uint64_t lo = get_u32(is);
  const std::uint64_t hi = get_u32(is);
  return lo | (hi << 32);
}

std::int32_t get_i32(std::istream& is) {
  return static_cast<std::int32_t>(get_u32(is));
}

float get_f32(std::istream& is) {
  const std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::string partition_file(const PartitionKey& key) {
  return "p" + std::to_string(key.player_id) + "_w" + std::to_string(key.world_id) +
         ".log";
}

}  // namespace

void MemoryStore::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["dim"] = dim_;
  manifest["partitions"] = nlohmann::json::array();

  for (const auto& [key, records] : partitions_) {
    const std::string file = partition_file(key);
    manifest["partitions"].push_back({{"player", key.player_id},
                                      {"world", key.world_id},
                                      {"count", records.size()},
                                      {"file", file}});
    std::ofstream out(fs::path(dir) / file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + file);
    for (const auto& r : records) {
      put_u64(out, r.record_id);
      put_i32(out, stage_rank(r.chunk.source.stage));
      put_i32(out, r.chunk.source.iteration);
      put_i32(out, r.chunk.sequence);
      put_i32(out, r.chunk.overlap_chars);
      put_i32(out, r.chunk.token_count);
      put_u32(out, static_cast<std::uint32_t>(r.chunk.text.size()));
      out.write(r.chunk.text.data(),
                static_cast<std::streamsize>(r.chunk.text.size()));
      put_u32(out, static_cast<std::uint32_t>(r.vector.size()));
      for (float v : r.vector) put_f32(out, v);
    }
    if (!out) throw IoError("write failed for " + file);
  }

  std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!mf) throw IoError("cannot write manifest.json");
  mf << manifest.dump(2) << "\n";
  if (!mf) throw IoError("write failed for manifest.json");
}

MemoryStore MemoryStore::load(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw IoError("cannot open manifest.json in " + dir);
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("manifest parse error: ") + e.what());
  }
  if (manifest.value("version", 0) != 1) throw IoError("unsupported store version");

  MemoryStore store(manifest.at("dim").get<int>());
  for (const auto& entry : manifest.at("partitions")) {
    const PartitionKey key{entry.at("player").get<int>(), entry.at("world").get<int>()};
    const auto count = entry.at("count").get<std::size_t>();
    std::ifstream in(fs::path(dir) / entry.at("file").get<std::string>(),
                     std::ios::binary);
    if (!in) throw IoError("cannot open record log for partition");
    auto& records = store.partitions_[key];
    records.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      MemoryRecord r;
      r.key = key;
      r.record_id = get_u64(in);
      const int stage = get_i32(in);
      if (stage < stage_rank(StageTag::System) || stage > stage_rank(StageTag::Recall)) {
        throw IoError("record log has an unknown stage tag");
      }
      r.chunk.source.stage = static_cast<StageTag>(stage);
      r.chunk.source.iteration = get_i32(in);
      r.chunk.sequence = get_i32(in);
      r.chunk.overlap_chars = get_i32(in);
      r.chunk.token_count = get_i32(in);
      const auto text_len = get_u32(in);
      r.chunk.text.resize(text_len);
      in.read(r.chunk.text.data(), static_cast<std::streamsize>(text_len));
      if (!in) throw IoError("truncated record log");
      const auto vec_len = get_u32(in);
      if (static_cast<int>(vec_len) != store.dim_) {
        throw IoError("record vector dimension does not match manifest");
      }
      r.vector.resize(vec_len);
      for (auto& v : r.vector) v = get_f32(in);
      records.push_back(std::move(r));
    }
  }
  return store;
}

}  // namespace parley
