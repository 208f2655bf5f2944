#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "smcprog/core.hpp"
#include "smcprog/mutate.hpp"

namespace smcprog {

struct ArchiveEntry {
    Program program;
    RewardValue reward;
    int iteration = 0;
    std::string origin;  // kernel name, or "init"
    bool accepted = false;
    int island_id = 0;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    [[nodiscard]] virtual std::vector<double> embed(const Program& program) const = 0;
    [[nodiscard]] virtual std::size_t dimension() const = 0;
};

/// Character 3-grams hashed (FNV-1a) into a fixed number of buckets, then
/// L2-normalized. Sources shorter than three bytes hash as a single gram.
class HashedTrigramEmbedding final : public EmbeddingProvider {
public:
    explicit HashedTrigramEmbedding(std::size_t dimension = 256) : dim_(dimension) {}
    [[nodiscard]] std::vector<double> embed(const Program& program) const override;
    [[nodiscard]] std::size_t dimension() const override { return dim_; }

private:
    std::size_t dim_;
};

/// 1 - cosine similarity; zero vectors are at distance 1 from everything.
[[nodiscard]] double embedding_distance(const std::vector<double>& a, const std::vector<double>& b);

/// Evaluation history of one island: every proposal, accepted or not.
/// Writes are serialized internally; readers see a consistent snapshot.
class Archive {
public:
    explicit Archive(std::shared_ptr<const EmbeddingProvider> embedder = nullptr);

    Archive(const Archive& other);
    Archive& operator=(const Archive& other);

    void record(ArchiveEntry entry);

    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] std::size_t distinct_size() const;
    [[nodiscard]] std::vector<ArchiveEntry> entries() const;
    /// First occurrence of every digest, in insertion order.
    [[nodiscard]] std::vector<ArchiveEntry> deduplicated() const;

    /// Up to top_k highest-reward programs (ties: older iteration first), then
    /// up to diverse_m of the remaining programs farthest from the parent in
    /// embedding space. Never returns the parent's digest; only valid
    /// evaluations are eligible; results are distinct by digest.
    [[nodiscard]] std::vector<Inspiration> select_inspirations(const Program& parent, int top_k,
                                                               int diverse_m) const;

private:
    std::shared_ptr<const EmbeddingProvider> embedder_;
    mutable std::shared_mutex mutex_;
    std::vector<ArchiveEntry> log_;
    std::vector<std::size_t> distinct_;  // indices into log_ of first occurrences
    std::unordered_map<std::uint64_t, std::size_t> first_by_digest_;
    mutable std::mutex cache_mutex_;
    mutable std::unordered_map<std::uint64_t, std::vector<double>> embeddings_;

    [[nodiscard]] std::vector<double> cached_embedding(const Program& program) const;
};

}  // namespace smcprog
