#include "smcprog/archive.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

namespace smcprog {

std::vector<double> HashedTrigramEmbedding::embed(const Program& program) const {
    std::vector<double> v(dim_, 0.0);
    const std::string& s = program.source();
    if (s.size() < 3) {
        v[fnv1a64(s) % dim_] = 1.0;
    } else {
        for (std::size_t i = 0; i + 3 <= s.size(); ++i) v[fnv1a64(std::string_view(s).substr(i, 3)) % dim_] += 1.0;
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    for (double& x : v) x /= norm;
    return v;
}

double embedding_distance(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = std::min(a.size(), b.size());
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 1.0;
    return 1.0 - dot / std::sqrt(na * nb);
}

Archive::Archive(std::shared_ptr<const EmbeddingProvider> embedder)
    : embedder_(embedder ? std::move(embedder) : std::make_shared<HashedTrigramEmbedding>()) {}

Archive::Archive(const Archive& other) {
    std::shared_lock lock(other.mutex_);
    embedder_ = other.embedder_;
    log_ = other.log_;
    distinct_ = other.distinct_;
    first_by_digest_ = other.first_by_digest_;
    std::lock_guard cache_lock(other.cache_mutex_);
    embeddings_ = other.embeddings_;
}

Archive& Archive::operator=(const Archive& other) {
    if (this == &other) return *this;
    Archive copy(other);
    std::unique_lock lock(mutex_);
    embedder_ = std::move(copy.embedder_);
    log_ = std::move(copy.log_);
    distinct_ = std::move(copy.distinct_);
    first_by_digest_ = std::move(copy.first_by_digest_);
    std::lock_guard cache_lock(cache_mutex_);
    embeddings_ = std::move(copy.embeddings_);
    return *this;
}

std::vector<double> Archive::cached_embedding(const Program& program) const {
    {
        std::lock_guard lock(cache_mutex_);
        if (auto it = embeddings_.find(program.digest()); it != embeddings_.end()) return it->second;
    }
    auto v = embedder_->embed(program);
    std::lock_guard lock(cache_mutex_);
    embeddings_.emplace(program.digest(), v);
    return v;
}

void Archive::record(ArchiveEntry entry) {
    std::unique_lock lock(mutex_);
    const std::uint64_t d = entry.program.digest();
    if (!first_by_digest_.contains(d)) {
        first_by_digest_.emplace(d, log_.size());
        distinct_.push_back(log_.size());
    }
    log_.push_back(std::move(entry));
}

std::size_t Archive::size() const {
    std::shared_lock lock(mutex_);
    return log_.size();
}

std::size_t Archive::distinct_size() const {
    std::shared_lock lock(mutex_);
    return distinct_.size();
}

std::vector<ArchiveEntry> Archive::entries() const {
    std::shared_lock lock(mutex_);
    return log_;
}

std::vector<ArchiveEntry> Archive::deduplicated() const {
    std::shared_lock lock(mutex_);
    std::vector<ArchiveEntry> out;
    out.reserve(distinct_.size());
    for (std::size_t i : distinct_) out.push_back(log_[i]);
    return out;
}

std::vector<Inspiration> Archive::select_inspirations(const Program& parent, int top_k, int diverse_m) const {
    std::vector<Inspiration> out;
    if (top_k <= 0 && diverse_m <= 0) return out;

    std::vector<std::size_t> pool;
    std::vector<std::vector<double>> pool_embeddings;
    {
        std::shared_lock lock(mutex_);
        pool.reserve(distinct_.size());
        for (std::size_t i : distinct_) {
            const auto& e = log_[i];
            if (e.reward.valid && e.program.digest() != parent.digest()) pool.push_back(i);
        }
        if (pool.empty()) return out;

        // Reward descending, then older iteration, then insertion order.
        std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
            const auto& ea = log_[a];
            const auto& eb = log_[b];
            if (ea.reward.value != eb.reward.value) return ea.reward.value > eb.reward.value;
            return ea.iteration < eb.iteration;
        });

        const std::size_t n_top = std::min<std::size_t>(static_cast<std::size_t>(std::max(top_k, 0)), pool.size());
        for (std::size_t i = 0; i < n_top; ++i) out.push_back({log_[pool[i]].program, log_[pool[i]].reward});
        pool.erase(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_top));
        if (diverse_m <= 0 || pool.empty()) return out;

        // Restore insertion order for the diverse pass so distance ties go to older entries.
        std::sort(pool.begin(), pool.end());
        pool_embeddings.reserve(pool.size());
        for (std::size_t i : pool) pool_embeddings.push_back(cached_embedding(log_[i].program));
    }

    const std::vector<double> parent_embedding = cached_embedding(parent);
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(pool.size());
    for (std::size_t j = 0; j < pool.size(); ++j)
        ranked.emplace_back(embedding_distance(parent_embedding, pool_embeddings[j]), j);
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    const std::size_t n_div = std::min<std::size_t>(static_cast<std::size_t>(diverse_m), ranked.size());
    std::shared_lock lock(mutex_);
    for (std::size_t i = 0; i < n_div; ++i) {
        const auto& e = log_[pool[ranked[i].second]];
        out.push_back({e.program, e.reward});
    }
    return out;
}

}  // namespace smcprog
