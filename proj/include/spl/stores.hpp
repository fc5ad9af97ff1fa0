#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace spl {

class StoreError : public std::runtime_error {
public:
    explicit StoreError(const std::string& message) : std::runtime_error(message) {}
};

/// Injectable time source; tests drive cache TTLs with a manual clock.
using Clock = std::function<std::chrono::system_clock::time_point()>;

inline Clock system_clock_source() {
    return [] { return std::chrono::system_clock::now(); };
}

inline std::int64_t to_millis(std::chrono::system_clock::time_point tp) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(tp.time_since_epoch()).count();
}

namespace detail {

inline nlohmann::json load_store_file(const std::filesystem::path& path, int expected_version,
                                      const char* what) {
    if (!std::filesystem::exists(path)) return nlohmann::json::object();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StoreError("cannot open " + std::string(what) + " store at " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw StoreError("corrupt " + std::string(what) + " store at " + path.string() + ": " +
                         e.what());
    }
    int version = doc.value("schema_version", expected_version);
    if (version > expected_version) {
        throw StoreError(std::string(what) + " store at " + path.string() +
                         " uses schema version " + std::to_string(version) +
                         "; this build supports up to " + std::to_string(expected_version));
    }
    return doc;
}

inline void save_store_file(const std::filesystem::path& path, const nlohmann::json& doc) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw StoreError("cannot write store file " + tmp.string());
        out << doc.dump(2) << "\n";
        if (!out) throw StoreError("write failed for store file " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw StoreError("cannot replace store file " + path.string() + ": " + ec.message());
}

}  // namespace detail

// ============================================================
// Memory store: key-value pairs plus the response cache
// ============================================================

struct StoredValue {
    std::string key;
    std::string value;
    std::int64_t created_at_ms = 0;
    std::int64_t updated_at_ms = 0;
};

struct CacheEntry {
    std::string prompt_hash;
    std::string response;
    long long input_tokens = 0;
    long long output_tokens = 0;
    std::int64_t created_at_ms = 0;
    long long ttl_seconds = 0;

    bool live_at(std::int64_t now_ms) const {
        return now_ms < created_at_ms + ttl_seconds * 1000;
    }
};

/// Single-file persistent key-value store with an embedded TTL response
/// cache. Reads are safe from any thread; writes serialize on an internal
/// mutex (single-writer contract).
class MemoryStore {
public:
    explicit MemoryStore(std::filesystem::path file, Clock clock = system_clock_source())
        : file_(std::move(file)), clock_(std::move(clock)) {
        load();
    }

    std::optional<StoredValue> get(const std::string& key) const {
        std::lock_guard lock(mutex_);
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    void put(const std::string& key, const std::string& value) {
        std::lock_guard lock(mutex_);
        std::int64_t now = to_millis(clock_());
        auto it = values_.find(key);
        if (it == values_.end()) {
            values_[key] = StoredValue{key, value, now, now};
        } else {
            it->second.value = value;
            it->second.updated_at_ms = now;
        }
        save();
    }

    bool remove(const std::string& key) {
        std::lock_guard lock(mutex_);
        bool erased = values_.erase(key) > 0;
        if (erased) save();
        return erased;
    }

    std::vector<std::string> keys() const {
        std::lock_guard lock(mutex_);
        std::vector<std::string> out;
        out.reserve(values_.size());
        for (const auto& [k, v] : values_) out.push_back(k);
        return out;
    }

    std::optional<CacheEntry> cache_lookup(const std::string& prompt_hash) const {
        std::lock_guard lock(mutex_);
        auto it = cache_.find(prompt_hash);
        if (it == cache_.end()) return std::nullopt;
        if (!it->second.live_at(to_millis(clock_()))) return std::nullopt;
        return it->second;
    }

    void cache_store(CacheEntry entry) {
        std::lock_guard lock(mutex_);
        if (entry.created_at_ms == 0) entry.created_at_ms = to_millis(clock_());
        cache_[entry.prompt_hash] = std::move(entry);
        save();
    }

    std::size_t cache_evict_expired() {
        std::lock_guard lock(mutex_);
        std::int64_t now = to_millis(clock_());
        std::size_t evicted = 0;
        for (auto it = cache_.begin(); it != cache_.end();) {
            if (!it->second.live_at(now)) {
                it = cache_.erase(it);
                ++evicted;
            } else {
                ++it;
            }
        }
        if (evicted) save();
        return evicted;
    }

    std::size_t cache_size() const {
        std::lock_guard lock(mutex_);
        return cache_.size();
    }

    const std::filesystem::path& path() const { return file_; }

private:
    std::filesystem::path file_;
    Clock clock_;
    mutable std::mutex mutex_;
    std::map<std::string, StoredValue> values_;
    std::map<std::string, CacheEntry> cache_;

    static constexpr int kSchemaVersion = 1;

    void load() {
        nlohmann::json doc = detail::load_store_file(file_, kSchemaVersion, "memory");
        for (const auto& v : doc.value("values", nlohmann::json::array())) {
            StoredValue sv;
            sv.key = v.value("key", "");
            sv.value = v.value("value", "");
            sv.created_at_ms = v.value("created_at_ms", std::int64_t{0});
            sv.updated_at_ms = v.value("updated_at_ms", std::int64_t{0});
            values_[sv.key] = std::move(sv);
        }
        for (const auto& c : doc.value("cache", nlohmann::json::array())) {
            CacheEntry entry;
            entry.prompt_hash = c.value("prompt_hash", "");
            entry.response = c.value("response", "");
            entry.input_tokens = c.value("input_tokens", 0LL);
            entry.output_tokens = c.value("output_tokens", 0LL);
            entry.created_at_ms = c.value("created_at_ms", std::int64_t{0});
            entry.ttl_seconds = c.value("ttl_seconds", 0LL);
            cache_[entry.prompt_hash] = std::move(entry);
        }
    }

    void save() const {
        nlohmann::json doc;
        doc["schema_version"] = kSchemaVersion;
        auto values = nlohmann::json::array();
        for (const auto& [key, v] : values_) {
            values.push_back({{"key", v.key},
                              {"value", v.value},
                              {"created_at_ms", v.created_at_ms},
                              {"updated_at_ms", v.updated_at_ms}});
        }
        doc["values"] = std::move(values);
        auto cache = nlohmann::json::array();
        for (const auto& [hash, entry] : cache_) {
            cache.push_back({{"prompt_hash", entry.prompt_hash},
                             {"response", entry.response},
                             {"input_tokens", entry.input_tokens},
                             {"output_tokens", entry.output_tokens},
                             {"created_at_ms", entry.created_at_ms},
                             {"ttl_seconds", entry.ttl_seconds}});
        }
        doc["cache"] = std::move(cache);
        detail::save_store_file(file_, doc);
    }
};

// ============================================================
// Vector store
// ============================================================

struct ScoredDocument {
    std::string id;
    std::string text;
    double relevance = 0.0;
    std::map<std::string, std::string> metadata;
};

using Embedder = std::function<std::vector<float>(const std::string&)>;

/// Deterministic hashed bag-of-words embedding: lowercase, split on
/// non-alphanumerics, FNV-hash each term into a fixed 256-dimension count
/// vector, L2-normalize. Every component is non-negative, so cosine
/// similarity lands in [0, 1].
inline std::vector<float> hashed_bow_embedding(const std::string& text) {
    constexpr std::size_t kDims = 256;
    std::vector<float> vec(kDims, 0.0f);
    std::uint64_t hash = 1469598103934665603ull;
    bool in_term = false;
    auto commit = [&]() {
        if (in_term) {
            vec[hash % kDims] += 1.0f;
            hash = 1469598103934665603ull;
            in_term = false;
        }
    };
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            unsigned char lower = static_cast<unsigned char>(std::tolower(c));
            hash = (hash ^ lower) * 1099511628211ull;
            in_term = true;
        } else {
            commit();
        }
    }
    commit();
    double norm = 0.0;
    for (float v : vec) norm += static_cast<double>(v) * v;
    if (norm > 0.0) {
        float inv = static_cast<float>(1.0 / std::sqrt(norm));
        for (float& v : vec) v *= inv;
    }
    return vec;
}

inline double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.empty() || b.empty()) return 0.0;
    std::size_t n = std::min(a.size(), b.size());
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    double sim = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(sim, 0.0, 1.0);
}

/// Single-file persistent vector store backing rag.query(). Documents are
/// embedded on insert; queries run a full cosine scan (fine at the corpus
/// sizes a desk-scale store sees).
class VectorStore {
public:
    explicit VectorStore(std::filesystem::path file, Embedder embedder = hashed_bow_embedding)
        : file_(std::move(file)), embedder_(std::move(embedder)) {
        load();
    }

    void add(const std::string& id, const std::string& text,
             std::map<std::string, std::string> metadata = {}) {
        std::lock_guard lock(mutex_);
        Doc doc;
        doc.id = id;
        doc.text = text;
        doc.metadata = std::move(metadata);
        doc.embedding = embedder_(text);
        docs_[id] = std::move(doc);
        save();
    }

    std::vector<ScoredDocument> query(const std::string& query_text, int top_k) const {
        if (top_k < 1) throw StoreError("top_k must be >= 1");
        std::lock_guard lock(mutex_);
        std::vector<float> q = embedder_(query_text);
        std::vector<ScoredDocument> results;
        results.reserve(docs_.size());
        for (const auto& [id, doc] : docs_) {
            ScoredDocument scored;
            scored.id = doc.id;
            scored.text = doc.text;
            scored.metadata = doc.metadata;
            scored.relevance = cosine_similarity(q, doc.embedding);
            results.push_back(std::move(scored));
        }
        std::sort(results.begin(), results.end(),
                  [](const ScoredDocument& a, const ScoredDocument& b) {
                      if (a.relevance != b.relevance) return a.relevance > b.relevance;
                      return a.id < b.id;
                  });
        if (results.size() > static_cast<std::size_t>(top_k)) {
            results.resize(static_cast<std::size_t>(top_k));
        }
        return results;
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return docs_.size();
    }

    const std::filesystem::path& path() const { return file_; }

private:
    struct Doc {
        std::string id;
        std::string text;
        std::map<std::string, std::string> metadata;
        std::vector<float> embedding;
    };

    std::filesystem::path file_;
    Embedder embedder_;
    mutable std::mutex mutex_;
    std::map<std::string, Doc> docs_;

    static constexpr int kSchemaVersion = 1;

    void load() {
        nlohmann::json doc = detail::load_store_file(file_, kSchemaVersion, "vector");
        for (const auto& d : doc.value("documents", nlohmann::json::array())) {
            Doc entry;
            entry.id = d.value("id", "");
            entry.text = d.value("text", "");
            nlohmann::json meta = d.value("metadata", nlohmann::json::object());
            for (const auto& [k, v] : meta.items()) {
                entry.metadata[k] = v.get<std::string>();
            }
            if (d.contains("embedding")) {
                entry.embedding = d["embedding"].get<std::vector<float>>();
            } else {
                entry.embedding = embedder_(entry.text);
            }
            docs_[entry.id] = std::move(entry);
        }
    }

    void save() const {
        nlohmann::json doc;
        doc["schema_version"] = kSchemaVersion;
        auto documents = nlohmann::json::array();
        for (const auto& [id, d] : docs_) {
            documents.push_back({{"id", d.id},
                                 {"text", d.text},
                                 {"metadata", d.metadata},
                                 {"embedding", d.embedding}});
        }
        doc["documents"] = std::move(documents);
        detail::save_store_file(file_, doc);
    }
};

}  // namespace spl
