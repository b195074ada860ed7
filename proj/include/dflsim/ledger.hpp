#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dflsim/hash.hpp"
#include "dflsim/hsic.hpp"
#include "dflsim/param_math.hpp"

namespace dflsim {

using NodeId = std::uint32_t;
using Round = std::uint64_t;

class linkage_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class auth_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class conflict_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class BlockFlag : std::uint8_t { update = 0, aggregate = 1 };

struct BlockHeader {
    Digest prev_hash{};      // digest of the preceding block; all-zero for genesis
    Round round = 0;
    std::uint64_t block_number = 0;
    BlockFlag flag = BlockFlag::update;
    NodeId author = 0;
    Digest signature{};      // keyed digest of (author id || block digest)
    std::uint64_t timestamp = 0;  // logical clock, not wall time
};

struct BlockBody {
    ParamVector params;
    std::optional<double> hsic_value;                 // aggregate blocks only
    std::vector<std::pair<NodeId, double>> scores;    // aggregate blocks only
};

struct Block {
    BlockHeader header;
    BlockBody body;
};

namespace detail {

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(out, bits);
}

inline void put_digest(std::vector<std::uint8_t>& out, const Digest& d) {
    out.insert(out.end(), d.begin(), d.end());
}

}  // namespace detail

// Canonical little-endian block layout. Field order: prev_hash, round,
// block_number, flag, author, timestamp, [signature], params (length-prefixed
// IEEE-754 LE), hsic presence + value, score count + (id, value) pairs.
// The block digest is taken over the signature-free form; the signature then
// covers the digest, so any byte flip breaks one check or the other.
inline std::vector<std::uint8_t> canonical_bytes(const Block& b, bool include_signature) {
    std::vector<std::uint8_t> out;
    out.reserve(64 + 8 * b.body.params.size() + 12 * b.body.scores.size() + 32);
    detail::put_digest(out, b.header.prev_hash);
    detail::put_u64(out, b.header.round);
    detail::put_u64(out, b.header.block_number);
    detail::put_u8(out, static_cast<std::uint8_t>(b.header.flag));
    detail::put_u32(out, b.header.author);
    detail::put_u64(out, b.header.timestamp);
    if (include_signature) detail::put_digest(out, b.header.signature);
    detail::put_u64(out, b.body.params.size());
    for (double v : b.body.params) detail::put_f64(out, v);
    detail::put_u8(out, b.body.hsic_value ? 1 : 0);
    detail::put_f64(out, b.body.hsic_value.value_or(0.0));
    detail::put_u64(out, b.body.scores.size());
    for (const auto& [id, s] : b.body.scores) {
        detail::put_u32(out, id);
        detail::put_f64(out, s);
    }
    return out;
}

inline Digest block_digest(const Block& b) {
    return sha256(canonical_bytes(b, /*include_signature=*/false));
}

/// Stand-in for the authentication server of a permissioned deployment:
/// hands every node a per-node secret and signs/verifies with keyed digests.
class KeyRegistry {
public:
    explicit KeyRegistry(std::uint64_t seed) : seed_(seed) {}

    Digest key_of(NodeId id) const {
        std::vector<std::uint8_t> buf;
        buf.reserve(16 + 8 + 4);
        const char* tag = "node-secret";
        buf.insert(buf.end(), tag, tag + 11);
        detail::put_u64(buf, seed_);
        detail::put_u32(buf, id);
        return sha256(buf);
    }

    Digest sign(NodeId author, const Digest& digest) const {
        Digest key = key_of(author);
        std::vector<std::uint8_t> buf;
        buf.reserve(32 + 4 + 32);
        detail::put_digest(buf, key);
        detail::put_u32(buf, author);
        detail::put_digest(buf, digest);
        return sha256(buf);
    }

    bool verify(NodeId author, const Digest& digest, const Digest& signature) const {
        return sign(author, digest) == signature;
    }

private:
    std::uint64_t seed_;
};

/// Append-only hash-linked block sequence with round-indexed retrieval.
/// Single writer (the orchestrator); reads are const.
class Chain {
public:
    explicit Chain(KeyRegistry registry) : registry_(std::move(registry)) {
        tip_.fill(0);
    }

    void append(Block block) {
        Digest expected_tip = blocks_.empty() ? zero_digest() : tip_;
        if (block.header.prev_hash != expected_tip) {
            throw linkage_error("append: prev_hash does not match chain tip");
        }
        if (block.header.block_number != blocks_.size()) {
            throw linkage_error("append: block_number must increase by 1");
        }
        if (!all_finite(block.body.params)) {
            throw std::invalid_argument("append: non-finite parameter entries");
        }
        if (block.header.flag == BlockFlag::update) {
            if (block.body.hsic_value || !block.body.scores.empty()) {
                throw std::invalid_argument("append: update blocks carry parameters only");
            }
        } else {
            if (aggregate_by_round_.count(block.header.round)) {
                throw conflict_error("append: aggregate already recorded for round");
            }
        }
        Digest digest = block_digest(block);
        if (!registry_.verify(block.header.author, digest, block.header.signature)) {
            throw auth_error("append: signature does not verify for author");
        }
        if (block.header.flag == BlockFlag::update) {
            updates_by_round_[block.header.round].push_back(blocks_.size());
        } else {
            aggregate_by_round_[block.header.round] = blocks_.size();
            aggregate_order_.push_back(blocks_.size());
        }
        tip_ = digest;
        blocks_.push_back(std::move(block));
    }

    /// Build, sign and append an update block for (round, author).
    void append_update(Round round, NodeId author, ParamVector params) {
        append(make_block(BlockFlag::update, round, author, std::move(params), std::nullopt, {}));
    }

    /// Build, sign and append an aggregate block; hsic/scores may be absent.
    void append_aggregate(Round round, NodeId author, ParamVector params,
                          std::optional<double> hsic_value = std::nullopt,
                          std::vector<std::pair<NodeId, double>> scores = {}) {
        append(make_block(BlockFlag::aggregate, round, author, std::move(params),
                          hsic_value, std::move(scores)));
    }

    /// All update payloads for round t, in block order. May be empty.
    std::vector<std::pair<NodeId, ParamVector>> updates_for_round(Round t) const {
        std::vector<std::pair<NodeId, ParamVector>> out;
        auto it = updates_by_round_.find(t);
        if (it == updates_by_round_.end()) return out;
        out.reserve(it->second.size());
        for (std::size_t idx : it->second) {
            out.emplace_back(blocks_[idx].header.author, blocks_[idx].body.params);
        }
        return out;
    }

    /// Round-t update of one node, or nullptr. Nodes upload at most once per round.
    const ParamVector* update_of(Round t, NodeId node) const {
        auto it = updates_by_round_.find(t);
        if (it == updates_by_round_.end()) return nullptr;
        for (std::size_t idx : it->second) {
            if (blocks_[idx].header.author == node) return &blocks_[idx].body.params;
        }
        return nullptr;
    }

    struct AggregateView {
        const ParamVector* params;
        std::optional<double> hsic_value;
    };

    std::optional<AggregateView> aggregate_for_round(Round t) const {
        auto it = aggregate_by_round_.find(t);
        if (it == aggregate_by_round_.end()) return std::nullopt;
        const Block& b = blocks_[it->second];
        return AggregateView{&b.body.params, b.body.hsic_value};
    }

    /// hsic values of the most recent <= q aggregate blocks that carry one,
    /// newest last.
    HsicWindow recent_hsic(std::size_t q) const {
        if (q < 1) throw std::invalid_argument("recent_hsic: q must be >= 1");
        HsicWindow window(q);
        std::vector<double> collected;
        for (auto it = aggregate_order_.rbegin();
             it != aggregate_order_.rend() && collected.size() < q; ++it) {
            const Block& b = blocks_[*it];
            if (b.body.hsic_value) collected.push_back(*b.body.hsic_value);
        }
        for (auto it = collected.rbegin(); it != collected.rend(); ++it) window.push(*it);
        return window;
    }

    bool verify_integrity() const {
        Digest expected_prev = zero_digest();
        std::unordered_map<Round, int> aggregates_seen;
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const Block& b = blocks_[i];
            if (b.header.prev_hash != expected_prev) return false;
            if (b.header.block_number != i) return false;
            Digest digest = block_digest(b);
            if (!registry_.verify(b.header.author, digest, b.header.signature)) return false;
            if (b.header.flag == BlockFlag::aggregate) {
                if (++aggregates_seen[b.header.round] > 1) return false;
            }
            expected_prev = digest;
        }
        return blocks_.empty() || expected_prev == tip_;
    }

    std::size_t size() const { return blocks_.size(); }
    const std::vector<Block>& blocks() const { return blocks_; }
    const Digest& tip_digest() const { return tip_; }
    const KeyRegistry& registry() const { return registry_; }

    // Integrity tests corrupt stored blocks through this.
    Block& mutable_block(std::size_t i) { return blocks_.at(i); }

    /// Canonical binary dump (signatures included) for post-hoc inspection.
    void dump(std::ostream& os) const {
        static const char magic[8] = {'d', 'f', 'l', 'c', 'h', 'n', '0', '1'};
        os.write(magic, sizeof(magic));
        std::vector<std::uint8_t> count;
        detail::put_u64(count, blocks_.size());
        os.write(reinterpret_cast<const char*>(count.data()),
                 static_cast<std::streamsize>(count.size()));
        for (const Block& b : blocks_) {
            std::vector<std::uint8_t> bytes = canonical_bytes(b, /*include_signature=*/true);
            std::vector<std::uint8_t> len;
            detail::put_u64(len, bytes.size());
            os.write(reinterpret_cast<const char*>(len.data()),
                     static_cast<std::streamsize>(len.size()));
            os.write(reinterpret_cast<const char*>(bytes.data()),
                     static_cast<std::streamsize>(bytes.size()));
        }
    }

    void dump_to_file(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot open chain dump file: " + path);
        dump(os);
    }

private:
    static Digest zero_digest() {
        Digest d{};
        d.fill(0);
        return d;
    }

    Block make_block(BlockFlag flag, Round round, NodeId author, ParamVector params,
                     std::optional<double> hsic_value,
                     std::vector<std::pair<NodeId, double>> scores) const {
        Block b;
        b.header.prev_hash = blocks_.empty() ? zero_digest() : tip_;
        b.header.round = round;
        b.header.block_number = blocks_.size();
        b.header.flag = flag;
        b.header.author = author;
        b.header.timestamp = round;
        b.body.params = std::move(params);
        b.body.hsic_value = hsic_value;
        b.body.scores = std::move(scores);
        b.header.signature = registry_.sign(author, block_digest(b));
        return b;
    }

    KeyRegistry registry_;
    std::vector<Block> blocks_;
    Digest tip_;
    std::unordered_map<Round, std::vector<std::size_t>> updates_by_round_;
    std::unordered_map<Round, std::size_t> aggregate_by_round_;
    std::vector<std::size_t> aggregate_order_;
};

}  // namespace dflsim
