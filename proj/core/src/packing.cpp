#include "pous/packing.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "pous/errors.hpp"

namespace pous::packing {

void PriorityWeights::validate() const {
    if (!(a >= 0.0 && b >= 0.0 && c >= 0.0) || !std::isfinite(a + b + c)) {
        throw ConfigError(fmt::format("priority weights must be finite and nonnegative (a={}, b={}, c={})", a, b, c));
    }
    if (a == 0.0 && b == 0.0 && c == 0.0) throw ConfigError("priority weights must not all be zero");
}

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

namespace {

double squared_distance(std::span<const double> x, std::span<const double> y) {
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        sum += d * d;
    }
    return sum;
}

double unit_double(crypto::HashDrbg& rng) { return static_cast<double>(rng.next_u64() >> 11) * 0x1.0p-53; }

std::uint32_t nearest(std::span<const double> point, const std::vector<std::vector<double>>& centroids) {
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::uint32_t c = 0; c < centroids.size(); ++c) {
        const double d = squared_distance(point, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

double within_cluster_ss(std::span<const std::vector<double>> points, std::span<const std::uint32_t> assignment,
                         std::span<const std::vector<double>> centroids) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) total += squared_distance(points[i], centroids[assignment[i]]);
    return total;
}

KMeansResult kmeans(std::span<const std::vector<double>> points, std::uint32_t k, std::uint64_t seed,
                    const KMeansOptions& options) {
    if (k == 0) throw RejectedInput("k-means needs k >= 1");
    if (points.empty()) throw RejectedInput("k-means needs at least one point");
    if (k > points.size()) throw RejectedInput(fmt::format("k={} exceeds the {} points", k, points.size()));
    const std::size_t dim = points.front().size();
    for (const auto& p : points) {
        if (p.size() != dim) throw RejectedInput("k-means points differ in dimension");
    }

    crypto::HashDrbg rng(seed, "pous.kmeans");
    KMeansResult result;

    // k-means++ seeding
    std::vector<bool> chosen(points.size(), false);
    std::size_t first = rng.uniform(points.size());
    chosen[first] = true;
    result.centroids.push_back(points[first]);
    std::vector<double> d2(points.size());
    while (result.centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            d2[i] = chosen[i] ? 0.0 : squared_distance(points[i], result.centroids[nearest(points[i], result.centroids)]);
            total += d2[i];
        }
        std::size_t pick = points.size();
        if (total > 0.0) {
            double target = unit_double(rng) * total;
            for (std::size_t i = 0; i < points.size(); ++i) {
                if (d2[i] <= 0.0) continue;
                pick = i;
                if (target < d2[i]) break;
                target -= d2[i];
            }
        } else {
            // every remaining point duplicates a centroid
            std::vector<std::size_t> rest;
            for (std::size_t i = 0; i < points.size(); ++i) {
                if (!chosen[i]) rest.push_back(i);
            }
            pick = rest[rng.uniform(rest.size())];
        }
        chosen[pick] = true;
        result.centroids.push_back(points[pick]);
    }

    result.assignment.assign(points.size(), 0);
    for (std::uint32_t iter = 0; iter < options.max_iterations; ++iter) {
        for (std::size_t i = 0; i < points.size(); ++i) result.assignment[i] = nearest(points[i], result.centroids);
        result.objective_history.push_back(within_cluster_ss(points, result.assignment, result.centroids));

        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            auto& s = sums[result.assignment[i]];
            for (std::size_t d = 0; d < dim; ++d) s[d] += points[i][d];
            ++counts[result.assignment[i]];
        }
        double shift = 0.0;
        for (std::uint32_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;  // an empty cluster keeps its centroid
            for (auto& v : sums[c]) v /= static_cast<double>(counts[c]);
            shift = std::max(shift, std::sqrt(squared_distance(sums[c], result.centroids[c])));
            result.centroids[c] = std::move(sums[c]);
        }
        result.iterations = iter + 1;
        if (shift < options.tolerance) break;
    }
    for (std::size_t i = 0; i < points.size(); ++i) result.assignment[i] = nearest(points[i], result.centroids);
    return result;
}

Clustering cluster_mempool(std::span<const Transaction> mempool, std::span<const UserVector> vectors,
                           std::uint32_t k, std::uint64_t seed) {
    if (k == 0) throw RejectedInput("cluster count k must be at least 1");
    if (mempool.empty()) throw RejectedInput("cannot cluster an empty mempool");

    std::vector<bool> present(vectors.size(), false);
    for (const auto& tx : mempool) {
        if (tx.source_user < 1 || tx.source_user > vectors.size()) {
            throw RejectedInput(fmt::format("transaction {} has user {} without a vector", tx.id, tx.source_user));
        }
        present[tx.source_user - 1] = true;
    }
    std::vector<UserId> users;
    for (std::size_t u = 0; u < present.size(); ++u) {
        if (present[u]) users.push_back(static_cast<UserId>(u + 1));
    }

    std::uint32_t effective_k = k;
    if (k > users.size()) {
        effective_k = static_cast<std::uint32_t>(users.size());
        spdlog::warn("k={} exceeds the {} distinct users in the mempool; using k={}", k, users.size(), effective_k);
    }

    std::vector<std::vector<double>> points;
    points.reserve(users.size());
    for (auto u : users) {
        const auto& counts = vectors[u - 1].counts;
        points.emplace_back(counts.begin(), counts.end());
    }
    const KMeansResult km = kmeans(points, effective_k, seed);

    // drop clusters left empty and renumber the rest densely
    std::vector<std::uint32_t> remap(effective_k, Clustering::kNoCluster);
    Clustering out;
    out.user_cluster.assign(vectors.size(), Clustering::kNoCluster);
    for (std::size_t i = 0; i < users.size(); ++i) {
        const std::uint32_t c = km.assignment[i];
        if (remap[c] == Clustering::kNoCluster) {
            remap[c] = 0;  // marker, numbered below
        }
    }
    std::uint32_t next = 0;
    for (std::uint32_t c = 0; c < effective_k; ++c) {
        if (remap[c] != Clustering::kNoCluster) {
            remap[c] = next++;
            out.clusters.push_back(Cluster{remap[c], {}, km.centroids[c]});
        }
    }
    for (std::size_t i = 0; i < users.size(); ++i) out.user_cluster[users[i] - 1] = remap[km.assignment[i]];
    for (const auto& tx : mempool) out.clusters[out.user_cluster[tx.source_user - 1]].members.push_back(tx.id);
    return out;
}

double centroid_distance(const UserVector& user, const Cluster& cluster) {
    if (user.counts.size() != cluster.centroid.size()) {
        throw RejectedInput("user vector and centroid differ in dimension");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < user.counts.size(); ++i) {
        const double d = static_cast<double>(user.counts[i]) - cluster.centroid[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

double tx_priority(const Transaction& tx, double now, const Cluster& cluster, const UserVector& source,
                   const PriorityWeights& weights) {
    const double waited = now - tx.submit_time;
    return weights.a * waited + weights.b * tx.fee + weights.c / (1.0 + centroid_distance(source, cluster));
}

// ---------------------------------------------------------------------------
// Flag field
// ---------------------------------------------------------------------------

std::uint32_t FlagField::popcount() const {
    return static_cast<std::uint32_t>(std::count(bits_.begin(), bits_.end(), true));
}

std::string FlagField::to_string() const {
    std::string s;
    s.reserve(bits_.size());
    for (bool b : bits_) s.push_back(b ? '1' : '0');
    return s;
}

FlagField FlagField::parse(std::string_view text) {
    FlagField f(static_cast<std::uint32_t>(text.size()));
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '1') {
            f.bits_[i] = true;
        } else if (text[i] != '0') {
            throw RejectedInput(fmt::format("flag text contains '{}'", text[i]));
        }
    }
    return f;
}

std::vector<std::uint8_t> FlagField::to_bytes() const {
    std::vector<std::uint8_t> out((bits_.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits_.size(); ++i) {
        if (bits_[i]) out[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
    }
    return out;
}

FlagField FlagField::from_bytes(std::span<const std::uint8_t> bytes, std::uint32_t bits) {
    if (bytes.size() != (std::size_t{bits} + 7) / 8) {
        throw RejectedInput(fmt::format("{} flag bytes cannot hold exactly {} bits", bytes.size(), bits));
    }
    FlagField f(bits);
    for (std::size_t i = 0; i < bytes.size() * 8; ++i) {
        const bool set = (bytes[i / 8] & (0x80u >> (i % 8))) != 0;
        if (i < bits) {
            f.bits_[i] = set;
        } else if (set) {
            throw RejectedInput("flag padding bits must be zero");
        }
    }
    return f;
}

FlagField encode_flag(std::span<const std::uint32_t> sizes, std::uint32_t capacity) {
    FlagField flag(capacity);
    std::uint64_t position = 1;
    for (auto s : sizes) {
        if (s == 0) throw RejectedInput("clusters in a block must be non-empty");
        if (position + s - 1 > capacity) {
            throw RejectedInput(fmt::format("cluster sizes exceed the block capacity {}", capacity));
        }
        flag.set(static_cast<std::uint32_t>(position));
        position += s;
    }
    return flag;
}

std::vector<std::uint32_t> decode_flag(const FlagField& flag) {
    if (flag.size() == 0 || !flag.test(1)) throw MalformedFlag("the first flag bit must be set");
    std::vector<std::uint32_t> offsets;
    for (std::uint32_t i = 1; i <= flag.size(); ++i) {
        if (flag.test(i)) offsets.push_back(i);
    }
    return offsets;
}

std::vector<std::uint32_t> decode_flag(const BlockHeader& header) { return decode_flag(header.flag); }

std::vector<std::uint32_t> cluster_sizes(const FlagField& flag, std::uint32_t body_size) {
    const auto offsets = decode_flag(flag);
    if (offsets.back() > body_size) {
        throw MalformedFlag(fmt::format("cluster starts at {} beyond a body of {}", offsets.back(), body_size));
    }
    std::vector<std::uint32_t> sizes;
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        const std::uint32_t end = i + 1 < offsets.size() ? offsets[i + 1] : body_size + 1;
        sizes.push_back(end - offsets[i]);
    }
    return sizes;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

struct Out {
    std::vector<std::uint8_t> bytes;
    void uint(std::uint64_t v, int width) {
        for (int i = 0; i < width; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        uint(bits, 8);
    }
    void raw(std::span<const std::uint8_t> b) { bytes.insert(bytes.end(), b.begin(), b.end()); }
};

struct In {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;
    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw RejectedInput("block: truncated input");
    }
    std::uint64_t uint(int width) {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[pos++]) << (8 * i);
        return v;
    }
    double f64() {
        const std::uint64_t bits = uint(8);
        double v = 0;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    std::span<const std::uint8_t> raw(std::size_t n) {
        need(n);
        auto s = bytes.subspan(pos, n);
        pos += n;
        return s;
    }
};

void write_tx(Out& o, const Transaction& tx) {
    o.uint(tx.id, 8);
    o.uint(tx.source_user, 4);
    o.uint(tx.tx_class, 1);
    o.f64(tx.fee);
    o.uint(tx.size_bytes, 4);
    o.f64(tx.submit_time);
}

Transaction read_tx(In& in) {
    Transaction tx;
    tx.id = in.uint(8);
    tx.source_user = static_cast<UserId>(in.uint(4));
    tx.tx_class = static_cast<std::uint8_t>(in.uint(1));
    tx.fee = in.f64();
    tx.size_bytes = static_cast<std::uint32_t>(in.uint(4));
    tx.submit_time = in.f64();
    return tx;
}

void write_header(Out& o, const BlockHeader& h) {
    o.raw(h.prev_hash);
    o.raw(h.merkle_root);
    o.uint(h.flag.size(), 4);
    o.raw(h.flag.to_bytes());
    o.uint(h.round, 8);
    o.uint(h.producer, 4);
    o.f64(h.timestamp);
}

BlockHeader read_header(In& in) {
    BlockHeader h;
    auto prev = in.raw(32);
    std::copy(prev.begin(), prev.end(), h.prev_hash.begin());
    auto root = in.raw(32);
    std::copy(root.begin(), root.end(), h.merkle_root.begin());
    const auto bits = static_cast<std::uint32_t>(in.uint(4));
    h.flag = FlagField::from_bytes(in.raw((std::size_t{bits} + 7) / 8), bits);
    h.round = in.uint(8);
    h.producer = static_cast<MinerId>(in.uint(4));
    h.timestamp = in.f64();
    return h;
}

}  // namespace

std::vector<std::uint8_t> serialize_transaction(const Transaction& tx) {
    Out o;
    write_tx(o, tx);
    return std::move(o.bytes);
}

std::vector<std::uint8_t> BlockHeader::serialize() const {
    Out o;
    write_header(o, *this);
    return std::move(o.bytes);
}

crypto::Digest BlockHeader::hash() const { return crypto::sha256(serialize()); }

std::vector<std::uint8_t> Block::serialize() const {
    Out o;
    write_header(o, header);
    o.uint(body.size(), 4);
    for (const auto& tx : body) write_tx(o, tx);
    return std::move(o.bytes);
}

Block Block::deserialize(std::span<const std::uint8_t> bytes) {
    In in{bytes};
    Block b;
    b.header = read_header(in);
    const auto count = in.uint(4);
    in.need(count * 33);
    b.body.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) b.body.push_back(read_tx(in));
    if (in.pos != bytes.size()) throw RejectedInput("block: trailing bytes");
    return b;
}

crypto::Digest merkle_root(std::span<const Transaction> body) {
    if (body.empty()) return crypto::Digest{};
    std::vector<crypto::Digest> level;
    level.reserve(body.size());
    for (const auto& tx : body) level.push_back(crypto::sha256(serialize_transaction(tx)));
    while (level.size() > 1) {
        if (level.size() % 2 == 1) level.push_back(level.back());
        std::vector<crypto::Digest> up;
        up.reserve(level.size() / 2);
        for (std::size_t i = 0; i < level.size(); i += 2) {
            std::uint8_t pair[64];
            std::memcpy(pair, level[i].data(), 32);
            std::memcpy(pair + 32, level[i + 1].data(), 32);
            up.push_back(crypto::sha256(std::span<const std::uint8_t>(pair, 64)));
        }
        level = std::move(up);
    }
    return level.front();
}

// ---------------------------------------------------------------------------
// Packing
// ---------------------------------------------------------------------------

bool RankedTx::ranks_before(const RankedTx& other) const {
    if (priority != other.priority) return priority > other.priority;
    if (submit_time != other.submit_time) return submit_time < other.submit_time;
    return id < other.id;
}

std::vector<RankedTx> rank_mempool(const Clustering& clustering, std::span<const Transaction> mempool,
                                   std::span<const UserVector> vectors, const PriorityWeights& weights, double now) {
    std::vector<RankedTx> ranked;
    ranked.reserve(mempool.size());
    for (std::uint32_t p = 0; p < mempool.size(); ++p) {
        const Transaction& tx = mempool[p];
        if (tx.source_user < 1 || tx.source_user > clustering.user_cluster.size() ||
            tx.source_user > vectors.size()) {
            throw RejectedInput(fmt::format("transaction {} has an unknown source user {}", tx.id, tx.source_user));
        }
        const std::uint32_t c = clustering.user_cluster[tx.source_user - 1];
        if (c == Clustering::kNoCluster || c >= clustering.clusters.size()) {
            throw RejectedInput(fmt::format("transaction {} is not assigned to a cluster", tx.id));
        }
        const double pr = tx_priority(tx, now, clustering.clusters[c], vectors[tx.source_user - 1], weights);
        ranked.push_back(RankedTx{pr, tx.submit_time, tx.id, p, c});
    }
    return ranked;
}

std::optional<Block> pack_block(const Clustering& clustering, std::span<const Transaction> mempool,
                                std::span<const UserVector> vectors, const PriorityWeights& weights,
                                std::uint32_t capacity, double now, const crypto::Digest& prev_hash,
                                std::uint64_t round, MinerId producer) {
    if (capacity == 0) throw RejectedInput("block capacity must be at least 1");
    auto ranked = rank_mempool(clustering, mempool, vectors, weights, now);
    if (ranked.empty()) return std::nullopt;

    const auto cmp = [](const RankedTx& x, const RankedTx& y) { return x.ranks_before(y); };
    const std::size_t take = std::min<std::size_t>(capacity, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end(), cmp);
    ranked.resize(take);

    // cluster order follows each cluster's best selected member
    std::vector<std::uint32_t> order;
    std::vector<std::vector<const RankedTx*>> groups(clustering.clusters.size());
    for (const auto& r : ranked) {
        if (groups[r.cluster].empty()) order.push_back(r.cluster);
        groups[r.cluster].push_back(&r);
    }

    Block block;
    std::vector<std::uint32_t> sizes;
    block.body.reserve(take);
    for (auto c : order) {
        sizes.push_back(static_cast<std::uint32_t>(groups[c].size()));
        for (const RankedTx* r : groups[c]) block.body.push_back(mempool[r->position]);
    }
    block.header.prev_hash = prev_hash;
    block.header.flag = encode_flag(sizes, capacity);
    block.header.merkle_root = merkle_root(block.body);
    block.header.round = round;
    block.header.producer = producer;
    block.header.timestamp = now;
    return block;
}

PackResult pack_from_context(const PackingContext& context, const crypto::Digest& prev_hash, std::uint64_t round,
                             MinerId producer) {
    PackResult result;
    if (context.snapshot.empty()) return result;
    result.clustering = cluster_mempool(context.snapshot, context.vectors, context.k, context.seed);
    result.block = pack_block(result.clustering, context.snapshot, context.vectors, context.weights,
                              context.capacity, context.now, prev_hash, round, producer);
    return result;
}

// ---------------------------------------------------------------------------
// Projection
// ---------------------------------------------------------------------------

PcaResult pca_project(std::span<const std::vector<double>> points) {
    if (points.size() < 2) throw RejectedInput("PCA needs at least 2 points");
    const auto n = static_cast<Eigen::Index>(points.size());
    const auto d = static_cast<Eigen::Index>(points.front().size());
    if (d == 0) throw RejectedInput("PCA needs non-empty vectors");
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(points[static_cast<std::size_t>(i)].size()) != d) {
            throw RejectedInput("PCA points differ in dimension");
        }
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = points[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    x.rowwise() -= x.colwise().mean();
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw RejectedInput("PCA eigendecomposition failed");

    const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
    const double scale = std::max(1.0, cov.trace());
    PcaResult result;
    result.coords.assign(points.size(), {0.0, 0.0});
    for (int c = 0; c < 2; ++c) {
        std::vector<double> component(static_cast<std::size_t>(d), 0.0);
        const Eigen::Index idx = d - 1 - c;
        if (idx >= 0 && values(idx) > 1e-12 * scale) {
            Eigen::VectorXd v = solver.eigenvectors().col(idx);
            Eigen::Index arg = 0;
            for (Eigen::Index j = 1; j < d; ++j) {
                if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
            }
            if (v(arg) < 0) v = -v;
            const Eigen::VectorXd proj = x * v;
            for (Eigen::Index i = 0; i < n; ++i) result.coords[static_cast<std::size_t>(i)][c] = proj(i);
            for (Eigen::Index j = 0; j < d; ++j) component[static_cast<std::size_t>(j)] = v(j);
            result.variances[c] = values(idx);
        }
        result.components.push_back(std::move(component));
    }
    return result;
}

}  // namespace pous::packing
