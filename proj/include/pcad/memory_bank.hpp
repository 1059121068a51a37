#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pcad/kdtree.hpp"
#include "pcad/nn.hpp"

namespace pcad::bank {

struct Provenance {
    int cloud_id = -1;
    int item_id = -1;  // patch index for f1 entries, point index for f2 entries
    bool operator==(const Provenance&) const = default;
};

// Flat store of fixed-dimension feature vectors with exact nearest-neighbor
// queries (linear scan with partial-distance early exit; ties broken by the
// smaller entry index). Immutable once built; concurrent queries are safe.
class MemoryBank {
public:
    explicit MemoryBank(std::size_t dim = 0) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return prov_.size(); }
    bool empty() const { return prov_.empty(); }

    void add(const double* f, Provenance p) {
        data_.insert(data_.end(), f, f + dim_);
        prov_.push_back(p);
    }
    void add(const std::vector<double>& f, Provenance p) {
        if (f.size() != dim_) throw std::invalid_argument("feature dimension mismatch");
        add(f.data(), p);
    }

    const double* entry(std::size_t i) const { return &data_[i * dim_]; }
    const Provenance& provenance(std::size_t i) const { return prov_[i]; }
    const std::vector<double>& raw() const { return data_; }

    std::vector<Neighbor> knn(const double* f, int k) const {
        if (empty()) throw std::runtime_error("empty memory bank");
        if (k < 1) throw std::invalid_argument("k must be >= 1");
        std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(k), size());
        // sorted-by-(d2, index) candidate list; small k keeps insertion cheap
        std::vector<Neighbor> best;
        best.reserve(want + 1);
        for (std::size_t e = 0; e < size(); ++e) {
            const double* v = entry(e);
            double bound = best.size() == want ? best.back().distance
                                               : std::numeric_limits<double>::infinity();
            double d2 = 0.0;
            std::size_t c = 0;
            for (; c < dim_; ++c) {
                double diff = f[c] - v[c];
                d2 += diff * diff;
                if (d2 > bound) break;
            }
            if (c < dim_) continue;  // early exit: provably not among the best
            Neighbor cand{static_cast<int>(e), d2};
            auto pos = std::lower_bound(best.begin(), best.end(), cand,
                                        [](const Neighbor& a, const Neighbor& b) {
                                            return a.distance != b.distance
                                                       ? a.distance < b.distance
                                                       : a.index < b.index;
                                        });
            if (best.size() == want && pos == best.end()) continue;
            best.insert(pos, cand);
            if (best.size() > want) best.pop_back();
        }
        for (auto& n : best) n.distance = std::sqrt(n.distance);
        return best;
    }

private:
    std::size_t dim_;
    std::vector<double> data_;
    std::vector<Provenance> prov_;
};

// Inverse-distance-weighted mean of the k nearest stored features; reduces
// to the stored vector itself (exactly) when the query is in the bank and
// k = 1.
inline std::vector<double> reconstruct(const MemoryBank& bank, const double* f, int k) {
    auto nbrs = bank.knn(f, k);
    double total = 0.0;
    std::vector<double> weights(nbrs.size());
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
        weights[i] = 1.0 / (nbrs[i].distance + 1e-9);
        total += weights[i];
    }
    std::vector<double> out(bank.dim(), 0.0);
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
        double w = weights[i] / total;
        const double* v = bank.entry(static_cast<std::size_t>(nbrs[i].index));
        for (std::size_t c = 0; c < bank.dim(); ++c) out[c] += w * v[c];
    }
    return out;
}

inline std::vector<double> reconstruct(const MemoryBank& bank, const std::vector<double>& f,
                                       int k) {
    if (f.size() != bank.dim()) throw std::invalid_argument("feature dimension mismatch");
    return reconstruct(bank, f.data(), k);
}

// Per-point L2 distance to the reconstruction: the 2D expert's score map.
inline std::vector<double> score_x2(const MemoryBank& bank2d, const nn::Matrix& f2, int k2) {
    if (f2.cols != bank2d.dim()) throw std::invalid_argument("f2 dimension mismatch");
    std::vector<double> scores(f2.rows);
    for (std::size_t r = 0; r < f2.rows; ++r) {
        const double* f = &f2.data[r * f2.cols];
        auto rec = reconstruct(bank2d, f, k2);
        double d2 = 0.0;
        for (std::size_t c = 0; c < f2.cols; ++c) {
            double diff = f[c] - rec[c];
            d2 += diff * diff;
        }
        scores[r] = std::sqrt(d2);
    }
    return scores;
}

// Object-level scores are the map maxima.
inline std::pair<double, double> object_scores(const std::vector<double>& x1,
                                               const std::vector<double>& x2) {
    if (x1.empty() || x2.empty()) throw std::invalid_argument("empty score map");
    return {*std::max_element(x1.begin(), x1.end()),
            *std::max_element(x2.begin(), x2.end())};
}

struct DualMemoryBank {
    MemoryBank bank3d;
    MemoryBank bank2d;
    std::vector<std::vector<int>> links;  // per bank3d entry: bank2d entry ids

    void validate() const {
        if (links.size() != bank3d.size()) throw std::runtime_error("links/bank3d mismatch");
        std::vector<char> reachable(bank2d.size(), 0);
        for (const auto& l : links)
            for (int e : l) {
                if (e < 0 || static_cast<std::size_t>(e) >= bank2d.size())
                    throw std::runtime_error("link target out of range");
                reachable[static_cast<std::size_t>(e)] = 1;
            }
        for (char r : reachable)
            if (!r) throw std::runtime_error("unreachable bank2d entry");
    }
};

// Per-cloud inputs for bank construction: patch features, their member
// points, and the per-point 2D features.
struct CloudBankInput {
    int cloud_id = -1;
    std::vector<std::vector<double>> patch_f1;
    std::vector<std::vector<int>> patch_members;
    nn::Matrix f2;
};

// Greedy farthest-first pick order over feature vectors. Starts from index 0
// (input order is the determinism contract); ties go to the smaller index.
inline std::vector<int> farthest_first_order(const std::vector<const double*>& feats,
                                             std::size_t dim, std::size_t n_keep) {
    std::vector<int> picks;
    if (feats.empty() || n_keep == 0) return picks;
    picks.reserve(n_keep);
    std::vector<double> min_d2(feats.size(), std::numeric_limits<double>::infinity());
    int current = 0;
    picks.push_back(current);
    auto d2 = [&](const double* a, const double* b) {
        double s = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            double diff = a[c] - b[c];
            s += diff * diff;
        }
        return s;
    };
    while (picks.size() < n_keep) {
        const double* cur = feats[static_cast<std::size_t>(current)];
        int best = -1;
        double best_d2 = -1.0;
        for (std::size_t i = 0; i < feats.size(); ++i) {
            double d = d2(cur, feats[i]);
            if (d < min_d2[i]) min_d2[i] = d;
            if (min_d2[i] > best_d2) {
                best_d2 = min_d2[i];
                best = static_cast<int>(i);
            }
        }
        current = best;
        picks.push_back(current);
        min_d2[static_cast<std::size_t>(current)] = 0.0;
    }
    return picks;
}

// Shape-guided retention: keep the least redundant fraction of patch
// features (greedy farthest-first coverage of f1 space), then store the f2
// of every member point of each retained patch. f2 entries shared between
// retained patches are stored once and linked from both.
inline DualMemoryBank build_dual_bank(const std::vector<CloudBankInput>& clouds,
                                      double retention_fraction, int k_retain_min) {
    if (clouds.empty()) throw std::invalid_argument("empty training set");
    if (!(retention_fraction > 0.0) || retention_fraction > 1.0)
        throw std::invalid_argument("retention fraction must be in (0, 1]");

    struct PatchRef {
        const CloudBankInput* cloud;
        std::size_t patch;
    };
    std::vector<PatchRef> patches;
    std::vector<const double*> feats;
    std::size_t dim1 = 0;
    for (const auto& c : clouds) {
        if (c.patch_f1.size() != c.patch_members.size())
            throw std::invalid_argument("patch feature/member count mismatch");
        for (std::size_t p = 0; p < c.patch_f1.size(); ++p) {
            if (dim1 == 0) dim1 = c.patch_f1[p].size();
            if (c.patch_f1[p].size() != dim1)
                throw std::invalid_argument("inconsistent f1 dimension");
            patches.push_back({&c, p});
            feats.push_back(c.patch_f1[p].data());
        }
    }
    if (patches.empty()) throw std::invalid_argument("no patches to retain");

    std::size_t n_total = patches.size();
    std::size_t n_keep = static_cast<std::size_t>(
        std::llround(retention_fraction * static_cast<double>(n_total)));
    n_keep = std::max<std::size_t>(n_keep, std::min<std::size_t>(
                                               static_cast<std::size_t>(std::max(k_retain_min, 1)),
                                               n_total));
    n_keep = std::min(n_keep, n_total);

    auto picks = farthest_first_order(feats, dim1, n_keep);

    DualMemoryBank out;
    std::size_t dim2 = clouds.front().f2.cols;
    out.bank3d = MemoryBank(dim1);
    out.bank2d = MemoryBank(dim2);
    std::map<std::pair<int, int>, int> f2_entry;  // (cloud_id, point) -> bank2d index
    for (int pick : picks) {
        const auto& ref = patches[static_cast<std::size_t>(pick)];
        const auto& cloud = *ref.cloud;
        out.bank3d.add(cloud.patch_f1[ref.patch],
                       {cloud.cloud_id, static_cast<int>(ref.patch)});
        std::vector<int> link;
        for (int point : cloud.patch_members[ref.patch]) {
            auto key = std::make_pair(cloud.cloud_id, point);
            auto it = f2_entry.find(key);
            int entry;
            if (it == f2_entry.end()) {
                entry = static_cast<int>(out.bank2d.size());
                out.bank2d.add(&cloud.f2.data[static_cast<std::size_t>(point) * dim2],
                               {cloud.cloud_id, point});
                f2_entry.emplace(key, entry);
            } else {
                entry = it->second;
            }
            link.push_back(entry);
        }
        std::sort(link.begin(), link.end());
        link.erase(std::unique(link.begin(), link.end()), link.end());
        out.links.push_back(std::move(link));
    }
    out.validate();
    return out;
}

// --- persistence -------------------------------------------------------------
// Binary: magic, dims and counts, then raw little-endian float64 payloads.
// Provenance and links live in a JSON sidecar at <path>.json.

static_assert(std::endian::native == std::endian::little,
              "bank files are little-endian; big-endian hosts need byte swaps");

inline void save_dual_bank(const DualMemoryBank& bank, const std::string& path,
                           const std::string& config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write bank file: " + path);
    const char magic[8] = {'P', 'C', 'A', 'D', 'B', 'N', 'K', '1'};
    out.write(magic, 8);
    std::uint64_t header[4] = {bank.bank3d.dim(), bank.bank3d.size(), bank.bank2d.dim(),
                               bank.bank2d.size()};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(bank.bank3d.raw().data()),
              static_cast<std::streamsize>(bank.bank3d.raw().size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(bank.bank2d.raw().data()),
              static_cast<std::streamsize>(bank.bank2d.raw().size() * sizeof(double)));
    if (!out) throw std::runtime_error("short write on bank file: " + path);

    nlohmann::json side;
    side["config_hash"] = config_hash;
    auto prov_list = [](const MemoryBank& b) {
        nlohmann::json arr = nlohmann::json::array();
        for (std::size_t i = 0; i < b.size(); ++i)
            arr.push_back({b.provenance(i).cloud_id, b.provenance(i).item_id});
        return arr;
    };
    side["bank3d_provenance"] = prov_list(bank.bank3d);
    side["bank2d_provenance"] = prov_list(bank.bank2d);
    side["links"] = bank.links;
    std::ofstream sout(path + ".json", std::ios::binary);
    if (!sout) throw std::runtime_error("cannot write bank sidecar: " + path + ".json");
    sout << side.dump(2) << "\n";
}

struct LoadedBank {
    DualMemoryBank bank;
    std::string config_hash;
};

inline LoadedBank load_dual_bank(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open bank file: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != "PCADBNK1")
        throw std::runtime_error("bad bank file magic: " + path);
    std::uint64_t header[4];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in) throw std::runtime_error("truncated bank header: " + path);

    std::ifstream sin(path + ".json");
    if (!sin) throw std::runtime_error("missing bank sidecar: " + path + ".json");
    nlohmann::json side = nlohmann::json::parse(sin);

    LoadedBank out;
    out.config_hash = side.at("config_hash").get<std::string>();
    auto read_bank = [&](std::uint64_t dim, std::uint64_t count, const nlohmann::json& prov) {
        MemoryBank b(dim);
        std::vector<double> row(dim);
        if (prov.size() != count) throw std::runtime_error("provenance count mismatch");
        for (std::uint64_t i = 0; i < count; ++i) {
            in.read(reinterpret_cast<char*>(row.data()),
                    static_cast<std::streamsize>(dim * sizeof(double)));
            if (!in) throw std::runtime_error("truncated bank payload: " + path);
            b.add(row, {prov[i][0].get<int>(), prov[i][1].get<int>()});
        }
        return b;
    };
    out.bank.bank3d = read_bank(header[0], header[1], side.at("bank3d_provenance"));
    out.bank.bank2d = read_bank(header[2], header[3], side.at("bank2d_provenance"));
    out.bank.links = side.at("links").get<std::vector<std::vector<int>>>();
    out.bank.validate();
    return out;
}

}  // namespace pcad::bank
