#include "pwlnet/symmetry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>

namespace pwlnet {

namespace {
constexpr double kEntryTol = 1e-12;
}

bool Permutation::is_identity() const {
    for (int i = 0; i < size(); ++i)
        if (images[i] != i) return false;
    return true;
}

Permutation Permutation::inverse() const {
    Permutation inv;
    inv.images.resize(images.size());
    for (int i = 0; i < size(); ++i) inv.images[images[i]] = i;
    return inv;
}

Permutation Permutation::identity(int n) {
    Permutation p;
    p.images.resize(n);
    std::iota(p.images.begin(), p.images.end(), 0);
    return p;
}

Permutation compose(const Permutation& a, const Permutation& b) {
    Permutation c;
    c.images.resize(a.images.size());
    for (int i = 0; i < a.size(); ++i) c.images[i] = a.images[b.images[i]];
    return c;
}

Mat permutation_matrix(const Permutation& p) {
    const int n = p.size();
    Mat M = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) M(p.images[i], i) = 1.0;
    return M;
}

int PermGroup::degree() const {
    if (!elements.empty()) return elements.front().size();
    if (!generators.empty()) return generators.front().size();
    return 0;
}

bool PermGroup::contains(const Permutation& p) const {
    return std::binary_search(elements.begin(), elements.end(), p);
}

PermGroup PermGroup::trivial(int n) {
    PermGroup g;
    g.generators = {Permutation::identity(n)};
    g.elements = {Permutation::identity(n)};
    return g;
}

PermGroup PermGroup::from_generators(std::vector<Permutation> gens, size_t order_cap) {
    if (gens.empty()) throw std::invalid_argument("from_generators: no generators");
    const int n = gens.front().size();
    std::set<Permutation> closed{Permutation::identity(n)};
    std::vector<Permutation> frontier(closed.begin(), closed.end());
    while (!frontier.empty()) {
        std::vector<Permutation> next;
        for (const auto& e : frontier)
            for (const auto& g : gens) {
                Permutation prod = compose(g, e);
                if (closed.insert(prod).second) next.push_back(std::move(prod));
            }
        if (closed.size() > order_cap)
            throw std::runtime_error("PermGroup: order cap exceeded");
        frontier = std::move(next);
    }
    PermGroup out;
    out.generators = std::move(gens);
    out.elements.assign(closed.begin(), closed.end());
    return out;
}

int ClusterPartition::n_nodes() const {
    int n = 0;
    for (const auto& b : blocks) n += static_cast<int>(b.size());
    return n;
}

std::vector<int> ClusterPartition::block_of_node() const {
    std::vector<int> owner(n_nodes(), -1);
    for (size_t k = 0; k < blocks.size(); ++k)
        for (int i : blocks[k]) owner[i] = static_cast<int>(k);
    return owner;
}

void ClusterPartition::canonicalize() {
    for (auto& b : blocks) std::sort(b.begin(), b.end());
    std::sort(blocks.begin(), blocks.end());
}

bool ClusterPartition::same_blocks(const ClusterPartition& other) const {
    return blocks == other.blocks;
}

ClusterPartition singleton_partition(int n) {
    ClusterPartition p;
    for (int i = 0; i < n; ++i) p.blocks.push_back({i});
    p.provenance = Provenance::Manual;
    return p;
}

ClusterPartition partition_from_blocks(std::vector<std::vector<int>> blocks,
                                       Provenance prov) {
    ClusterPartition p;
    p.blocks = std::move(blocks);
    p.provenance = prov;
    p.canonicalize();
    return p;
}

// ---- automorphisms --------------------------------------------------------

namespace {

bool rows_compatible(const Mat& G, int i, int j) {
    // candidate j for image of i: diagonal and sorted row/column multisets agree
    if (std::abs(G(i, i) - G(j, j)) > kEntryTol) return false;
    std::vector<double> ri, rj, ci, cj;
    const int n = static_cast<int>(G.rows());
    for (int k = 0; k < n; ++k) {
        ri.push_back(G(i, k));
        rj.push_back(G(j, k));
        ci.push_back(G(k, i));
        cj.push_back(G(k, j));
    }
    auto close_multiset = [](std::vector<double> a, std::vector<double> b) {
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        for (size_t k = 0; k < a.size(); ++k)
            if (std::abs(a[k] - b[k]) > kEntryTol) return false;
        return true;
    };
    return close_multiset(ri, rj) && close_multiset(ci, cj);
}

void backtrack_autos(const Mat& G, std::vector<int>& image, std::vector<bool>& used,
                     int depth, const std::vector<std::vector<int>>& candidates,
                     std::vector<Permutation>& out, size_t order_cap) {
    const int n = static_cast<int>(G.rows());
    if (depth == n) {
        out.push_back(Permutation{image});
        if (out.size() > order_cap)
            throw std::runtime_error("automorphism_group: order cap exceeded");
        return;
    }
    for (int cand : candidates[depth]) {
        if (used[cand]) continue;
        bool ok = true;
        for (int j = 0; j < depth && ok; ++j) {
            if (std::abs(G(cand, image[j]) - G(depth, j)) > kEntryTol ||
                std::abs(G(image[j], cand) - G(j, depth)) > kEntryTol)
                ok = false;
        }
        if (std::abs(G(cand, cand) - G(depth, depth)) > kEntryTol) ok = false;
        if (!ok) continue;
        image[depth] = cand;
        used[cand] = true;
        backtrack_autos(G, image, used, depth + 1, candidates, out, order_cap);
        used[cand] = false;
    }
}

std::vector<Permutation> minimal_generators(const std::vector<Permutation>& elements) {
    const int n = elements.front().size();
    std::vector<Permutation> gens;
    std::set<Permutation> span{Permutation::identity(n)};
    for (const auto& e : elements) {
        if (span.count(e)) continue;
        gens.push_back(e);
        // re-close
        std::vector<Permutation> frontier(span.begin(), span.end());
        while (!frontier.empty()) {
            std::vector<Permutation> next;
            for (const auto& s : frontier)
                for (const auto& g : gens) {
                    Permutation prod = compose(g, s);
                    if (span.insert(prod).second) next.push_back(std::move(prod));
                }
            frontier = std::move(next);
        }
    }
    if (gens.empty()) gens.push_back(Permutation::identity(n));
    return gens;
}

}  // namespace

PermGroup automorphism_group(const Mat& G, int n_cap, size_t order_cap) {
    const int n = static_cast<int>(G.rows());
    if (G.cols() != n) throw std::invalid_argument("automorphism_group: square matrix required");
    if (n > n_cap) throw std::invalid_argument("automorphism_group: N over cap");

    std::vector<std::vector<int>> candidates(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (rows_compatible(G, i, j)) candidates[i].push_back(j);

    std::vector<Permutation> elements;
    std::vector<int> image(n);
    std::vector<bool> used(n, false);
    backtrack_autos(G, image, used, 0, candidates, elements, order_cap);
    std::sort(elements.begin(), elements.end());

    PermGroup out;
    out.elements = std::move(elements);
    out.generators = minimal_generators(out.elements);
    return out;
}

std::vector<PermGroup> subgroups(const PermGroup& G, size_t order_cap) {
    if (G.order() > order_cap) throw std::invalid_argument("subgroups: order over cap");
    const int n = G.degree();

    using Elems = std::vector<Permutation>;
    std::set<Elems> found;

    // cyclic subgroups
    for (const auto& g : G.elements) {
        Elems cyc;
        Permutation p = Permutation::identity(n);
        do {
            cyc.push_back(p);
            p = compose(g, p);
        } while (!p.is_identity());
        std::sort(cyc.begin(), cyc.end());
        found.insert(cyc);
    }

    // pairwise joins to fixpoint
    bool grew = true;
    while (grew) {
        grew = false;
        std::vector<Elems> current(found.begin(), found.end());
        for (size_t a = 0; a < current.size(); ++a)
            for (size_t b = a + 1; b < current.size(); ++b) {
                std::vector<Permutation> gens = current[a];
                gens.insert(gens.end(), current[b].begin(), current[b].end());
                PermGroup join = PermGroup::from_generators(gens, G.order());
                if (found.insert(join.elements).second) grew = true;
            }
    }

    std::vector<PermGroup> out;
    for (const auto& elems : found) {
        PermGroup h;
        h.elements = elems;
        h.generators = minimal_generators(elems);
        out.push_back(std::move(h));
    }
    std::sort(out.begin(), out.end(),
              [](const PermGroup& a, const PermGroup& b) {
                  if (a.order() != b.order()) return a.order() < b.order();
                  return a.elements < b.elements;
              });
    return out;
}

ClusterPartition orbit_partition(const PermGroup& H) {
    const int n = H.degree();
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& g : H.generators)
        for (int i = 0; i < n; ++i) {
            int a = find(i), b = find(g(i));
            if (a != b) parent[a] = b;
        }
    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < n; ++i) groups[find(i)].push_back(i);
    ClusterPartition p;
    for (auto& [root, members] : groups) p.blocks.push_back(std::move(members));
    p.canonicalize();
    p.provenance = Provenance::Symmetry;
    p.subgroup = H;
    return p;
}

std::vector<PermGroup> geometric_decomposition(const PermGroup& G) {
    const int n = G.degree();
    const auto& gens = G.generators;
    const int k = static_cast<int>(gens.size());

    auto support = [&](const Permutation& p) {
        std::vector<int> s;
        for (int i = 0; i < n; ++i)
            if (p(i) != i) s.push_back(i);
        return s;
    };
    std::vector<std::vector<int>> supp(k);
    for (int i = 0; i < k; ++i) supp[i] = support(gens[i]);

    // connected components of the support-overlap graph on generators
    std::vector<int> comp(k, -1);
    int n_comp = 0;
    for (int i = 0; i < k; ++i) {
        if (comp[i] >= 0 || supp[i].empty()) continue;
        std::vector<int> stack{i};
        comp[i] = n_comp;
        while (!stack.empty()) {
            int a = stack.back();
            stack.pop_back();
            for (int b = 0; b < k; ++b) {
                if (comp[b] >= 0 || supp[b].empty()) continue;
                bool overlap = false;
                for (int x : supp[a])
                    if (std::find(supp[b].begin(), supp[b].end(), x) != supp[b].end()) {
                        overlap = true;
                        break;
                    }
                if (overlap) {
                    comp[b] = n_comp;
                    stack.push_back(b);
                }
            }
        }
        ++n_comp;
    }

    std::vector<PermGroup> factors;
    for (int c = 0; c < n_comp; ++c) {
        std::vector<Permutation> fgens;
        for (int i = 0; i < k; ++i)
            if (comp[i] == c) fgens.push_back(gens[i]);
        factors.push_back(PermGroup::from_generators(fgens));
    }

    // nodes fixed by every generator each contribute a trivial factor
    std::vector<bool> moved(n, false);
    for (int i = 0; i < k; ++i)
        for (int x : supp[i]) moved[x] = true;
    for (int i = 0; i < n; ++i)
        if (!moved[i]) factors.push_back(PermGroup::trivial(n));

    // verify |Gamma| = prod |H_i|
    size_t prod = 1;
    for (const auto& f : factors) prod *= f.order();
    if (prod != G.order())
        throw NumericalError("geometric_decomposition: order product mismatch");
    return factors;
}

ClusterPartition apply_permutation(const ClusterPartition& P, const Permutation& g) {
    ClusterPartition out = P;
    for (auto& b : out.blocks)
        for (auto& i : b) i = g(i);
    out.canonicalize();
    return out;
}

bool partitions_conjugate(const ClusterPartition& a, const ClusterPartition& b,
                          const PermGroup& G) {
    for (const auto& g : G.elements)
        if (apply_permutation(a, g).blocks == b.blocks) return true;
    return false;
}

namespace {

std::vector<std::vector<int>> canonical_orbit_min(const ClusterPartition& p,
                                                  const PermGroup& G) {
    std::vector<std::vector<int>> best = p.blocks;
    for (const auto& g : G.elements) {
        auto img = apply_permutation(p, g).blocks;
        if (img < best) best = std::move(img);
    }
    return best;
}

}  // namespace

std::vector<ClusterPartition> enumerate_symmetry_clusters(const Mat& G,
                                                          bool collapse_conjugates) {
    PermGroup gamma = automorphism_group(G);
    std::vector<PermGroup> factors = geometric_decomposition(gamma);
    std::vector<std::vector<PermGroup>> factor_subs;
    for (const auto& f : factors) factor_subs.push_back(subgroups(f));

    std::vector<ClusterPartition> out;
    std::map<std::vector<std::vector<int>>, size_t> by_blocks;

    std::vector<size_t> idx(factors.size(), 0);
    while (true) {
        std::vector<Permutation> gens;
        for (size_t f = 0; f < factors.size(); ++f) {
            const auto& sub = factor_subs[f][idx[f]];
            gens.insert(gens.end(), sub.generators.begin(), sub.generators.end());
        }
        PermGroup sigma = PermGroup::from_generators(gens);
        ClusterPartition part = orbit_partition(sigma);
        auto it = by_blocks.find(part.blocks);
        if (it == by_blocks.end()) {
            part.inducing_subgroups = {sigma};
            by_blocks[part.blocks] = out.size();
            out.push_back(std::move(part));
        } else {
            auto& existing = out[it->second].inducing_subgroups;
            bool known = false;
            for (const auto& s : existing)
                if (s.elements == sigma.elements) known = true;
            if (!known) existing.push_back(sigma);
        }
        // advance the mixed-radix counter
        size_t f = 0;
        while (f < idx.size() && ++idx[f] == factor_subs[f].size()) idx[f++] = 0;
        if (f == idx.size()) break;
    }

    if (collapse_conjugates) {
        std::map<std::vector<std::vector<int>>, ClusterPartition> reps;
        for (auto& p : out) {
            auto key = canonical_orbit_min(p, gamma);
            if (!reps.count(key)) reps.emplace(key, std::move(p));
        }
        out.clear();
        for (auto& [key, p] : reps) out.push_back(std::move(p));
    }
    std::sort(out.begin(), out.end(), [](const ClusterPartition& a, const ClusterPartition& b) {
        if (a.n_clusters() != b.n_clusters()) return a.n_clusters() < b.n_clusters();
        return a.blocks < b.blocks;
    });
    return out;
}

Mat merged_laplacian(const Mat& G, const ClusterPartition& merged) {
    Mat Gbar = G;
    const auto owner = merged.block_of_node();
    const int n = static_cast<int>(G.rows());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && owner[i] == owner[j]) Gbar(i, j) = 0.0;
    for (int i = 0; i < n; ++i) {
        double rowsum = 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i) rowsum += Gbar(i, j);
        Gbar(i, i) = -rowsum;
    }
    return Gbar;
}

bool laplacian_merge_check(const Mat& G, const ClusterPartition& merged) {
    const Mat Gbar = merged_laplacian(G, merged);
    PermGroup gbar = automorphism_group(Gbar);
    const auto owner = merged.block_of_node();

    // Largest subgroup preserving each block setwise; valid iff its orbits
    // are exactly the blocks.
    std::vector<Permutation> keep;
    for (const auto& g : gbar.elements) {
        bool preserves = true;
        for (int i = 0; i < g.size() && preserves; ++i)
            if (owner[g(i)] != owner[i]) preserves = false;
        if (preserves) keep.push_back(g);
    }
    if (keep.empty()) return false;
    PermGroup H;
    H.elements = keep;
    H.generators = keep;
    ClusterPartition orbits = orbit_partition(H);
    ClusterPartition target = merged;
    target.canonicalize();
    return orbits.blocks == target.blocks;
}

namespace {

// All set partitions of {0..k-1} via restricted growth strings.
void set_partitions(int k, std::vector<int>& rgs, int depth, int maxv,
                    const std::function<void(const std::vector<int>&)>& emit) {
    if (depth == k) {
        emit(rgs);
        return;
    }
    for (int v = 0; v <= maxv + 1; ++v) {
        rgs[depth] = v;
        set_partitions(k, rgs, depth + 1, std::max(maxv, v), emit);
    }
}

}  // namespace

LaplacianEnumeration enumerate_laplacian_clusters(const Mat& G, size_t merge_cap,
                                                  bool collapse_conjugates) {
    PermGroup gamma = automorphism_group(G);
    auto sym_reps = enumerate_symmetry_clusters(G, true);
    auto sym_all = enumerate_symmetry_clusters(G, false);

    std::set<std::vector<std::vector<int>>> sym_blocks;
    for (const auto& p : sym_all) sym_blocks.insert(p.blocks);

    LaplacianEnumeration result;
    std::set<std::vector<std::vector<int>>> seen;
    size_t checked = 0;

    for (const auto& parent : sym_reps) {
        const int k = parent.n_clusters();
        if (k < 2) continue;
        std::vector<int> rgs(k);
        bool capped = false;
        set_partitions(k, rgs, 0, -1, [&](const std::vector<int>& groups) {
            if (capped) return;
            if (++checked > merge_cap) {
                result.truncated = true;
                capped = true;
                return;
            }
            const int ngroups = *std::max_element(groups.begin(), groups.end()) + 1;
            if (ngroups == k) return;  // nothing merged
            std::vector<std::vector<int>> blocks(ngroups);
            std::vector<std::vector<int>> merge_groups(ngroups);
            for (int b = 0; b < k; ++b) {
                blocks[groups[b]].insert(blocks[groups[b]].end(),
                                         parent.blocks[b].begin(),
                                         parent.blocks[b].end());
                merge_groups[groups[b]].push_back(b);
            }
            ClusterPartition merged = partition_from_blocks(blocks, Provenance::Laplacian);
            if (sym_blocks.count(merged.blocks)) return;
            if (seen.count(merged.blocks)) return;
            if (!laplacian_merge_check(G, merged)) return;
            seen.insert(merged.blocks);
            merged.parent_blocks = parent.blocks;
            merged.merge_groups = merge_groups;
            merged.subgroup = parent.subgroup;
            result.partitions.push_back(std::move(merged));
        });
    }

    if (collapse_conjugates) {
        std::map<std::vector<std::vector<int>>, ClusterPartition> reps;
        for (auto& p : result.partitions) {
            auto key = canonical_orbit_min(p, gamma);
            if (!reps.count(key)) reps.emplace(key, std::move(p));
        }
        result.partitions.clear();
        for (auto& [key, p] : reps) result.partitions.push_back(std::move(p));
    }
    std::sort(result.partitions.begin(), result.partitions.end(),
              [](const ClusterPartition& a, const ClusterPartition& b) {
                  if (a.n_clusters() != b.n_clusters())
                      return a.n_clusters() < b.n_clusters();
                  return a.blocks < b.blocks;
              });
    return result;
}

}  // namespace pwlnet
