#pragma once

#include <string>
#include <vector>

#include "pwlnet/numerics.hpp"

namespace pwlnet {

/// Permutation of {0,...,N-1} stored by images.
struct Permutation {
    std::vector<int> images;

    int size() const { return static_cast<int>(images.size()); }
    int operator()(int i) const { return images[i]; }
    bool is_identity() const;
    Permutation inverse() const;
    static Permutation identity(int n);
    bool operator==(const Permutation&) const = default;
    bool operator<(const Permutation& o) const { return images < o.images; }
};

/// a*b applies b first, then a.
Permutation compose(const Permutation& a, const Permutation& b);
Mat permutation_matrix(const Permutation& p);

struct PermGroup {
    std::vector<Permutation> generators;
    std::vector<Permutation> elements;  // sorted closure, identity included

    int degree() const;
    size_t order() const { return elements.size(); }
    bool contains(const Permutation& p) const;
    static PermGroup trivial(int n);
    static PermGroup from_generators(std::vector<Permutation> gens,
                                     size_t order_cap = 10000);
};

enum class Provenance { Symmetry, Laplacian, Manual };

struct ClusterPartition {
    std::vector<std::vector<int>> blocks;  // canonical: sorted blocks of sorted indices
    Provenance provenance = Provenance::Manual;
    PermGroup subgroup;  // inducing subgroup (symmetry provenance)
    std::vector<PermGroup> inducing_subgroups;  // all distinct subgroups inducing it
    // Laplacian provenance: parent symmetry partition plus the grouping of its
    // blocks that was merged.
    std::vector<std::vector<int>> merge_groups;
    std::vector<std::vector<int>> parent_blocks;

    int n_nodes() const;
    int n_clusters() const { return static_cast<int>(blocks.size()); }
    std::vector<int> block_of_node() const;
    void canonicalize();
    bool same_blocks(const ClusterPartition& other) const;
};

ClusterPartition singleton_partition(int n);
ClusterPartition partition_from_blocks(std::vector<std::vector<int>> blocks,
                                       Provenance prov = Provenance::Manual);

/// All permutations commuting with G (entries compared exactly to 1e-12),
/// by backtracking pruned with row-signature equivalence classes.
PermGroup automorphism_group(const Mat& G, int n_cap = 40, size_t order_cap = 10000);

/// All subgroups, found by closing cyclic subgroups under pairwise joins.
std::vector<PermGroup> subgroups(const PermGroup& G, size_t order_cap = 1024);

/// Orbits of the subgroup action on nodes.
ClusterPartition orbit_partition(const PermGroup& H);

/// Support-disjoint factorization Gamma = H_1 x ... x H_nu; fixed nodes
/// contribute a trivial factor.
std::vector<PermGroup> geometric_decomposition(const PermGroup& G);

/// Image of a partition under a permutation.
ClusterPartition apply_permutation(const ClusterPartition& P, const Permutation& g);
bool partitions_conjugate(const ClusterPartition& a, const ClusterPartition& b,
                          const PermGroup& G);

/// One partition per conjugacy class of product subgroups K_1 x ... x K_nu.
/// With collapse_conjugates=false the full list (one per distinct partition)
/// is returned instead.
std::vector<ClusterPartition> enumerate_symmetry_clusters(const Mat& G,
                                                          bool collapse_conjugates = true);

/// Dynamically-equivalent Laplacian for a merged partition: intra-cluster
/// off-diagonals zeroed, diagonal = negative of the new off-diagonal row sum.
Mat merged_laplacian(const Mat& G, const ClusterPartition& merged);

bool laplacian_merge_check(const Mat& G, const ClusterPartition& merged);

struct LaplacianEnumeration {
    std::vector<ClusterPartition> partitions;
    bool truncated = false;  // merge-count cap hit; results partial
};

LaplacianEnumeration enumerate_laplacian_clusters(const Mat& G,
                                                  size_t merge_cap = 100000,
                                                  bool collapse_conjugates = true);

}  // namespace pwlnet
