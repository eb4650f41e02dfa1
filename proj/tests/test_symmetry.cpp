#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "pwlnet/symmetry.hpp"
#include "pwlnet/pwl_models.hpp"

using namespace pwlnet;

namespace {

// Exhaustive S_n oracle: every permutation with P G P^T == G.
std::vector<Permutation> brute_force_automorphisms(const Mat& G) {
    const int n = static_cast<int>(G.rows());
    std::vector<int> img(n);
    std::iota(img.begin(), img.end(), 0);
    std::vector<Permutation> out;
    do {
        bool ok = true;
        for (int i = 0; i < n && ok; ++i)
            for (int j = 0; j < n && ok; ++j)
                if (std::abs(G(img[i], img[j]) - G(i, j)) > 1e-12) ok = false;
        if (ok) out.push_back(Permutation{img});
    } while (std::next_permutation(img.begin(), img.end()));
    return out;
}

std::set<std::vector<std::vector<int>>> block_set(const std::vector<ClusterPartition>& ps) {
    std::set<std::vector<std::vector<int>>> out;
    for (const auto& p : ps) out.insert(p.blocks);
    return out;
}

}  // namespace

TEST_CASE("permutation algebra") {
    Permutation p{{1, 2, 0, 3}};
    Permutation q{{0, 1, 3, 2}};
    CHECK(compose(p, p.inverse()) == Permutation::identity(4));
    // a*b applies b first
    Permutation pq = compose(p, q);
    CHECK(pq(2) == p(q(2)));
    Mat P = permutation_matrix(p);
    Vec v(4);
    v << 10, 20, 30, 40;
    Vec w = P * v;
    for (int i = 0; i < 4; ++i) CHECK(w[p(i)] == doctest::Approx(v[i]));
}

TEST_CASE("automorphism group equals the exhaustive search") {
    Mat G = five_node_laplacian();
    PermGroup aut = automorphism_group(G);
    auto brute = brute_force_automorphisms(G);
    CHECK(aut.order() == brute.size());
    CHECK(aut.order() == 8);  // dihedral-type symmetry of the square 1-2-4-3
    for (const auto& p : brute) CHECK(aut.contains(p));
    // node 4 is fixed by everything
    for (const auto& p : aut.elements) CHECK(p(4) == 4);
}

TEST_CASE("subgroup lattice and geometric factors") {
    Mat G = five_node_laplacian();
    PermGroup aut = automorphism_group(G);
    auto subs = subgroups(aut);
    CHECK(subs.size() == 10);
    // orders of the subgroups of a dihedral group of order 8
    std::multiset<size_t> orders;
    for (auto& s : subs) orders.insert(s.order());
    CHECK(orders == std::multiset<size_t>({1, 2, 2, 2, 2, 2, 4, 4, 4, 8}));

    auto factors = geometric_decomposition(aut);
    REQUIRE(factors.size() == 2);
    std::multiset<size_t> forders = {factors[0].order(), factors[1].order()};
    CHECK(forders == std::multiset<size_t>({8, 1}));
}

TEST_CASE("symmetry cluster catalog, up to conjugacy") {
    Mat G = five_node_laplacian();
    auto cat = enumerate_symmetry_clusters(G);
    auto got = block_set(cat);
    std::set<std::vector<std::vector<int>>> expected = {
        {{0, 1, 2, 3}, {4}},
        {{0, 1}, {2, 3}, {4}},
        {{0, 2}, {1, 3}, {4}},
        {{0}, {1, 3}, {2}, {4}},
        {{0}, {1}, {2}, {3}, {4}},
    };
    CHECK(got == expected);
    for (const auto& p : cat) {
        CHECK(p.provenance == Provenance::Symmetry);
        CHECK(partition_balanced(G, p.blocks));
        // the recorded subgroup really induces the partition
        CHECK(orbit_partition(p.subgroup).blocks == p.blocks);
    }

    SUBCASE("without conjugacy collapse the conjugates appear") {
        auto full = enumerate_symmetry_clusters(G, false);
        CHECK(full.size() > cat.size());
        PermGroup aut = automorphism_group(G);
        // every extra entry is conjugate to a canonical one
        for (const auto& p : full) {
            bool matched = false;
            for (const auto& q : cat)
                if (partitions_conjugate(p, q, aut)) matched = true;
            CHECK(matched);
        }
    }
}

TEST_CASE("merged-partition catalog") {
    Mat G = five_node_laplacian();
    auto lap = enumerate_laplacian_clusters(G);
    CHECK(!lap.truncated);
    auto got = block_set(lap.partitions);
    std::set<std::vector<std::vector<int>>> expected = {
        {{0, 1, 2, 3, 4}},
        {{0, 2, 4}, {1, 3}},
        {{0}, {1, 3, 4}, {2}},
    };
    CHECK(got == expected);
    for (const auto& p : lap.partitions) {
        CHECK(p.provenance == Provenance::Laplacian);
        CHECK(laplacian_merge_check(G, p));
        CHECK(partition_balanced(merged_laplacian(G, p), p.blocks));
    }
}

TEST_CASE("invalid merges are rejected") {
    Mat G = five_node_laplacian();
    // {0,1,4},{2,3} does not balance: nodes 0 and 4 see different totals
    auto bad = partition_from_blocks({{0, 1, 4}, {2, 3}});
    CHECK(!laplacian_merge_check(G, bad));
    CHECK(!partition_balanced(merged_laplacian(G, bad), bad.blocks));
}

TEST_CASE("merged Laplacian zeroes intra-cluster edges and rebalances") {
    Mat G = five_node_laplacian();
    auto merged = partition_from_blocks({{0, 2, 4}, {1, 3}});
    Mat M = merged_laplacian(G, merged);
    auto node_block = merged.block_of_node();
    for (int i = 0; i < 5; ++i) {
        CHECK(std::abs(M.row(i).sum()) < 1e-12);
        for (int j = 0; j < 5; ++j)
            if (i != j && node_block[i] == node_block[j]) CHECK(M(i, j) == 0.0);
            else if (i != j) CHECK(M(i, j) == doctest::Approx(G(i, j)));
    }
}

TEST_CASE("conjugacy of partitions under the automorphism group") {
    Mat G = five_node_laplacian();
    PermGroup aut = automorphism_group(G);
    auto a = partition_from_blocks({{0, 1}, {2, 3}, {4}});
    auto b = partition_from_blocks({{0, 2}, {1, 3}, {4}});
    // the square's edge pairings {01}{23} and {02}{13} lie in distinct classes
    CHECK(!partitions_conjugate(a, b, aut));
    // but {0,1}{2,3}{4} maps to itself under the flip exchanging 0<->1
    for (const auto& g : aut.elements) {
        auto img = apply_permutation(a, g);
        CHECK(partitions_conjugate(a, img, aut));
    }
}
