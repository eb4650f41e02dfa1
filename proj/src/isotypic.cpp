#include "pwlnet/isotypic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>

namespace pwlnet {

namespace {
constexpr double kLeakTol = 1e-9;
}

Mat kron(const Mat& A, const Mat& B) {
    Mat out(A.rows() * B.rows(), A.cols() * B.cols());
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j)
            out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return out;
}

CMat kron(const CMat& A, const CMat& B) {
    CMat out(A.rows() * B.rows(), A.cols() * B.cols());
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j)
            out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return out;
}

Mat BlockDiagonalization::cluster_indicator(int k) const {
    Mat E = Mat::Zero(n(), n());
    for (int i : partition.blocks.at(k)) E(i, i) = 1.0;
    return E;
}

Mat BlockDiagonalization::cluster_projector(int k) const {
    return Q * cluster_indicator(k) * Q.transpose();
}

namespace {

// Merge transverse atoms coupled through G' = Q G Q^T, reorder rows so each
// resulting block is contiguous, and fill in the block table.
void finalize_blocks(BlockDiagonalization& bd, const Mat& G, int n_sync,
                     std::vector<std::vector<int>> atoms) {
    const int n = static_cast<int>(bd.Q.rows());
    Mat Gp = bd.Q * G * bd.Q.transpose();

    // Degenerate transverse eigenspaces can come out in an arbitrary rotation
    // that smears basis rows across clusters.  When such an eigenspace is
    // invariant under the cluster indicators, realign it by simultaneously
    // diagonalizing the restricted cluster projections, so rows supported on
    // a single cluster are recovered whenever they exist.
    {
        std::vector<int> trans_rows;
        for (const auto& a : atoms)
            for (int r : a) trans_rows.push_back(r);
        auto is_eigrow = [&](int r) {
            for (int c = 0; c < n; ++c)
                if (c != r && (std::abs(Gp(r, c)) > kLeakTol || std::abs(Gp(c, r)) > kLeakTol))
                    return false;
            return true;
        };
        std::vector<int> eigrows;
        for (int r : trans_rows)
            if (is_eigrow(r)) eigrows.push_back(r);
        std::sort(eigrows.begin(), eigrows.end(),
                  [&](int a, int b) { return Gp(a, a) < Gp(b, b); });
        for (size_t i = 0; i < eigrows.size();) {
            size_t j = i + 1;
            while (j < eigrows.size() &&
                   Gp(eigrows[j], eigrows[j]) - Gp(eigrows[j - 1], eigrows[j - 1]) < 1e-8)
                ++j;
            const int d = static_cast<int>(j - i);
            if (d > 1) {
                Mat B(d, n);
                for (int k = 0; k < d; ++k) B.row(k) = bd.Q.row(eigrows[i + k]);
                std::vector<Mat> restricted;
                bool invariant = true;
                for (const auto& blk : bd.partition.blocks) {
                    Mat E = Mat::Zero(n, n);
                    for (int node : blk) E(node, node) = 1.0;
                    Mat EB = E * B.transpose();
                    Mat Mres = B * EB;
                    if ((EB - B.transpose() * Mres).norm() > 1e-9) {
                        invariant = false;
                        break;
                    }
                    restricted.push_back(std::move(Mres));
                }
                if (invariant) {
                    Mat S = Mat::Zero(d, d);
                    double w = 1.0;
                    for (const auto& Mres : restricted) {
                        S += w * Mres;
                        w *= 0.7390851332;  // fixed generic weights
                    }
                    Eigen::SelfAdjointEigenSolver<Mat> es(S);
                    Mat newB = es.eigenvectors().transpose() * B;
                    for (int k = 0; k < d; ++k) bd.Q.row(eigrows[i + k]) = newB.row(k);
                }
            }
            i = j;
        }
        Gp = bd.Q * G * bd.Q.transpose();
    }

    const int na = static_cast<int>(atoms.size());
    std::vector<int> parent(na);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (int a = 0; a < na; ++a)
        for (int b = a + 1; b < na; ++b) {
            bool coupled = false;
            for (int r : atoms[a])
                for (int c : atoms[b])
                    if (std::abs(Gp(r, c)) > kLeakTol || std::abs(Gp(c, r)) > kLeakTol)
                        coupled = true;
            if (coupled) {
                int ra = find(a), rb = find(b);
                if (ra != rb) parent[ra] = rb;
            }
        }

    // components ordered by their smallest row index
    std::map<int, std::vector<int>> comp_rows;
    for (int a = 0; a < na; ++a)
        for (int r : atoms[a]) comp_rows[find(a)].push_back(r);
    std::vector<std::vector<int>> comps;
    for (auto& [root, rows] : comp_rows) {
        std::sort(rows.begin(), rows.end());
        comps.push_back(std::move(rows));
    }
    std::sort(comps.begin(), comps.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });

    // A degenerate-irrep component on which G' and every cluster projection
    // J^(k) = Q E_k Q^T act as scalars carries no cross coupling, so it can be
    // reported as scalar blocks.
    std::vector<Mat> projs;
    for (const auto& blk : bd.partition.blocks) {
        Mat E = Mat::Zero(n, n);
        for (int i : blk) E(i, i) = 1.0;
        projs.push_back(bd.Q * E * bd.Q.transpose());
    }
    std::vector<std::vector<int>> split;
    for (const auto& c : comps) {
        bool diagonal = true;
        for (size_t a = 0; a < c.size() && diagonal; ++a)
            for (size_t b = 0; b < c.size() && diagonal; ++b) {
                if (a == b) continue;
                if (std::abs(Gp(c[a], c[b])) > kLeakTol) diagonal = false;
                for (const auto& J : projs)
                    if (std::abs(J(c[a], c[b])) > kLeakTol) diagonal = false;
            }
        if (diagonal && c.size() > 1)
            for (int r : c) split.push_back({r});
        else
            split.push_back(c);
    }
    comps = std::move(split);

    std::vector<int> order;
    for (int i = 0; i < n_sync; ++i) order.push_back(i);
    for (const auto& c : comps) order.insert(order.end(), c.begin(), c.end());

    Mat Qnew(n, n);
    for (int i = 0; i < n; ++i) Qnew.row(i) = bd.Q.row(order[i]);
    bd.Q = std::move(Qnew);
    bd.transformed = bd.Q * G * bd.Q.transpose();

    bd.blocks.clear();
    bd.blocks.push_back({0, n_sync, BlockTag::Synchronous});
    int pos = n_sync;
    for (const auto& c : comps) {
        bd.blocks.push_back({pos, static_cast<int>(c.size()), BlockTag::Transverse});
        pos += static_cast<int>(c.size());
    }
}

}  // namespace

BlockDiagonalization block_diagonalize(const Mat& G, const ClusterPartition& partition,
                                       const PermGroup& subgroup, std::uint64_t seed) {
    const int n = static_cast<int>(G.rows());
    if (G.cols() != n) throw std::invalid_argument("block_diagonalize: square matrix required");

    for (const auto& g : subgroup.generators) {
        const Mat M = permutation_matrix(g);
        if ((M * G - G * M).cwiseAbs().maxCoeff() > 1e-9)
            throw std::invalid_argument("block_diagonalize: subgroup does not commute with G");
    }
    ClusterPartition orbits = orbit_partition(subgroup);
    ClusterPartition canonical = partition;
    canonical.canonicalize();
    if (!orbits.same_blocks(canonical))
        throw std::invalid_argument("block_diagonalize: partition is not the subgroup's orbit partition");

    const int M = canonical.n_clusters();
    BlockDiagonalization bd;
    bd.partition = canonical;
    bd.Q = Mat::Zero(n, n);
    Mat U = Mat::Zero(n, M);  // indicator columns
    for (int k = 0; k < M; ++k) {
        const auto& blk = canonical.blocks[k];
        const double s = 1.0 / std::sqrt(static_cast<double>(blk.size()));
        for (int i : blk) U(i, k) = s;
        bd.Q.row(k) = U.col(k).transpose();
    }

    std::vector<std::vector<int>> atoms;
    if (M < n) {
        // generic symmetric element of the commutant
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> dist(0.0, 1.0);
        Mat S(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) S(i, j) = dist(rng);
        S = 0.5 * (S + S.transpose()).eval();
        Mat R = Mat::Zero(n, n);
        for (const auto& g : subgroup.elements)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) R(i, j) += S(g(i), g(j));

        // orthonormal complement of the indicator span
        Eigen::HouseholderQR<Mat> qr(U);
        Mat full = qr.householderQ();
        Mat C = full.rightCols(n - M);
        Mat Rc = C.transpose() * R * C;
        Rc = 0.5 * (Rc + Rc.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Mat> es(Rc);
        if (es.info() != Eigen::Success)
            throw NumericalError("block_diagonalize: eigendecomposition failed");
        Mat V = C * es.eigenvectors();  // columns, eigenvalues ascending
        for (int j = 0; j < n - M; ++j) bd.Q.row(M + j) = V.col(j).transpose();

        // eigenvalue groups (gap tolerance) seed the transverse atoms
        const Vec& lam = es.eigenvalues();
        atoms.push_back({M});
        for (int j = 1; j < n - M; ++j) {
            if (lam[j] - lam[j - 1] > 1e-8 * (1.0 + std::abs(lam[j])))
                atoms.push_back({});
            atoms.back().push_back(M + j);
        }
    }

    finalize_blocks(bd, G, M, std::move(atoms));
    return bd;
}

BlockDiagonalization laplacian_refine(const Mat& G, const BlockDiagonalization& base,
                                      const std::vector<std::vector<int>>& merge) {
    const int n = base.n();
    const int M = base.n_sync();
    if (merge.empty()) return base;

    std::vector<int> group_of(M, -1);
    for (size_t g = 0; g < merge.size(); ++g)
        for (int k : merge[g]) {
            if (k < 0 || k >= M || group_of[k] >= 0)
                throw std::invalid_argument("laplacian_refine: bad merge groups");
            group_of[k] = static_cast<int>(g);
        }

    // merged partition and per-block synchronization vectors (node space)
    struct SyncBlock {
        std::vector<int> nodes;
        Vec v;
    };
    std::vector<SyncBlock> sblocks;
    for (int k = 0; k < M; ++k) {
        if (group_of[k] >= 0) continue;
        SyncBlock b;
        b.nodes = base.partition.blocks[k];
        b.v = Vec::Zero(n);
        const double s = 1.0 / std::sqrt(static_cast<double>(b.nodes.size()));
        for (int i : b.nodes) b.v[i] = s;
        sblocks.push_back(std::move(b));
    }
    std::vector<Vec> helmert;
    for (const auto& grp : merge) {
        if (grp.size() < 2)
            throw std::invalid_argument("laplacian_refine: merge group needs >= 2 clusters");
        SyncBlock b;
        b.v = Vec::Zero(n);
        int total = 0;
        for (size_t j = 0; j < grp.size(); ++j) {
            const auto& cluster = base.partition.blocks[grp[j]];
            if (j > 0) {
                // contrast between the running union and the next cluster
                Vec w = Vec::Zero(n);
                for (int i : b.nodes) w[i] = static_cast<double>(cluster.size());
                for (int i : cluster) w[i] = -static_cast<double>(total);
                helmert.push_back(w / w.norm());
            }
            b.nodes.insert(b.nodes.end(), cluster.begin(), cluster.end());
            total += static_cast<int>(cluster.size());
        }
        b.v = Vec::Zero(n);
        const double s = 1.0 / std::sqrt(static_cast<double>(total));
        for (int i : b.nodes) b.v[i] = s;
        sblocks.push_back(std::move(b));
    }
    std::sort(sblocks.begin(), sblocks.end(), [](SyncBlock& a, SyncBlock& b) {
        std::sort(a.nodes.begin(), a.nodes.end());
        std::sort(b.nodes.begin(), b.nodes.end());
        return a.nodes < b.nodes;
    });

    ClusterPartition mergedP;
    for (const auto& b : sblocks) mergedP.blocks.push_back(b.nodes);
    mergedP.canonicalize();
    mergedP.provenance = Provenance::Laplacian;
    mergedP.parent_blocks = base.partition.blocks;
    mergedP.merge_groups = merge;
    if (!laplacian_merge_check(G, mergedP))
        throw std::invalid_argument("laplacian_refine: merge is not a valid Laplacian cluster state");

    const int Mp = static_cast<int>(sblocks.size());
    BlockDiagonalization out;
    out.partition = mergedP;
    out.Q = Mat::Zero(n, n);
    for (int k = 0; k < Mp; ++k) out.Q.row(k) = sblocks[k].v.transpose();
    int row = Mp;
    std::vector<std::vector<int>> atoms;
    // carry over the base transverse atoms, then one atom per new contrast
    for (const auto& blk : base.blocks) {
        if (blk.tag == BlockTag::Synchronous) continue;
        std::vector<int> atom;
        for (int j = 0; j < blk.size; ++j) {
            out.Q.row(row) = base.Q.row(blk.start + j);
            atom.push_back(row++);
        }
        atoms.push_back(std::move(atom));
    }
    for (const auto& v : helmert) {
        out.Q.row(row) = v.transpose();
        atoms.push_back({row++});
    }

    finalize_blocks(out, G, Mp, std::move(atoms));
    return out;
}

BlockDiagonalization diagonalize_partition(const Mat& G, const ClusterPartition& partition,
                                           std::uint64_t seed) {
    if (partition.provenance == Provenance::Laplacian) {
        if (partition.parent_blocks.empty())
            throw std::invalid_argument("diagonalize_partition: Laplacian partition lacks parent");
        ClusterPartition parent;
        parent.blocks = partition.parent_blocks;
        parent.provenance = Provenance::Symmetry;
        parent.subgroup = partition.subgroup;
        parent.canonicalize();
        BlockDiagonalization base = block_diagonalize(G, parent, partition.subgroup, seed);
        std::vector<std::vector<int>> merge;
        for (const auto& grp : partition.merge_groups)
            if (grp.size() >= 2) merge.push_back(grp);
        return laplacian_refine(G, base, merge);
    }
    PermGroup sub = partition.subgroup;
    if (sub.elements.empty()) {
        // fall back to the setwise stabilizer inducing this partition
        PermGroup aut = automorphism_group(G);
        const auto owner = partition.block_of_node();
        std::vector<Permutation> keep;
        for (const auto& g : aut.elements) {
            bool ok = true;
            for (int i = 0; i < g.size() && ok; ++i)
                if (owner[g(i)] != owner[i]) ok = false;
            if (ok) keep.push_back(g);
        }
        sub.elements = keep;
        sub.generators = keep;
        ClusterPartition canon = partition;
        canon.canonicalize();
        ClusterPartition orbits = orbit_partition(sub);
        if (!orbits.same_blocks(canon)) {
            // Coarser than any orbit partition: treat it as a merge of the
            // stabilizer's orbits and go through the Laplacian construction.
            const auto owner = canon.block_of_node();
            std::vector<std::vector<int>> groups(canon.n_clusters());
            for (int b = 0; b < orbits.n_clusters(); ++b) {
                const int target = owner[orbits.blocks[b].front()];
                for (int i : orbits.blocks[b])
                    if (owner[i] != target)
                        throw std::invalid_argument(
                            "diagonalize_partition: partition splits a symmetry orbit");
                groups[target].push_back(b);
            }
            orbits.subgroup = sub;
            BlockDiagonalization base = block_diagonalize(G, orbits, sub, seed);
            std::vector<std::vector<int>> merge;
            for (auto& grp : groups)
                if (grp.size() >= 2) merge.push_back(std::move(grp));
            return laplacian_refine(G, base, merge);
        }
    }
    return block_diagonalize(G, partition, sub, seed);
}

Mat transformed_saltation(const ClusterPartition& partition,
                          const std::vector<Mat>& per_cluster_K, const Mat& Q) {
    const int N = static_cast<int>(Q.rows());
    if (partition.n_nodes() != N)
        throw std::invalid_argument("transformed_saltation: partition/Q size mismatch");
    if (per_cluster_K.size() != static_cast<size_t>(partition.n_clusters()))
        throw std::invalid_argument("transformed_saltation: one K per cluster required");
    const int m = static_cast<int>(per_cluster_K.front().rows());
    Mat out = Mat::Zero(N * m, N * m);
    for (int k = 0; k < partition.n_clusters(); ++k) {
        if (per_cluster_K[k].rows() != m || per_cluster_K[k].cols() != m)
            throw std::invalid_argument("transformed_saltation: inconsistent K dimensions");
        Mat E = Mat::Zero(N, N);
        for (int i : partition.blocks[k]) E(i, i) = 1.0;
        out += kron(Q * E * Q.transpose(), per_cluster_K[k]);
    }
    return out;
}

}  // namespace pwlnet
