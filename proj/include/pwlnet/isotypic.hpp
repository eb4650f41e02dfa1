#pragma once

#include <cstdint>
#include <vector>

#include "pwlnet/numerics.hpp"
#include "pwlnet/symmetry.hpp"

namespace pwlnet {

enum class BlockTag { Synchronous, Transverse };

struct BlockRange {
    int start = 0;
    int size = 0;
    BlockTag tag = BlockTag::Transverse;
};

/// Orthogonal change of basis adapted to a cluster partition: the first block
/// of transformed = Q G Q^T carries the within-cluster synchronized motion,
/// the remaining blocks decouple the transverse directions.
struct BlockDiagonalization {
    Mat Q;            // orthogonal, rows 0..M-1 are normalized cluster indicators
    Mat transformed;  // Q G Q^T, block diagonal up to 1e-9 leakage
    std::vector<BlockRange> blocks;  // synchronous block first
    ClusterPartition partition;

    int n() const { return static_cast<int>(Q.rows()); }
    int n_sync() const { return blocks.empty() ? 0 : blocks.front().size; }
    /// E^(k): diagonal 0/1 indicator of cluster k's nodes.
    Mat cluster_indicator(int k) const;
    /// J^(k) = Q E^(k) Q^T.
    Mat cluster_projector(int k) const;
};

/// Build Q for the orbit partition of `subgroup` (which must commute with G):
/// indicator rows first, then an eigenbasis of a generic symmetric commutant
/// element restricted to the complement; transverse blocks are eigenvalue
/// groups merged wherever Q G Q^T couples them.
BlockDiagonalization block_diagonalize(const Mat& G, const ClusterPartition& partition,
                                       const PermGroup& subgroup,
                                       std::uint64_t seed = 12345);

/// Coarsen a symmetry-adapted basis for a merged (Laplacian) cluster state.
/// Each entry of `merge` lists cluster indices of base.partition to fuse; the
/// affected synchronous rows are replaced by the merged indicator plus
/// Helmert-style transverse contrasts.
BlockDiagonalization laplacian_refine(const Mat& G, const BlockDiagonalization& base,
                                      const std::vector<std::vector<int>>& merge);

/// Dispatch on partition provenance: direct diagonalization for symmetry
/// partitions, base-plus-refine for Laplacian ones (using the recorded parent
/// partition and merge grouping).
BlockDiagonalization diagonalize_partition(const Mat& G, const ClusterPartition& partition,
                                           std::uint64_t seed = 12345);

/// K-hat = sum_k J^(k) (x) K_k for per-cluster saltation matrices K_k.
Mat transformed_saltation(const ClusterPartition& partition,
                          const std::vector<Mat>& per_cluster_K, const Mat& Q);

Mat kron(const Mat& A, const Mat& B);
CMat kron(const CMat& A, const CMat& B);

}  // namespace pwlnet
