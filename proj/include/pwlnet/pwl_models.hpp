#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pwlnet/numerics.hpp"

namespace pwlnet {

enum class PlaneKind { Switch, Fire };

/// Affine reset z+ = linear z- + offset applied at a plane crossing.
/// Identity (with zero offset) for pure switches.
struct ResetMap {
    Mat linear;
    Vec offset;
    bool is_identity() const;
};

/// Hyperplane normal.z = offset guarding a region boundary or a firing event.
struct SwitchPlane {
    Vec normal;
    double offset = 0.0;
    PlaneKind kind = PlaneKind::Switch;
    ResetMap reset;
    double h(const Vec& z) const { return normal.dot(z) - offset; }
};

/// One affine piece A z + c of a node, valid on an interval of the split
/// coordinate.  All the models here tile phase space by intervals of one
/// coordinate (the voltage), which is a conjunction of two half-spaces.
struct NodeRegion {
    std::string label;
    Mat A;
    Vec c;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
};

/// Single-node piecewise-affine template: regions ordered by interval of the
/// split coordinate, switch planes at the breakpoints, plus an optional fire
/// plane with reset.
struct NodeModel {
    int dim = 0;
    int split_coord = 0;
    std::vector<NodeRegion> regions;
    std::vector<SwitchPlane> planes;
    std::string name;

    // Ties at a breakpoint go to the left-closed region.
    int region_of(const Vec& z) const;
    int region_of_value(double v) const;
};

enum class CouplingMode { Laplacian, Adjacency };

struct CouplingSpec {
    Mat matrix;  // G (Laplacian mode) or W (adjacency mode)
    CouplingMode mode = CouplingMode::Laplacian;
    double strength = 0.0;  // sigma
    int h_out = 0;          // output component of H
    int h_in = 0;           // input component receiving the coupling
    bool balanced() const;  // constant (zero) row sums
    Mat dh(int m) const;    // m x m single-entry DH matrix
};

/// A node, a network of nodes, or a quotient network: n_nodes copies of the
/// node template with optional linear coupling through one component pair.
/// Regions are addressed by per-node label tuples and materialized on demand.
struct PiecewiseAffineSystem {
    NodeModel node;
    int n_nodes = 1;
    std::optional<CouplingSpec> coupling;
    std::string name;

    using Label = std::vector<int>;

    int dim() const { return n_nodes * node.dim; }
    int planes_per_node() const { return static_cast<int>(node.planes.size()); }
    int n_planes() const { return n_nodes * planes_per_node(); }

    struct PlaneRef {
        int node;
        int plane;
    };
    PlaneRef plane_ref(int p) const;
    const SwitchPlane& node_plane(int p) const;
    PlaneKind plane_kind(int p) const { return node_plane(p).kind; }

    Label label_of(const Vec& z) const;
    bool in_region(const Label& label, const Vec& z) const;

    Mat region_matrix(const Label& label) const;
    Vec region_offset(const Label& label) const;
    Vec field(const Label& label, const Vec& z) const;

    double plane_h(int p, const Vec& z) const;
    Vec plane_normal(int p) const;
    Vec apply_reset(int p, const Vec& z) const;
    Mat reset_linear(int p) const;
    bool reset_is_identity(int p) const;

    /// Numerical check that the vector field matches across every interior
    /// breakpoint (true for all three presets).
    bool continuous_at_switches(double tol = 1e-10, int probes = 10,
                                unsigned seed = 7u) const;
};

// ---- model parameter records --------------------------------------------

struct PwlIfParams {
    double a_L = -1.0, a_R = 1.0;
    double a_w = 0.0, b_w = -1.0;
    double tau = 3.0;
    double I = 0.1;
    double v_th = 1.0, v_r = 0.2;
    double kappa = 0.75;
    double alpha = 0.4;  // synaptic rate, used by the 4D build only
};

struct AbsoluteParams {
    double g = 0.5;
    double vbar = 0.1;
    double wbar = -0.1;
};

struct PmlParams {
    double gamma1 = 2.0, gamma2 = 0.25;
    double C = 0.825;
    double I = 0.1;
    double a = 0.25, b = 0.5, bstar = 0.2;
};

NodeModel build_pwl_if(const PwlIfParams& p, bool synaptic4d);
NodeModel build_absolute(const AbsoluteParams& p);
NodeModel build_pml(const PmlParams& p);

PiecewiseAffineSystem single_node(const NodeModel& node);
PiecewiseAffineSystem build_network(const NodeModel& node, const CouplingSpec& coupling);

/// Balanced ring coupling, N odd: W_ij = (1 - a x/d) exp(-x/d) at ring
/// distance x = min(|i-j|, N-|i-j|), with a fixed by zero row sums.
CouplingSpec ring_coupling(int N, double d);

/// Circulant eigenvalues of a ring coupling matrix, lambda_l = sum_j W(|j|) w_l^j.
CVec ring_eigenvalues(const CouplingSpec& ring);

/// The five-node graph Laplacian used throughout the case studies.
Mat five_node_laplacian();

/// Quotient network on the synchrony subspace of a cluster partition
/// (blocks of node indices).  Ghat_{kl} = sum_{j in C_l} G_{ij} for any
/// representative i in C_k; representatives must agree to 1e-12.
PiecewiseAffineSystem quotient_system(const PiecewiseAffineSystem& network,
                                      const std::vector<std::vector<int>>& blocks);

/// Row-sum balance test: the flow-invariance condition for a partition.
bool partition_balanced(const Mat& G, const std::vector<std::vector<int>>& blocks,
                        double tol = 1e-12);

}  // namespace pwlnet
