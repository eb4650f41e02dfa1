#include "pwlnet/pwl_models.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pwlnet {

bool ResetMap::is_identity() const {
    if (linear.size() == 0) return true;
    return linear.isIdentity(0.0) && offset.isZero(0.0);
}

int NodeModel::region_of_value(double v) const {
    // Ties at a breakpoint go leftward: region interval is (lo, hi].
    for (size_t r = 0; r + 1 < regions.size(); ++r)
        if (v <= regions[r].hi) return static_cast<int>(r);
    return static_cast<int>(regions.size()) - 1;
}

int NodeModel::region_of(const Vec& z) const { return region_of_value(z(split_coord)); }

bool CouplingSpec::balanced() const {
    const Vec sums = matrix.rowwise().sum();
    return (sums.array() - sums(0)).abs().maxCoeff() <= 1e-12 &&
           std::abs(sums(0)) <= 1e-12;
}

Mat CouplingSpec::dh(int m) const {
    Mat D = Mat::Zero(m, m);
    D(h_in, h_out) = 1.0;
    return D;
}

PiecewiseAffineSystem::PlaneRef PiecewiseAffineSystem::plane_ref(int p) const {
    const int per = planes_per_node();
    return {p / per, p % per};
}

const SwitchPlane& PiecewiseAffineSystem::node_plane(int p) const {
    return node.planes[plane_ref(p).plane];
}

PiecewiseAffineSystem::Label PiecewiseAffineSystem::label_of(const Vec& z) const {
    Label label(n_nodes);
    const int m = node.dim;
    for (int i = 0; i < n_nodes; ++i) label[i] = node.region_of(z.segment(i * m, m));
    return label;
}

bool PiecewiseAffineSystem::in_region(const Label& label, const Vec& z) const {
    const int m = node.dim;
    for (int i = 0; i < n_nodes; ++i) {
        const NodeRegion& r = node.regions[label[i]];
        const double v = z(i * m + node.split_coord);
        if (v < r.lo || v > r.hi) return false;
    }
    return true;
}

Mat PiecewiseAffineSystem::region_matrix(const Label& label) const {
    const int m = node.dim;
    Mat M = Mat::Zero(dim(), dim());
    for (int i = 0; i < n_nodes; ++i)
        M.block(i * m, i * m, m, m) = node.regions[label[i]].A;
    if (coupling) {
        const CouplingSpec& cs = *coupling;
        const double sign = (cs.mode == CouplingMode::Laplacian) ? -1.0 : 1.0;
        for (int i = 0; i < n_nodes; ++i)
            for (int j = 0; j < n_nodes; ++j)
                M(i * m + cs.h_in, j * m + cs.h_out) +=
                    sign * cs.strength * cs.matrix(i, j);
    }
    return M;
}

Vec PiecewiseAffineSystem::region_offset(const Label& label) const {
    const int m = node.dim;
    Vec c(dim());
    for (int i = 0; i < n_nodes; ++i) c.segment(i * m, m) = node.regions[label[i]].c;
    return c;
}

Vec PiecewiseAffineSystem::field(const Label& label, const Vec& z) const {
    const int m = node.dim;
    Vec y(dim());
    for (int i = 0; i < n_nodes; ++i) {
        const NodeRegion& r = node.regions[label[i]];
        y.segment(i * m, m) = r.A * z.segment(i * m, m) + r.c;
    }
    if (coupling) {
        const CouplingSpec& cs = *coupling;
        const double sign = (cs.mode == CouplingMode::Laplacian) ? -1.0 : 1.0;
        for (int i = 0; i < n_nodes; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n_nodes; ++j) acc += cs.matrix(i, j) * z(j * m + cs.h_out);
            y(i * m + cs.h_in) += sign * cs.strength * acc;
        }
    }
    return y;
}

double PiecewiseAffineSystem::plane_h(int p, const Vec& z) const {
    const PlaneRef ref = plane_ref(p);
    const int m = node.dim;
    return node.planes[ref.plane].normal.dot(z.segment(ref.node * m, m)) -
           node.planes[ref.plane].offset;
}

Vec PiecewiseAffineSystem::plane_normal(int p) const {
    const PlaneRef ref = plane_ref(p);
    const int m = node.dim;
    Vec n = Vec::Zero(dim());
    n.segment(ref.node * m, m) = node.planes[ref.plane].normal;
    return n;
}

Vec PiecewiseAffineSystem::apply_reset(int p, const Vec& z) const {
    const PlaneRef ref = plane_ref(p);
    const ResetMap& g = node.planes[ref.plane].reset;
    if (g.is_identity()) return z;
    const int m = node.dim;
    Vec out = z;
    out.segment(ref.node * m, m) = g.linear * z.segment(ref.node * m, m) + g.offset;
    return out;
}

Mat PiecewiseAffineSystem::reset_linear(int p) const {
    const PlaneRef ref = plane_ref(p);
    const ResetMap& g = node.planes[ref.plane].reset;
    Mat L = Mat::Identity(dim(), dim());
    if (!g.is_identity()) {
        const int m = node.dim;
        L.block(ref.node * m, ref.node * m, m, m) = g.linear;
    }
    return L;
}

bool PiecewiseAffineSystem::reset_is_identity(int p) const {
    return node_plane(p).reset.is_identity();
}

bool PiecewiseAffineSystem::continuous_at_switches(double tol, int probes,
                                                  unsigned seed) const {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (size_t r = 0; r + 1 < node.regions.size(); ++r) {
        const NodeRegion& left = node.regions[r];
        const NodeRegion& right = node.regions[r + 1];
        const double bp = left.hi;
        for (int k = 0; k < probes; ++k) {
            Vec z(node.dim);
            for (int i = 0; i < node.dim; ++i) z(i) = unif(rng);
            z(node.split_coord) = bp;
            const Vec dl = left.A * z + left.c;
            const Vec dr = right.A * z + right.c;
            if ((dl - dr).lpNorm<Eigen::Infinity>() > tol) return false;
        }
    }
    return true;
}

// ---- presets --------------------------------------------------------------

NodeModel build_pwl_if(const PwlIfParams& p, bool synaptic4d) {
    if (!(p.v_r < p.v_th)) throw std::invalid_argument("PWL-IF: requires v_r < v_th");
    if (!(p.tau > 0.0)) throw std::invalid_argument("PWL-IF: requires tau > 0");
    if (synaptic4d && !(p.alpha > 0.0))
        throw std::invalid_argument("PWL-IF: requires alpha > 0");

    const int m = synaptic4d ? 4 : 2;
    auto piece = [&](double a_vv) {
        Mat A = Mat::Zero(m, m);
        A(0, 0) = a_vv;
        A(0, 1) = -1.0;
        A(1, 0) = p.a_w / p.tau;
        A(1, 1) = p.b_w / p.tau;
        if (synaptic4d) {
            A(2, 2) = -p.alpha;
            A(2, 3) = p.alpha;
            A(3, 3) = -p.alpha;
        }
        return A;
    };
    Vec c = Vec::Zero(m);
    c(0) = p.I;

    NodeModel model;
    model.dim = m;
    model.name = synaptic4d ? "pwl_if_synaptic" : "pwl_if";
    model.regions = {{"L", piece(p.a_L), c, -std::numeric_limits<double>::infinity(), 0.0},
                     {"R", piece(p.a_R), c, 0.0, std::numeric_limits<double>::infinity()}};

    Vec e0 = Vec::Zero(m);
    e0(0) = 1.0;
    SwitchPlane sw{e0, 0.0, PlaneKind::Switch, {}};

    Mat Dg = Mat::Identity(m, m);
    Dg(0, 0) = 0.0;
    Vec g0 = Vec::Zero(m);
    g0(0) = p.v_r;
    g0(1) = p.kappa / p.tau;
    if (synaptic4d) g0(3) = p.alpha;
    SwitchPlane fire{e0, p.v_th, PlaneKind::Fire, {Dg, g0}};

    model.planes = {sw, fire};
    return model;
}

NodeModel build_absolute(const AbsoluteParams& p) {
    if (!(p.g > 0.0 && p.g < 1.0))
        throw std::invalid_argument("absolute: requires 0 < g < 1");
    if (!(p.g * p.wbar < p.vbar))
        throw std::invalid_argument("absolute: requires g*wbar < vbar");

    Mat AL(2, 2), AR(2, 2);
    AL << -1.0, -1.0, 1.0, -p.g;
    AR << 1.0, -1.0, 1.0, -p.g;
    Vec c(2);
    c << 0.0, p.g * p.wbar - p.vbar;

    NodeModel model;
    model.dim = 2;
    model.name = "absolute";
    model.regions = {{"L", AL, c, -std::numeric_limits<double>::infinity(), 0.0},
                     {"R", AR, c, 0.0, std::numeric_limits<double>::infinity()}};
    Vec e0(2);
    e0 << 1.0, 0.0;
    model.planes = {{e0, 0.0, PlaneKind::Switch, {}}};
    return model;
}

NodeModel build_pml(const PmlParams& p) {
    if (!(p.a / 2 <= p.bstar && p.bstar <= (1 - p.a) / 2))
        throw std::invalid_argument("PML: requires a/2 <= b* <= (1-a)/2");
    if (!(p.a / 2 <= p.b && p.b <= (1 + p.a) / 2))
        throw std::invalid_argument("PML: requires a/2 <= b <= (1+a)/2");
    if (!(p.C > 0.0)) throw std::invalid_argument("PML: requires C > 0");

    // C v' = f(v) - w + I with f piecewise (-v | v-a | 1-v),
    // w' = (v - gamma w + b* gamma - b)/gamma with gamma switching at v = b.
    std::vector<double> breaks = {p.a / 2, p.b, (1 + p.a) / 2};
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    auto make_region = [&](double lo, double hi, int idx) {
        const double mid_raw = std::isinf(lo)   ? hi - 1.0
                               : std::isinf(hi) ? lo + 1.0
                                                : 0.5 * (lo + hi);
        double fslope, fconst;
        if (mid_raw < p.a / 2) {
            fslope = -1.0;
            fconst = 0.0;
        } else if (mid_raw <= (1 + p.a) / 2) {
            fslope = 1.0;
            fconst = -p.a;
        } else {
            fslope = -1.0;
            fconst = 1.0;
        }
        const double gamma = (mid_raw < p.b) ? p.gamma1 : p.gamma2;
        Mat A(2, 2);
        A << fslope / p.C, -1.0 / p.C, 1.0 / gamma, -1.0;
        Vec c(2);
        c << (fconst + p.I) / p.C, p.bstar - p.b / gamma;
        return NodeRegion{"P" + std::to_string(idx), A, c, lo, hi};
    };

    NodeModel model;
    model.dim = 2;
    model.name = "pml";
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> edges;
    edges.push_back(-inf);
    edges.insert(edges.end(), breaks.begin(), breaks.end());
    edges.push_back(inf);
    for (size_t i = 0; i + 1 < edges.size(); ++i)
        model.regions.push_back(make_region(edges[i], edges[i + 1], static_cast<int>(i)));

    Vec e0(2);
    e0 << 1.0, 0.0;
    for (double bp : breaks) model.planes.push_back({e0, bp, PlaneKind::Switch, {}});
    return model;
}

PiecewiseAffineSystem single_node(const NodeModel& node) {
    PiecewiseAffineSystem sys;
    sys.node = node;
    sys.n_nodes = 1;
    sys.name = node.name;
    return sys;
}

PiecewiseAffineSystem build_network(const NodeModel& node, const CouplingSpec& coupling) {
    if (coupling.h_out >= node.dim || coupling.h_in >= node.dim)
        throw std::invalid_argument("build_network: H component outside node dimension");
    if (coupling.matrix.rows() != coupling.matrix.cols())
        throw std::invalid_argument("build_network: coupling matrix must be square");
    if (coupling.mode == CouplingMode::Laplacian &&
        coupling.matrix.rowwise().sum().lpNorm<Eigen::Infinity>() > 1e-12)
        throw std::invalid_argument("build_network: Laplacian coupling needs zero row sums");
    PiecewiseAffineSystem sys;
    sys.node = node;
    sys.n_nodes = static_cast<int>(coupling.matrix.rows());
    sys.coupling = coupling;
    sys.name = node.name + "_network";
    return sys;
}

CouplingSpec ring_coupling(int N, double d) {
    if (N < 3 || N % 2 == 0)
        throw std::invalid_argument("ring_coupling: N must be odd and >= 3");
    if (!(d > 0.0)) throw std::invalid_argument("ring_coupling: d must be positive");

    // a solves sum_j (1 - a x_j/d) exp(-x_j/d) = 0, self-term included.
    double num = 0.0, den = 0.0;
    for (int j = 0; j < N; ++j) {
        const double x = std::min(j, N - j);
        num += std::exp(-x / d);
        den += (x / d) * std::exp(-x / d);
    }
    const double a = num / den;

    Mat W(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            const double x = std::min(std::abs(i - j), N - std::abs(i - j));
            W(i, j) = (1.0 - a * x / d) * std::exp(-x / d);
        }

    CouplingSpec cs;
    cs.matrix = W;
    cs.mode = CouplingMode::Adjacency;
    return cs;
}

CVec ring_eigenvalues(const CouplingSpec& ring) {
    const int N = static_cast<int>(ring.matrix.rows());
    CVec lambda(N);
    for (int l = 0; l < N; ++l) {
        std::complex<double> sum = 0.0;
        for (int j = 0; j < N; ++j)
            sum += ring.matrix(0, j) * std::polar(1.0, 2.0 * M_PI * l * j / N);
        lambda(l) = sum;
    }
    return lambda;
}

Mat five_node_laplacian() {
    Mat G(5, 5);
    G << 3, -1, 0, -1, -1,
        -1, 3, -1, 0, -1,
        0, -1, 3, -1, -1,
        -1, 0, -1, 3, -1,
        -1, -1, -1, -1, 4;
    return G;
}

bool partition_balanced(const Mat& G, const std::vector<std::vector<int>>& blocks,
                        double tol) {
    for (const auto& Ck : blocks)
        for (const auto& Cl : blocks) {
            double ref = 0.0;
            bool first = true;
            for (int i : Ck) {
                double s = 0.0;
                for (int j : Cl) s += G(i, j);
                if (first) {
                    ref = s;
                    first = false;
                } else if (std::abs(s - ref) > tol) {
                    return false;
                }
            }
        }
    return true;
}

PiecewiseAffineSystem quotient_system(const PiecewiseAffineSystem& network,
                                      const std::vector<std::vector<int>>& blocks) {
    if (!network.coupling)
        throw std::invalid_argument("quotient_system: network has no coupling");
    const Mat& G = network.coupling->matrix;
    const int M = static_cast<int>(blocks.size());
    Mat Ghat(M, M);
    for (int k = 0; k < M; ++k)
        for (int l = 0; l < M; ++l) {
            double ref = 0.0;
            bool first = true;
            for (int i : blocks[k]) {
                double s = 0.0;
                for (int j : blocks[l]) s += G(i, j);
                if (first) {
                    ref = s;
                    first = false;
                } else if (std::abs(s - ref) > 1e-12) {
                    throw std::invalid_argument(
                        "quotient_system: partition not flow-invariant (row sums differ)");
                }
            }
            Ghat(k, l) = ref;
        }
    PiecewiseAffineSystem q;
    q.node = network.node;
    q.n_nodes = M;
    CouplingSpec cs = *network.coupling;
    cs.matrix = Ghat;
    q.coupling = cs;
    q.name = network.name + "_quotient";
    return q;
}

}  // namespace pwlnet
