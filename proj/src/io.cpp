#include "pwlnet/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using nlohmann::json;

namespace pwlnet::io {

void write_text_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string());
        out << content;
    }
    fs::rename(tmp, target);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

Mat read_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open matrix file " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::vector<double> row;
        double v;
        while (ls >> v) row.push_back(v);
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("empty matrix file " + path);
    const size_t cols = rows.front().size();
    Mat M(rows.size(), cols);
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != cols)
            throw std::runtime_error("ragged matrix file " + path);
        for (size_t j = 0; j < cols; ++j) M(i, j) = rows[i][j];
    }
    return M;
}

std::string trajectory_csv(const PiecewiseAffineSystem& sys, const Trajectory& traj,
                           double dt_sample) {
    std::ostringstream os;
    os << "t";
    for (int i = 0; i < sys.dim(); ++i) os << ",z" << i;
    os << "\n";
    for (const auto& [t, z] : sample_trajectory(sys, traj, dt_sample)) {
        os << fmt(t);
        for (int i = 0; i < z.size(); ++i) os << "," << fmt(z[i]);
        os << "\n";
    }
    return os.str();
}

std::string events_csv(const PiecewiseAffineSystem& sys, const Trajectory& traj) {
    std::ostringstream os;
    os << "time,plane,node,kind\n";
    for (const auto& ev : traj.events)
        os << fmt(ev.time) << "," << ev.plane << "," << sys.plane_ref(ev.plane).node << ","
           << (ev.kind == PlaneKind::Fire ? "fire" : "switch") << "\n";
    return os.str();
}

std::string raster_csv(const PiecewiseAffineSystem& sys, const Trajectory& traj) {
    std::ostringstream os;
    os << "node,time\n";
    for (const auto& ev : traj.events)
        if (ev.kind == PlaneKind::Fire)
            os << sys.plane_ref(ev.plane).node << "," << fmt(ev.time) << "\n";
    return os.str();
}

std::string msf_grid_csv(const MSFGrid& grid) {
    std::ostringstream os;
    os << "re,im,msf\n";
    for (int iy = 0; iy < grid.ny; ++iy)
        for (int ix = 0; ix < grid.nx; ++ix)
            os << fmt(grid.re(ix)) << "," << fmt(grid.im(iy)) << ","
               << fmt(grid.at(ix, iy)) << "\n";
    return os.str();
}

std::string msf_contour_csv(const MSFGrid& grid) {
    std::ostringstream os;
    os << "segment,re0,im0,re1,im1\n";
    for (size_t s = 0; s < grid.contour.size(); ++s) {
        const auto& seg = grid.contour[s];
        os << s << "," << fmt(seg[0]) << "," << fmt(seg[1]) << "," << fmt(seg[2]) << ","
           << fmt(seg[3]) << "\n";
    }
    return os.str();
}

std::string multipliers_csv(const MonodromyReport& report) {
    std::ostringstream os;
    os << "block,re,im\n";
    for (size_t b = 0; b < report.block_multipliers.size(); ++b) {
        const CVec& m = report.block_multipliers[b];
        for (int k = 0; k < m.size(); ++k)
            os << b << "," << fmt(m[k].real()) << "," << fmt(m[k].imag()) << "\n";
    }
    return os.str();
}

std::string branches_csv(const std::vector<Branch>& branches) {
    std::ostringstream os;
    os << "state,sigma,norm,stable\n";
    for (const auto& br : branches)
        for (const auto& pt : br.points)
            os << br.state_id << "," << fmt(pt.param) << "," << fmt(pt.norm) << ","
               << (pt.stable ? 1 : 0) << "\n";
    return os.str();
}

namespace {

const char* type_name(BifurcationType t) {
    switch (t) {
        case BifurcationType::Tangent: return "tangent";
        case BifurcationType::PeriodDoubling: return "period_doubling";
        case BifurcationType::Torus: return "torus";
        case BifurcationType::BranchEnd: return "branch_end";
        case BifurcationType::Degenerate: return "degenerate";
    }
    return "?";
}

}  // namespace

std::string bifurcations_csv(const std::vector<Branch>& branches) {
    std::ostringstream os;
    os << "state,sigma_lo,sigma_hi,type,block\n";
    for (const auto& br : branches)
        for (const auto& ev : br.events)
            os << br.state_id << "," << fmt(ev.param_lo) << "," << fmt(ev.param_hi) << ","
               << type_name(ev.type) << "," << ev.block << "\n";
    return os.str();
}

json orbit_json(const PeriodicOrbit& orbit) {
    json j;
    j["period"] = orbit.period;
    j["residual"] = orbit.residual;
    j["times"] = orbit.times;
    j["durations"] = orbit.durations;
    j["start"] = std::vector<double>(orbit.start.begin(), orbit.start.end());
    json evs = json::array();
    for (int i = 0; i < orbit.sequence.size(); ++i) {
        json e;
        e["plane"] = orbit.sequence.events[i].plane;
        e["kind"] = orbit.sequence.events[i].kind == PlaneKind::Fire ? "fire" : "switch";
        e["label"] = orbit.sequence.labels[i];
        e["state_minus"] = std::vector<double>(orbit.states_minus[i].begin(),
                                               orbit.states_minus[i].end());
        e["state_plus"] = std::vector<double>(orbit.states_plus[i].begin(),
                                              orbit.states_plus[i].end());
        evs.push_back(std::move(e));
    }
    j["events"] = std::move(evs);
    return j;
}

json partition_json(const ClusterPartition& p) {
    json j;
    j["blocks"] = p.blocks;
    switch (p.provenance) {
        case Provenance::Symmetry: j["provenance"] = "symmetry"; break;
        case Provenance::Laplacian: j["provenance"] = "laplacian"; break;
        case Provenance::Manual: j["provenance"] = "manual"; break;
    }
    if (!p.subgroup.elements.empty()) j["subgroup_order"] = p.subgroup.order();
    if (!p.parent_blocks.empty()) {
        j["parent_blocks"] = p.parent_blocks;
        j["merge_groups"] = p.merge_groups;
    }
    return j;
}

json catalog_json(const std::vector<ClusterPartition>& symmetry,
                  const LaplacianEnumeration& laplacian) {
    json j;
    j["symmetry"] = json::array();
    for (const auto& p : symmetry) j["symmetry"].push_back(partition_json(p));
    j["laplacian"] = json::array();
    for (const auto& p : laplacian.partitions) j["laplacian"].push_back(partition_json(p));
    j["laplacian_truncated"] = laplacian.truncated;
    return j;
}

namespace {

json matrix_json(const Mat& M) {
    json rows = json::array();
    for (int i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (int c = 0; c < M.cols(); ++c) row.push_back(M(i, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

json blockdiag_json(const BlockDiagonalization& bd) {
    json j;
    j["Q"] = matrix_json(bd.Q);
    j["transformed"] = matrix_json(bd.transformed);
    j["partition"] = partition_json(bd.partition);
    json blocks = json::array();
    for (const auto& b : bd.blocks) {
        json e;
        e["start"] = b.start;
        e["size"] = b.size;
        e["tag"] = b.tag == BlockTag::Synchronous ? "synchronous" : "transverse";
        blocks.push_back(std::move(e));
    }
    j["blocks"] = std::move(blocks);
    return j;
}

json report_json(const MonodromyReport& report) {
    json j;
    j["stable"] = report.stable;
    j["trivial_index"] = report.trivial_index;
    j["max_nontrivial_abs"] = report.max_nontrivial_abs;
    j["distance_to_unit"] = report.distance_to_unit;
    json mult = json::array();
    for (int k = 0; k < report.multipliers.size(); ++k)
        mult.push_back({report.multipliers[k].real(), report.multipliers[k].imag()});
    j["multipliers"] = std::move(mult);
    json expo = json::array();
    for (int k = 0; k < report.exponents.size(); ++k)
        expo.push_back({report.exponents[k].real(), report.exponents[k].imag()});
    j["exponents"] = std::move(expo);
    return j;
}

}  // namespace pwlnet::io
